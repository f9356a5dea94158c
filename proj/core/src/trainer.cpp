#include "hyda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "hyda/optimizer.hpp"
#include "hyda/rng.hpp"

namespace hyda {

int64_t minority_class(const CohortDataset& ds) {
    std::vector<int64_t> counts(static_cast<size_t>(ds.num_classes), 0);
    for (const auto& s : ds.subjects) counts[static_cast<size_t>(s.label)]++;
    int64_t best = 0;
    for (int64_t c = 1; c < ds.num_classes; ++c) {
        if (counts[static_cast<size_t>(c)] <= counts[static_cast<size_t>(best)]) best = c;
    }
    return best;
}

namespace {

double epoch_lr(const RunConfig& cfg, int64_t epoch) {
    double lr = cfg.lr;
    if (!cfg.schedule) return lr;
    const auto& s = *cfg.schedule;
    if (s.warmup_epochs > 0 && epoch < s.warmup_epochs) {
        lr *= static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs);
    }
    if (s.decay_epoch >= 0 && epoch >= s.decay_epoch) lr *= s.decay_gamma;
    return lr;
}

// Chunk the shuffled order into mini-batches; a short tail that cannot host
// a k-neighborhood is merged into the previous batch.
std::vector<std::vector<int64_t>> make_batches(const std::vector<int64_t>& order,
                                               int64_t batch_size, int64_t k) {
    std::vector<std::vector<int64_t>> batches;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), i + static_cast<size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<int64_t>(i),
                             order.begin() + static_cast<int64_t>(end));
    }
    if (batches.size() > 1 && static_cast<int64_t>(batches.back().size()) < k) {
        auto tail = std::move(batches.back());
        batches.pop_back();
        batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    }
    return batches;
}

std::vector<int64_t> labels_of(const CohortDataset& ds, const std::vector<int64_t>& ids) {
    std::vector<int64_t> y;
    y.reserve(ids.size());
    for (int64_t id : ids) y.push_back(ds.subjects[static_cast<size_t>(id)].label);
    return y;
}

void assert_inactive_grads_zero(const ModelParams& params,
                                const std::set<std::string>& active) {
    for (const auto& it : params.items()) {
        if (active.count(it.name)) continue;
        for (double g : it.value->grad) {
            if (g != 0.0) {
                throw InternalError("gradient leaked into inactive parameter " + it.name);
            }
        }
    }
}

std::vector<std::vector<double>> rows_of(const TensorPtr& p) {
    std::vector<std::vector<double>> rows;
    const int64_t n = p->shape[0], k = p->shape[1];
    for (int64_t i = 0; i < n; ++i) {
        rows.emplace_back(p->data.begin() + i * k, p->data.begin() + (i + 1) * k);
    }
    return rows;
}

}  // namespace

FoldResult train_fold(const RunConfig& cfg, const CohortDataset& ds, const FoldSplit& split) {
    validate_config(cfg, ds);
    if (cfg.k > static_cast<int64_t>(split.train_ids.size()) ||
        cfg.k > static_cast<int64_t>(split.val_ids.size())) {
        throw ConfigError("k=" + std::to_string(cfg.k) + " exceeds a split size (train " +
                          std::to_string(split.train_ids.size()) + ", val " +
                          std::to_string(split.val_ids.size()) + ")");
    }

    const uint64_t fold_seed = cfg.seed + static_cast<uint64_t>(split.fold_index);
    FeatureScaler scaler;
    const CohortDataset norm = normalize(ds, split.train_ids, &scaler);
    const ModelDims dims = derive_dims(norm, cfg);
    ModelParams params = init_model_params(dims, fold_seed);
    const std::set<std::string> active = active_param_names(dims, cfg.ablation);

    AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay_hg, 0.0});
    Rng shuffle_rng(mix_seed(fold_seed, 401));
    Rng dropout_rng(mix_seed(fold_seed, 402));

    const auto val_labels = labels_of(norm, split.val_ids);
    const int64_t positive = minority_class(norm);

    FoldResult result;
    result.summary.fold = split.fold_index;
    result.val_ids = split.val_ids;

    double best_val = std::numeric_limits<double>::infinity();
    ModelParams best_params;
    int64_t best_opt_step = 0;
    std::map<std::string, std::vector<double>> best_m, best_v;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.set_lr(epoch_lr(cfg, epoch));
        std::vector<int64_t> order = split.train_ids;
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        const auto batches = make_batches(order, cfg.batch_size, cfg.k);
        for (const auto& batch : batches) {
            auto fwd = forward_batch(norm, batch, params, dims, cfg, true, &dropout_rng);
            auto lb = batch_loss(fwd, labels_of(norm, batch), cfg);
            params.zero_grads();
            lb.total_node->backward();
            assert_inactive_grads_zero(params, active);
            opt.step(params, active);
            epoch_loss += lb.total;
        }
        result.summary.train_loss.push_back(epoch_loss / static_cast<double>(batches.size()));

        auto vfwd = forward_batch(norm, split.val_ids, params, dims, cfg, false, nullptr);
        auto vlb = batch_loss(vfwd, val_labels, cfg);
        result.summary.val_loss.push_back(vlb.total);
        if (vlb.total < best_val) {
            best_val = vlb.total;
            result.summary.best_epoch = epoch;
            best_params = params.clone(true);
            best_opt_step = opt.step_count();
            best_m = opt.first_moments();
            best_v = opt.second_moments();
        }
        if (cfg.schedule && cfg.schedule->early_stop_patience > 0 &&
            epoch - result.summary.best_epoch >= cfg.schedule->early_stop_patience) {
            break;
        }
    }

    auto final_fwd = forward_batch(norm, split.val_ids, best_params, dims, cfg, false, nullptr);
    result.summary.metrics = compute_metrics(final_fwd.p_final, val_labels, positive);
    result.val_p_final = rows_of(final_fwd.p_final);

    result.checkpoint.config = cfg;
    result.checkpoint.data_fingerprint = ds.shape_fingerprint();
    result.checkpoint.epoch = result.summary.best_epoch;
    result.checkpoint.fold_index = split.fold_index;
    result.checkpoint.params = std::move(best_params);
    result.checkpoint.scaler = scaler;
    result.checkpoint.opt_step = best_opt_step;
    result.checkpoint.opt_m = std::move(best_m);
    result.checkpoint.opt_v = std::move(best_v);
    return result;
}

EvalResult evaluate(const Checkpoint& ckpt, const CohortDataset& ds,
                    const std::vector<int64_t>& ids) {
    const uint64_t have = ds.shape_fingerprint();
    if (ckpt.data_fingerprint != have) {
        throw ConfigError("checkpoint was trained against data fingerprint " +
                          std::to_string(ckpt.data_fingerprint) + " but the dataset has " +
                          std::to_string(have));
    }
    const CohortDataset norm = apply_scaler(ds, ckpt.scaler);
    const ModelDims dims = derive_dims(norm, ckpt.config);
    auto fwd = forward_batch(norm, ids, ckpt.params, dims, ckpt.config, false, nullptr);
    EvalResult out;
    out.ids = ids;
    out.loss = batch_loss(fwd, labels_of(norm, ids), ckpt.config);
    out.metrics = compute_metrics(fwd.p_final, labels_of(norm, ids), minority_class(norm));
    out.p_final = rows_of(fwd.p_final);
    return out;
}

namespace {

Metrics metric_mean(const std::vector<FoldSummary>& folds) {
    Metrics m;
    m.binary = folds.front().metrics.binary;
    for (const auto& f : folds) {
        m.acc += f.metrics.acc;
        m.f1 += f.metrics.f1;
        m.spe += f.metrics.spe;
        m.sen += f.metrics.sen;
        m.auc += f.metrics.auc;
    }
    const double n = static_cast<double>(folds.size());
    m.acc /= n; m.f1 /= n; m.spe /= n; m.sen /= n; m.auc /= n;
    return m;
}

Metrics metric_std(const std::vector<FoldSummary>& folds, const Metrics& mean) {
    Metrics s;
    s.binary = mean.binary;
    if (folds.size() < 2) return s;
    for (const auto& f : folds) {
        s.acc += (f.metrics.acc - mean.acc) * (f.metrics.acc - mean.acc);
        s.f1 += (f.metrics.f1 - mean.f1) * (f.metrics.f1 - mean.f1);
        s.spe += (f.metrics.spe - mean.spe) * (f.metrics.spe - mean.spe);
        s.sen += (f.metrics.sen - mean.sen) * (f.metrics.sen - mean.sen);
        s.auc += (f.metrics.auc - mean.auc) * (f.metrics.auc - mean.auc);
    }
    const double n = static_cast<double>(folds.size() - 1);
    s.acc = std::sqrt(s.acc / n);
    s.f1 = std::sqrt(s.f1 / n);
    s.spe = std::sqrt(s.spe / n);
    s.sen = std::sqrt(s.sen / n);
    s.auc = std::sqrt(s.auc / n);
    return s;
}

}  // namespace

RunReport cross_validate(const RunConfig& cfg, const CohortDataset& ds, int jobs,
                         std::vector<FoldResult>* fold_results) {
    validate_config(cfg, ds);
    const auto splits = kfold_split(ds.labels(), cfg.folds, cfg.seed);
    std::vector<FoldResult> results(splits.size());

    if (jobs <= 1) {
        for (size_t f = 0; f < splits.size(); ++f) results[f] = train_fold(cfg, ds, splits[f]);
    } else {
        // Folds are fully independent (own params, optimizer and RNG streams).
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(splits.size());
        size_t next = 0;
        std::mutex mu;
        auto runner = [&] {
            for (;;) {
                size_t f;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= splits.size()) return;
                    f = next++;
                }
                try {
                    results[f] = train_fold(cfg, ds, splits[f]);
                } catch (...) {
                    errors[f] = std::current_exception();
                }
            }
        };
        const int n_threads = std::min<int>(jobs, static_cast<int>(splits.size()));
        for (int t = 0; t < n_threads; ++t) threads.emplace_back(runner);
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    RunReport report;
    report.config = cfg;
    report.data_fingerprint = ds.shape_fingerprint();
    for (auto& r : results) report.folds.push_back(r.summary);
    report.mean = metric_mean(report.folds);
    report.stddev = metric_std(report.folds, report.mean);
    report.positive_class = minority_class(ds);

    const ModelDims dims = derive_dims(ds, cfg);
    report.total_params = init_model_params(dims, cfg.seed).total_count();
    report.gen_weight_count = kernel_generator_weight_count(cfg.C, cfg.C_hid, cfg.C_out);
    report.gen_product_count = cfg.C * cfg.C_hid + cfg.C_out;
    report.gen_note =
        "stored kernel-generator weights per generator = (C/27)*C_hid + C_out = " +
        std::to_string(report.gen_weight_count) + "; the product form C*C_hid + C_out = " +
        std::to_string(report.gen_product_count) +
        " does not equal the stored count and is reported for comparison only";

    if (fold_results) *fold_results = std::move(results);
    return report;
}

AblationReport run_ablation(const RunConfig& cfg, const CohortDataset& ds, int jobs) {
    AblationReport report;
    for (Ablation a : {Ablation::disc_only, Ablation::hg_only, Ablation::avg_heads,
                       Ablation::full_hyda}) {
        RunConfig row = cfg;
        row.ablation = a;
        report.rows.emplace_back(a, cross_validate(row, ds, jobs));
    }
    return report;
}

SweepReport sweep_k(const RunConfig& cfg, const CohortDataset& ds,
                    const std::vector<int64_t>& k_values, int jobs) {
    SweepReport out;
    out.axis = "k";
    for (int64_t k : k_values) {
        RunConfig point = cfg;
        point.k = k;
        out.points.push_back({std::to_string(k), cross_validate(point, ds, jobs)});
    }
    return out;
}

SweepReport sweep_modalities(const RunConfig& cfg, const CohortDataset& ds,
                             const std::vector<std::vector<std::string>>& subsets, int jobs) {
    SweepReport out;
    out.axis = "modalities";
    for (const auto& subset : subsets) {
        RunConfig point = cfg;
        point.modalities = subset;
        std::string label;
        for (size_t i = 0; i < subset.size(); ++i) {
            if (i) label += ",";
            label += subset[i];
        }
        if (label.empty()) label = "all";
        out.points.push_back({label, cross_validate(point, ds, jobs)});
    }
    return out;
}

}  // namespace hyda
