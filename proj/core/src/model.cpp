#include "hyda/model.hpp"

#include <cmath>

#include "hyda/rng.hpp"

namespace hyda {

ModelDims derive_dims(const CohortDataset& ds, const RunConfig& cfg) {
    validate_config(cfg, ds);
    ModelDims d;
    d.selected = select_modalities(cfg, ds);
    d.K = ds.num_classes;
    d.C = cfg.C;
    d.C_hid = cfg.C_hid;
    d.C_out = cfg.C_out;
    d.C_res = cfg.C_res;
    for (const auto& m : d.selected) {
        d.sum_emb += m.emb_dim;
        if (m.kind == ModalityKind::imaging) {
            d.has_imaging = true;
            if (d.C_res == 0) {
                d.C_res = m.emb_dim / (m.map_shape[2] * m.map_shape[3] * m.map_shape[4]);
            }
        } else {
            d.tab_raw_dim = m.raw_dim;
            d.tab_emb_dim = m.emb_dim;
        }
    }
    return d;
}

namespace {

TensorPtr glorot(Rng& rng, Shape shape, int64_t fan_in, int64_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    const int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = rng.uniform(-limit, limit);
    return Tensor::create(std::move(shape), std::move(data), true);
}

}  // namespace

ModelParams init_model_params(const ModelDims& d, uint64_t seed) {
    Rng rng(mix_seed(seed, 301));
    ModelParams p;
    auto matrix = [&](const std::string& name, int64_t in, int64_t out, DecayGroup g) {
        p.add(name + ".weight", glorot(rng, {in, out}, in, out), g);
        p.add(name + ".bias", Tensor::zeros({out}, true), g);
    };
    auto conv = [&](const std::string& name, int64_t cout, int64_t cin) {
        p.add(name + ".weight", glorot(rng, {cout, cin}, cin, cout), DecayGroup::other);
        p.add(name + ".bias", Tensor::zeros({cout}, true), DecayGroup::other);
    };

    matrix("hg1", d.sum_emb, d.C, DecayGroup::hypergraph);
    matrix("hg2", d.C, d.C, DecayGroup::hypergraph);
    matrix("hgcls", d.C, d.K, DecayGroup::hypergraph);
    conv("gen1.conv1", d.C_hid, d.C / 27);
    conv("gen1.conv2", d.C_out, 1);
    conv("gen2.conv1", d.C_hid, d.C / 27);
    conv("gen2.conv2", d.C_out, 1);
    conv("fuse.conv3", d.C_hid, 2 * d.C_out);
    conv("fuse.conv4", d.C_res, d.C_hid);
    conv("fuse.conv5", d.C_res, d.C_hid);
    if (d.tab_raw_dim > 0) {
        matrix("mlp.fc1", d.tab_raw_dim, d.tab_emb_dim, DecayGroup::other);
        matrix("mlp.fc2", d.tab_emb_dim, d.tab_emb_dim, DecayGroup::other);
    }
    matrix("disc", d.sum_emb, d.K, DecayGroup::other);
    return p;
}

void zero_fusion_params(ModelParams& params) {
    for (auto& it : params.items()) {
        if (it.name.rfind("gen1.", 0) == 0 || it.name.rfind("gen2.", 0) == 0 ||
            it.name.rfind("fuse.", 0) == 0) {
            std::fill(it.value->data.begin(), it.value->data.end(), 0.0);
        }
    }
}

std::set<std::string> active_param_names(const ModelDims& d, Ablation ablation) {
    std::set<std::string> out;
    auto add_prefix = [&](const std::string& prefix) {
        out.insert(prefix + ".weight");
        out.insert(prefix + ".bias");
    };
    const bool hg = ablation != Ablation::disc_only;
    const bool disc = ablation != Ablation::hg_only;
    const bool fusion = ablation == Ablation::full_hyda;
    if (hg) {
        add_prefix("hg1");
        add_prefix("hg2");
        add_prefix("hgcls");
    }
    if (fusion) {
        add_prefix("gen1.conv1");
        add_prefix("gen1.conv2");
        add_prefix("gen2.conv1");
        add_prefix("gen2.conv2");
        add_prefix("fuse.conv3");
        add_prefix("fuse.conv4");
        add_prefix("fuse.conv5");
    }
    if (disc) add_prefix("disc");
    if (d.tab_raw_dim > 0) {
        add_prefix("mlp.fc1");
        add_prefix("mlp.fc2");
    }
    return out;
}

namespace {

HgLayerParams layer(const ModelParams& p, const std::string& name) {
    return {p.find(name + ".weight"), p.find(name + ".bias")};
}

KernelGeneratorParams generator(const ModelParams& p, const std::string& name) {
    return {p.find(name + ".conv1.weight"), p.find(name + ".conv1.bias"),
            p.find(name + ".conv2.weight"), p.find(name + ".conv2.bias")};
}

}  // namespace

BatchForward forward_batch(const CohortDataset& ds, const std::vector<int64_t>& ids,
                           const ModelParams& params, const ModelDims& dims,
                           const RunConfig& cfg, bool training, Rng* dropout_rng) {
    const int64_t b = static_cast<int64_t>(ids.size());
    if (b < 1) throw ConfigError("forward_batch: empty subject list");

    // Per-modality embedding blocks [B, E]. Imaging blocks are frozen data;
    // the tabular block is the MLP output and carries gradient.
    std::vector<TensorPtr> blocks;
    std::vector<size_t> imaging_block_idx;
    for (const auto& m : dims.selected) {
        if (m.kind == ModalityKind::imaging) {
            std::vector<double> rows(static_cast<size_t>(b * m.emb_dim));
            for (int64_t i = 0; i < b; ++i) {
                const auto& e = ds.subjects[static_cast<size_t>(ids[static_cast<size_t>(i)])]
                                    .embeddings.at(m.name);
                std::copy(e->data.begin(), e->data.end(), rows.begin() + i * m.emb_dim);
            }
            imaging_block_idx.push_back(blocks.size());
            blocks.push_back(Tensor::create({b, m.emb_dim}, std::move(rows)));
        } else {
            std::vector<double> rows(static_cast<size_t>(b * m.raw_dim));
            for (int64_t i = 0; i < b; ++i) {
                const auto& t = ds.subjects[static_cast<size_t>(ids[static_cast<size_t>(i)])].tabular;
                std::copy(t->data.begin(), t->data.end(), rows.begin() + i * m.raw_dim);
            }
            auto raw = Tensor::create({b, m.raw_dim}, std::move(rows));
            MlpParams mlp{params.find("mlp.fc1.weight"), params.find("mlp.fc1.bias"),
                          params.find("mlp.fc2.weight"), params.find("mlp.fc2.bias")};
            blocks.push_back(mlp_encode(raw, mlp));
        }
    }

    BatchForward out;
    FusedHypergraph g;
    const bool need_hg = cfg.ablation != Ablation::disc_only;
    if (need_hg) {
        if (cfg.k > b) {
            throw ConfigError("k=" + std::to_string(cfg.k) + " exceeds group size " +
                              std::to_string(b));
        }
        std::vector<Incidence> incidences;
        incidences.reserve(blocks.size());
        for (const auto& block : blocks) {
            incidences.push_back(cfg.backend == Backend::hypergraph
                                     ? knn_hyperedges(block, cfg.k)
                                     : knn_graph_edges(block, cfg.k));
        }
        g = fuse(incidences, blocks);
        TensorPtr x = g.node_features;
        if (training && dropout_rng) {
            x = vertex_feature_dropout(x, cfg.dropout_p, true, *dropout_rng);
        }
        out.f1 = hgconv(g, x, layer(params, "hg1"), true);
        out.f2 = hgconv(g, out.f1, layer(params, "hg2"), true);
        out.p_g = hypergraph_classify(g, out.f2, layer(params, "hgcls"));
    }

    const bool need_disc = cfg.ablation != Ablation::hg_only;
    if (need_disc) {
        std::vector<TensorPtr> enhanced = blocks;
        if (cfg.ablation == Ablation::full_hyda && !imaging_block_idx.empty()) {
            std::vector<std::vector<TensorPtr>> maps;
            std::vector<std::vector<TensorPtr>> x_rows;
            for (size_t bi : imaging_block_idx) {
                const auto& m = dims.selected[bi];
                std::vector<TensorPtr> mrow, xrow;
                for (int64_t i = 0; i < b; ++i) {
                    mrow.push_back(ds.subjects[static_cast<size_t>(ids[static_cast<size_t>(i)])]
                                       .feature_maps.at(m.name));
                    xrow.push_back(ops::select_row(blocks[bi], i));
                }
                maps.push_back(std::move(mrow));
                x_rows.push_back(std::move(xrow));
            }
            auto fused = fuse_all(out.f1, out.f2, maps, x_rows, generator(params, "gen1"),
                                  generator(params, "gen2"),
                                  FusionParams{params.find("fuse.conv3.weight"),
                                               params.find("fuse.conv3.bias"),
                                               params.find("fuse.conv4.weight"),
                                               params.find("fuse.conv4.bias"),
                                               params.find("fuse.conv5.weight"),
                                               params.find("fuse.conv5.bias")});
            for (size_t j = 0; j < imaging_block_idx.size(); ++j) {
                enhanced[imaging_block_idx[j]] = ops::concat_rows(fused[j]);
            }
        }
        auto f_concat = enhanced.size() == 1 ? enhanced[0] : ops::concat_cols(enhanced);
        out.p_d = discriminative_classify(
            f_concat, DiscParams{params.find("disc.weight"), params.find("disc.bias")});
    }

    switch (cfg.ablation) {
        case Ablation::disc_only: out.p_final = out.p_d; break;
        case Ablation::hg_only: out.p_final = out.p_g; break;
        default: out.p_final = average_prediction(out.p_g, out.p_d); break;
    }
    return out;
}

LossBreakdown batch_loss(const BatchForward& fwd, const std::vector<int64_t>& y,
                         const RunConfig& cfg) {
    // Single-head rows train on plain cross-entropy of their own head.
    if (cfg.ablation == Ablation::disc_only) {
        LossBreakdown lb;
        auto ce = cross_entropy(fwd.p_d, y);
        lb.ce_d = ce->item();
        lb.total_node = ce;
        lb.total = lb.ce_d;
        return lb;
    }
    if (cfg.ablation == Ablation::hg_only) {
        LossBreakdown lb;
        auto ce = cross_entropy(fwd.p_g, y);
        lb.ce_g = ce->item();
        lb.total_node = ce;
        lb.total = lb.ce_g;
        return lb;
    }
    return total_loss(fwd.p_g, fwd.p_d, y, cfg.focal_gamma, cfg.focal_alpha);
}

}  // namespace hyda
