#include "hyda/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hyda/rng.hpp"

namespace hyda {

const ModalityDesc* CohortDataset::find_modality(const std::string& name) const {
    for (const auto& m : modalities)
        if (m.name == name) return &m;
    return nullptr;
}

std::vector<int64_t> CohortDataset::labels() const {
    std::vector<int64_t> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) out.push_back(s.label);
    return out;
}

void CohortDataset::validate() const {
    for (const auto& s : subjects) {
        if (s.label < 0 || s.label >= num_classes) {
            throw LabelError("subject " + s.subject_id + " has label " + std::to_string(s.label) +
                             " outside [0," + std::to_string(num_classes) + ")");
        }
        for (const auto& m : modalities) {
            if (m.kind == ModalityKind::imaging) {
                auto e = s.embeddings.find(m.name);
                auto f = s.feature_maps.find(m.name);
                if (e == s.embeddings.end() || f == s.feature_maps.end()) {
                    throw FormatError("subject " + s.subject_id + " is missing modality " + m.name);
                }
                if (e->second->numel() != m.emb_dim || f->second->shape != m.map_shape) {
                    throw ShapeError("subject " + s.subject_id + " modality " + m.name +
                                     " does not match its descriptor");
                }
                const int64_t vol = m.map_shape[2] * m.map_shape[3] * m.map_shape[4];
                if (m.emb_dim % vol != 0) {
                    throw ConfigError("modality " + m.name + ": emb_dim " +
                                      std::to_string(m.emb_dim) + " not divisible by D*H*W=" +
                                      std::to_string(vol));
                }
            } else {
                if (!s.tabular || s.tabular->numel() != m.raw_dim) {
                    throw FormatError("subject " + s.subject_id + " is missing tabular features");
                }
            }
        }
    }
}

uint64_t CohortDataset::shape_fingerprint() const {
    std::string sig;
    sig += "N=" + std::to_string(subjects.size()) + ";K=" + std::to_string(num_classes) + ";";
    for (const auto& m : modalities) {
        sig += m.name + ":" + (m.kind == ModalityKind::imaging ? "img" : "tab") + ":" +
               std::to_string(m.emb_dim) + ":" + shape_str(m.map_shape) + ":" +
               std::to_string(m.raw_dim) + ";";
    }
    return fnv1a64(sig.data(), sig.size());
}

namespace {

// Largest-remainder apportionment with the majority weight on class 0.
std::vector<int64_t> class_counts(int64_t n, int64_t k, double ratio) {
    std::vector<double> weights(static_cast<size_t>(k), 1.0);
    weights[0] = ratio;
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<int64_t> counts(static_cast<size_t>(k));
    std::vector<std::pair<double, int64_t>> rema;
    int64_t assigned = 0;
    for (int64_t c = 0; c < k; ++c) {
        const double exact = n * weights[static_cast<size_t>(c)] / total;
        counts[static_cast<size_t>(c)] = static_cast<int64_t>(std::floor(exact));
        assigned += counts[static_cast<size_t>(c)];
        rema.emplace_back(exact - std::floor(exact), c);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int64_t i = 0; i < n - assigned; ++i) counts[static_cast<size_t>(rema[i].second)]++;
    for (int64_t c = 0; c < k; ++c) {
        if (counts[static_cast<size_t>(c)] < 2) {
            throw ConfigError("synth_cohort: class " + std::to_string(c) + " would get " +
                              std::to_string(counts[static_cast<size_t>(c)]) +
                              " subjects; infeasible class sizes");
        }
    }
    return counts;
}

}  // namespace

CohortDataset synth_cohort(const SynthSpec& spec, uint64_t seed) {
    if (spec.subjects < 2 * spec.classes) {
        throw ConfigError("synth_cohort: need at least 2K subjects, got N=" +
                          std::to_string(spec.subjects) + " K=" + std::to_string(spec.classes));
    }
    if (spec.imbalance_ratio < 1.0) {
        throw ConfigError("synth_cohort: imbalance_ratio must be >= 1");
    }
    if (spec.complementarity < 0.0 || spec.complementarity > 1.0) {
        throw ConfigError("synth_cohort: complementarity must lie in [0,1]");
    }
    const int64_t vol = spec.map_d * spec.map_h * spec.map_w;
    if (spec.emb_dim % vol != 0) {
        throw ConfigError("synth_cohort: emb_dim " + std::to_string(spec.emb_dim) +
                          " must be divisible by D*H*W=" + std::to_string(vol));
    }

    const int64_t n = spec.subjects, k = spec.classes;
    const int64_t m_total = spec.imaging_modalities + (spec.tabular ? 1 : 0);
    const auto counts = class_counts(n, k, spec.imbalance_ratio);

    CohortDataset ds;
    ds.num_classes = k;
    for (int64_t m = 0; m < spec.imaging_modalities; ++m) {
        ModalityDesc d;
        d.name = m == 0 ? "mri" : (m == 1 ? "pet" : "img" + std::to_string(m + 1));
        d.kind = ModalityKind::imaging;
        d.emb_dim = spec.emb_dim;
        d.map_shape = {1, spec.map_channels, spec.map_d, spec.map_h, spec.map_w};
        ds.modalities.push_back(d);
    }
    if (spec.tabular) {
        ModalityDesc d;
        d.name = "tab";
        d.kind = ModalityKind::tabular;
        d.emb_dim = spec.tabular_emb_dim;
        d.raw_dim = spec.tabular_dim;
        ds.modalities.push_back(d);
    }

    // Fixed per-modality structure: projection matrices, blob geometry, the
    // tabular transform. Drawn from a structure stream independent of the
    // per-subject stream.
    Rng structure(mix_seed(seed, 101));
    std::vector<std::vector<double>> proj_mat(static_cast<size_t>(m_total));
    std::vector<std::vector<double>> proj_off(static_cast<size_t>(m_total));
    for (int64_t m = 0; m < m_total; ++m) {
        const int64_t width = m < spec.imaging_modalities ? spec.emb_dim : 0;
        proj_mat[static_cast<size_t>(m)].resize(static_cast<size_t>(width * k));
        for (auto& v : proj_mat[static_cast<size_t>(m)])
            v = structure.normal() / std::sqrt(static_cast<double>(k));
        proj_off[static_cast<size_t>(m)].resize(static_cast<size_t>(width));
        for (auto& v : proj_off[static_cast<size_t>(m)]) v = structure.uniform(-0.5, 0.5);
    }
    struct Blob {
        double cx, cy, cz, base_width;
        std::vector<double> amp_dir, width_dir;
    };
    std::vector<std::vector<Blob>> blobs(static_cast<size_t>(spec.imaging_modalities));
    for (int64_t m = 0; m < spec.imaging_modalities; ++m) {
        for (int64_t c = 0; c < spec.map_channels; ++c) {
            Blob b;
            b.cz = structure.uniform(0.0, static_cast<double>(spec.map_d - 1));
            b.cy = structure.uniform(0.0, static_cast<double>(spec.map_h - 1));
            b.cx = structure.uniform(0.0, static_cast<double>(spec.map_w - 1));
            b.base_width = structure.uniform(0.8, 1.6);
            b.amp_dir.resize(static_cast<size_t>(k));
            b.width_dir.resize(static_cast<size_t>(k));
            for (auto& v : b.amp_dir) v = structure.normal();
            for (auto& v : b.width_dir) v = structure.normal() * 0.5;
            blobs[static_cast<size_t>(m)].push_back(std::move(b));
        }
    }
    std::vector<std::vector<double>> tab_w;
    std::vector<double> tab_c;
    if (spec.tabular) {
        tab_w.resize(static_cast<size_t>(spec.tabular_dim));
        tab_c.resize(static_cast<size_t>(spec.tabular_dim));
        for (int64_t j = 0; j < spec.tabular_dim; ++j) {
            tab_w[static_cast<size_t>(j)].resize(static_cast<size_t>(k));
            for (auto& v : tab_w[static_cast<size_t>(j)]) v = structure.normal();
            tab_c[static_cast<size_t>(j)] = structure.uniform(-0.3, 0.3);
        }
    }

    // Label sequence: class blocks shuffled deterministically.
    std::vector<int64_t> labels;
    for (int64_t c = 0; c < k; ++c)
        labels.insert(labels.end(), static_cast<size_t>(counts[static_cast<size_t>(c)]), c);
    Rng label_rng(mix_seed(seed, 102));
    label_rng.shuffle(labels);

    Rng subj(mix_seed(seed, 103));
    const double share_kappa = 1.2;
    for (int64_t i = 0; i < n; ++i) {
        SubjectRecord rec;
        rec.subject_id = "s" + std::to_string(i);
        rec.label = labels[static_cast<size_t>(i)];

        // Latent class vector: the labeled component dominates by construction.
        std::vector<double> z(static_cast<size_t>(k));
        for (auto& v : z) v = 0.3 * subj.normal();
        double zmax = *std::max_element(z.begin(), z.end());
        z[static_cast<size_t>(rec.label)] = zmax + 0.4 + 0.3 * std::fabs(subj.normal());

        // Telescoping shares: proj_m = z + c*kappa*(u_{m-1} - u_m); the mean
        // over modalities recovers z exactly while each single view is noisy.
        std::vector<std::vector<double>> u(static_cast<size_t>(m_total + 1),
                                           std::vector<double>(static_cast<size_t>(k), 0.0));
        for (int64_t m = 1; m < m_total; ++m)
            for (auto& v : u[static_cast<size_t>(m)]) v = subj.normal();
        std::vector<std::vector<double>> proj(static_cast<size_t>(m_total),
                                              std::vector<double>(static_cast<size_t>(k)));
        for (int64_t m = 0; m < m_total; ++m)
            for (int64_t c = 0; c < k; ++c)
                proj[static_cast<size_t>(m)][static_cast<size_t>(c)] =
                    z[static_cast<size_t>(c)] +
                    spec.complementarity * share_kappa *
                        (u[static_cast<size_t>(m)][static_cast<size_t>(c)] -
                         u[static_cast<size_t>(m + 1)][static_cast<size_t>(c)]);

        for (int64_t m = 0; m < spec.imaging_modalities; ++m) {
            const auto& pm = proj[static_cast<size_t>(m)];
            std::vector<double> emb(static_cast<size_t>(spec.emb_dim));
            for (int64_t j = 0; j < spec.emb_dim; ++j) {
                double v = proj_off[static_cast<size_t>(m)][static_cast<size_t>(j)];
                for (int64_t c = 0; c < k; ++c)
                    v += proj_mat[static_cast<size_t>(m)][static_cast<size_t>(j * k + c)] *
                         pm[static_cast<size_t>(c)];
                emb[static_cast<size_t>(j)] = v + spec.noise_sigma * subj.normal();
            }
            const std::string& name = ds.modalities[static_cast<size_t>(m)].name;
            rec.embeddings[name] = Tensor::create({spec.emb_dim}, std::move(emb));

            std::vector<double> map(static_cast<size_t>(spec.map_channels * vol), 0.0);
            for (int64_t c = 0; c < spec.map_channels; ++c) {
                const Blob& b = blobs[static_cast<size_t>(m)][static_cast<size_t>(c)];
                double amp = 0.5, wsig = 0.0;
                for (int64_t cc = 0; cc < k; ++cc) {
                    amp += b.amp_dir[static_cast<size_t>(cc)] * pm[static_cast<size_t>(cc)];
                    wsig += b.width_dir[static_cast<size_t>(cc)] * pm[static_cast<size_t>(cc)];
                }
                const double sigma = b.base_width * (1.0 + 0.25 * std::tanh(wsig));
                const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
                double* ch = &map[static_cast<size_t>(c * vol)];
                for (int64_t zz = 0; zz < spec.map_d; ++zz)
                    for (int64_t yy = 0; yy < spec.map_h; ++yy)
                        for (int64_t xx = 0; xx < spec.map_w; ++xx) {
                            const double dz = zz - b.cz, dy = yy - b.cy, dx = xx - b.cx;
                            ch[(zz * spec.map_h + yy) * spec.map_w + xx] =
                                amp * std::exp(-(dz * dz + dy * dy + dx * dx) * inv2s2);
                        }
            }
            auto fmap = Tensor::create({1, spec.map_channels, spec.map_d, spec.map_h, spec.map_w},
                                       std::move(map));
            fmap->frozen = true;
            rec.feature_maps[name] = fmap;
        }

        if (spec.tabular) {
            const auto& pm = proj[static_cast<size_t>(m_total - 1)];
            std::vector<double> tab(static_cast<size_t>(spec.tabular_dim));
            for (int64_t j = 0; j < spec.tabular_dim; ++j) {
                double v = tab_c[static_cast<size_t>(j)];
                for (int64_t c = 0; c < k; ++c)
                    v += tab_w[static_cast<size_t>(j)][static_cast<size_t>(c)] *
                         pm[static_cast<size_t>(c)];
                tab[static_cast<size_t>(j)] = std::tanh(v) + spec.noise_sigma * subj.normal();
            }
            rec.tabular = Tensor::create({spec.tabular_dim}, std::move(tab));
        }
        ds.subjects.push_back(std::move(rec));
    }
    ds.validate();
    return ds;
}

namespace {

void fit_range(std::vector<double>& mn, std::vector<double>& mx, const Tensor& t) {
    for (int64_t j = 0; j < t.numel(); ++j) {
        mn[static_cast<size_t>(j)] = std::min(mn[static_cast<size_t>(j)], t.data[j]);
        mx[static_cast<size_t>(j)] = std::max(mx[static_cast<size_t>(j)], t.data[j]);
    }
}

TensorPtr scaled(const Tensor& t, const std::vector<double>& mn, const std::vector<double>& mx) {
    std::vector<double> out(t.data.size());
    for (int64_t j = 0; j < t.numel(); ++j) {
        const double range = mx[static_cast<size_t>(j)] - mn[static_cast<size_t>(j)];
        double v = range > 0.0 ? (t.data[j] - mn[static_cast<size_t>(j)]) / range : 0.0;
        out[static_cast<size_t>(j)] = std::min(1.0, std::max(0.0, v));
    }
    return Tensor::create(t.shape, std::move(out));
}

}  // namespace

FeatureScaler fit_scaler(const CohortDataset& ds, const std::vector<int64_t>& train_ids) {
    FeatureScaler sc;
    for (const auto& m : ds.modalities) {
        if (m.kind != ModalityKind::imaging) continue;
        std::vector<double> mn(static_cast<size_t>(m.emb_dim), 1e300);
        std::vector<double> mx(static_cast<size_t>(m.emb_dim), -1e300);
        for (int64_t id : train_ids)
            fit_range(mn, mx, *ds.subjects[static_cast<size_t>(id)].embeddings.at(m.name));
        sc.ranges[m.name] = {std::move(mn), std::move(mx)};
    }
    for (const auto& m : ds.modalities) {
        if (m.kind != ModalityKind::tabular) continue;
        std::vector<double> mn(static_cast<size_t>(m.raw_dim), 1e300);
        std::vector<double> mx(static_cast<size_t>(m.raw_dim), -1e300);
        for (int64_t id : train_ids)
            fit_range(mn, mx, *ds.subjects[static_cast<size_t>(id)].tabular);
        sc.ranges["__tabular__"] = {std::move(mn), std::move(mx)};
    }
    return sc;
}

CohortDataset apply_scaler(const CohortDataset& ds, const FeatureScaler& scaler) {
    CohortDataset out = ds;
    for (auto& s : out.subjects) {
        for (auto& [name, emb] : s.embeddings) {
            const auto& r = scaler.ranges.at(name);
            emb = scaled(*emb, r.first, r.second);
        }
        if (s.tabular) {
            const auto& r = scaler.ranges.at("__tabular__");
            s.tabular = scaled(*s.tabular, r.first, r.second);
        }
    }
    return out;
}

CohortDataset normalize(const CohortDataset& ds, const std::vector<int64_t>& train_ids,
                        FeatureScaler* out_scaler) {
    FeatureScaler sc = fit_scaler(ds, train_ids);
    if (out_scaler) *out_scaler = sc;
    return apply_scaler(ds, sc);
}

std::vector<FoldSplit> kfold_split(const std::vector<int64_t>& labels, int64_t folds,
                                   uint64_t seed) {
    if (folds < 2) throw ConfigError("kfold_split: folds must be >= 2");
    const int64_t n = static_cast<int64_t>(labels.size());
    int64_t k = 0;
    for (int64_t l : labels) k = std::max(k, l + 1);
    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(k));
    for (int64_t i = 0; i < n; ++i) by_class[static_cast<size_t>(labels[i])].push_back(i);
    for (int64_t c = 0; c < k; ++c) {
        if (static_cast<int64_t>(by_class[static_cast<size_t>(c)].size()) < folds) {
            throw ConfigError("kfold_split: class " + std::to_string(c) + " has " +
                              std::to_string(by_class[static_cast<size_t>(c)].size()) +
                              " members, fewer than folds=" + std::to_string(folds));
        }
    }

    std::vector<std::vector<int64_t>> val(static_cast<size_t>(folds));
    std::vector<int64_t> fold_total(static_cast<size_t>(folds), 0);
    Rng rng(mix_seed(seed, 201));
    // Per class: shuffle, deal base chunks, then hand the remainder to the
    // currently smallest folds so validation sizes stay as equal as possible.
    for (int64_t c = 0; c < k; ++c) {
        auto ids = by_class[static_cast<size_t>(c)];
        rng.shuffle(ids);
        const int64_t base = static_cast<int64_t>(ids.size()) / folds;
        const int64_t rem = static_cast<int64_t>(ids.size()) % folds;
        std::vector<int64_t> order(static_cast<size_t>(folds));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            return fold_total[static_cast<size_t>(a)] < fold_total[static_cast<size_t>(b)];
        });
        std::vector<int64_t> take(static_cast<size_t>(folds), base);
        for (int64_t r = 0; r < rem; ++r) take[static_cast<size_t>(order[static_cast<size_t>(r)])]++;
        size_t pos = 0;
        for (int64_t f = 0; f < folds; ++f) {
            for (int64_t t = 0; t < take[static_cast<size_t>(f)]; ++t)
                val[static_cast<size_t>(f)].push_back(ids[pos++]);
            fold_total[static_cast<size_t>(f)] += take[static_cast<size_t>(f)];
        }
    }

    std::vector<FoldSplit> out;
    for (int64_t f = 0; f < folds; ++f) {
        FoldSplit split;
        split.fold_index = f;
        std::vector<char> in_val(static_cast<size_t>(n), 0);
        for (int64_t id : val[static_cast<size_t>(f)]) in_val[static_cast<size_t>(id)] = 1;
        for (int64_t i = 0; i < n; ++i)
            (in_val[static_cast<size_t>(i)] ? split.val_ids : split.train_ids).push_back(i);
        std::sort(split.val_ids.begin(), split.val_ids.end());
        out.push_back(std::move(split));
    }
    return out;
}

}  // namespace hyda
