#pragma once

// Shared test oracles. Everything here is independent of the library's
// implementation path: naive loop convolutions, the dense hypergraph
// propagation formula, and a plain logistic-regression probe.

#include <cmath>
#include <vector>

#include "hyda/cohort.hpp"
#include "hyda/gradcheck.hpp"
#include "hyda/hypergraph.hpp"
#include "hyda/ops.hpp"
#include "hyda/rng.hpp"

namespace testutil {

inline hyda::TensorPtr random_tensor(hyda::Rng& rng, hyda::Shape shape, double lo = -1.0,
                                     double hi = 1.0, bool requires_grad = false) {
    const int64_t n = hyda::shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return hyda::Tensor::create(std::move(shape), std::move(data), requires_grad);
}

/// Naive pointwise convolution: out[b,o,v] = sum_i w[o,i] x[b,i,v] + bias[o].
inline std::vector<double> pointwise_oracle(const hyda::Tensor& x, const hyda::Tensor& w,
                                            const hyda::Tensor* bias) {
    const int64_t batch = x.shape[0], cin = x.shape[1];
    const int64_t vol = x.shape[2] * x.shape[3] * x.shape[4];
    const int64_t cout = w.shape[0];
    std::vector<double> out(static_cast<size_t>(batch * cout * vol), 0.0);
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t o = 0; o < cout; ++o)
            for (int64_t v = 0; v < vol; ++v) {
                double acc = bias ? bias->data[o] : 0.0;
                for (int64_t i = 0; i < cin; ++i)
                    acc += w.data[o * cin + i] * x.data[(b * cin + i) * vol + v];
                out[(b * cout + o) * vol + v] = acc;
            }
    return out;
}

/// Six-nested-loop cross-correlation with zero padding 1, stride 1.
inline std::vector<double> conv3d_oracle(const hyda::Tensor& x, const hyda::Tensor& w) {
    const int64_t cin = x.shape[1], dd = x.shape[2], hh = x.shape[3], ww = x.shape[4];
    const int64_t cout = w.shape[0];
    std::vector<double> out(static_cast<size_t>(cout * dd * hh * ww), 0.0);
    for (int64_t o = 0; o < cout; ++o)
        for (int64_t z = 0; z < dd; ++z)
            for (int64_t y = 0; y < hh; ++y)
                for (int64_t xx = 0; xx < ww; ++xx) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < cin; ++i)
                        for (int64_t kz = 0; kz < 3; ++kz)
                            for (int64_t ky = 0; ky < 3; ++ky)
                                for (int64_t kx = 0; kx < 3; ++kx) {
                                    const int64_t sz = z + kz - 1, sy = y + ky - 1,
                                                  sx = xx + kx - 1;
                                    if (sz < 0 || sz >= dd || sy < 0 || sy >= hh || sx < 0 ||
                                        sx >= ww)
                                        continue;
                                    acc += w.data[(((o * cin + i) * 3 + kz) * 3 + ky) * 3 + kx] *
                                           x.data[((0 * cin + i) * dd + sz) * hh * ww + sy * ww + sx];
                                }
                    out[((o * dd + z) * hh + y) * ww + xx] = acc;
                }
    return out;
}

/// Dense formula D_v^-1 H D_e^-1 H^T X W + b evaluated with plain matrices.
inline std::vector<double> dense_hgconv_oracle(const hyda::Incidence& g, const hyda::Tensor& x,
                                               const hyda::Tensor& w, const hyda::Tensor& b) {
    const int64_t n = g.num_vertices, e = g.num_edges(), din = x.shape[1], dout = w.shape[1];
    std::vector<double> h(static_cast<size_t>(n * e), 0.0);
    for (int64_t ei = 0; ei < e; ++ei)
        for (int32_t v : g.edges[static_cast<size_t>(ei)]) h[v * e + ei] = 1.0;
    std::vector<double> dv(static_cast<size_t>(n), 0.0), de(static_cast<size_t>(e), 0.0);
    for (int64_t v = 0; v < n; ++v)
        for (int64_t ei = 0; ei < e; ++ei) dv[static_cast<size_t>(v)] += h[v * e + ei];
    for (int64_t ei = 0; ei < e; ++ei)
        for (int64_t v = 0; v < n; ++v) de[static_cast<size_t>(ei)] += h[v * e + ei];

    // edge features: De^-1 H^T X
    std::vector<double> ef(static_cast<size_t>(e * din), 0.0);
    for (int64_t ei = 0; ei < e; ++ei)
        for (int64_t v = 0; v < n; ++v)
            if (h[v * e + ei] != 0.0)
                for (int64_t c = 0; c < din; ++c)
                    ef[ei * din + c] += x.data[v * din + c] / de[static_cast<size_t>(ei)];
    // vertex update: Dv^-1 H ef
    std::vector<double> vf(static_cast<size_t>(n * din), 0.0);
    for (int64_t v = 0; v < n; ++v)
        for (int64_t ei = 0; ei < e; ++ei)
            if (h[v * e + ei] != 0.0)
                for (int64_t c = 0; c < din; ++c)
                    vf[v * din + c] += ef[ei * din + c] / dv[static_cast<size_t>(v)];
    // learnable map
    std::vector<double> out(static_cast<size_t>(n * dout), 0.0);
    for (int64_t v = 0; v < n; ++v)
        for (int64_t j = 0; j < dout; ++j) {
            double acc = b.data[j];
            for (int64_t c = 0; c < din; ++c) acc += vf[v * din + c] * w.data[c * dout + j];
            out[v * dout + j] = acc;
        }
    return out;
}

/// Full-batch gradient-descent logistic regression; returns accuracy (0..1)
/// on (features, labels). Used as a separability / information probe.
class LogisticProbe {
public:
    LogisticProbe(const std::vector<std::vector<double>>& x, const std::vector<int64_t>& y,
                  int iters = 800, double lr = 0.5) {
        const size_t n = x.size(), d = x[0].size();
        w_.assign(d, 0.0);
        b_ = 0.0;
        for (int it = 0; it < iters; ++it) {
            std::vector<double> gw(d, 0.0);
            double gb = 0.0;
            for (size_t i = 0; i < n; ++i) {
                const double p = predict(x[i]);
                const double err = p - static_cast<double>(y[i]);
                for (size_t j = 0; j < d; ++j) gw[j] += err * x[i][j];
                gb += err;
            }
            for (size_t j = 0; j < d; ++j) w_[j] -= lr * gw[j] / static_cast<double>(n);
            b_ -= lr * gb / static_cast<double>(n);
        }
    }

    double predict(const std::vector<double>& x) const {
        double z = b_;
        for (size_t j = 0; j < x.size(); ++j) z += w_[j] * x[j];
        return 1.0 / (1.0 + std::exp(-z));
    }

    double accuracy(const std::vector<std::vector<double>>& x,
                    const std::vector<int64_t>& y) const {
        size_t correct = 0;
        for (size_t i = 0; i < x.size(); ++i) {
            if ((predict(x[i]) >= 0.5 ? 1 : 0) == y[i]) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(x.size());
    }

private:
    std::vector<double> w_;
    double b_ = 0.0;
};

/// Per-subject embedding rows of one modality (or the raw tabular block).
inline std::vector<std::vector<double>> modality_rows(const hyda::CohortDataset& ds,
                                                      const std::string& name) {
    std::vector<std::vector<double>> rows;
    for (const auto& s : ds.subjects) {
        if (name == "tab") {
            rows.push_back(s.tabular->data);
        } else {
            rows.push_back(s.embeddings.at(name)->data);
        }
    }
    return rows;
}

inline std::vector<std::vector<double>> concat_rows(
    const std::vector<std::vector<std::vector<double>>>& blocks) {
    std::vector<std::vector<double>> rows(blocks[0].size());
    for (const auto& block : blocks)
        for (size_t i = 0; i < block.size(); ++i)
            rows[i].insert(rows[i].end(), block[i].begin(), block[i].end());
    return rows;
}

/// Central-difference check of a scalar-valued graph over ad-hoc tensors.
inline double fd_max_rel_error(const std::function<hyda::TensorPtr(hyda::ModelParams&)>& f,
                               std::vector<hyda::TensorPtr> tensors, double h = 1e-4) {
    hyda::ModelParams params;
    int i = 0;
    for (auto& t : tensors) {
        params.add("t" + std::to_string(i++), t, hyda::DecayGroup::other);
    }
    return hyda::finite_diff_check(f, params, h).max_rel_error;
}

}  // namespace testutil
