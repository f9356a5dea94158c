#include "hyda/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>

namespace hyda {
namespace ops {

using detail::make_op;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
}

void require_rank(const char* op, const Tensor& t, size_t rank) {
    if (t.shape.size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_str(t.shape));
    }
}

void accumulate(Tensor& dst, const std::vector<double>& src) {
    dst.ensure_grad();
    for (size_t i = 0; i < src.size(); ++i) dst.grad[i] += src[i];
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("add", *a, *b);
    std::vector<double> out(a->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    return make_op("add", a->shape, std::move(out), {a, b}, [a, b](Tensor& o) {
        if (a->tracked()) accumulate(*a, o.grad);
        if (b->tracked()) accumulate(*b, o.grad);
    });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("sub", *a, *b);
    std::vector<double> out(a->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
    return make_op("sub", a->shape, std::move(out), {a, b}, [a, b](Tensor& o) {
        if (a->tracked()) accumulate(*a, o.grad);
        if (b->tracked()) {
            b->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) b->grad[i] -= o.grad[i];
        }
    });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("mul", *a, *b);
    std::vector<double> out(a->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    return make_op("mul", a->shape, std::move(out), {a, b}, [a, b](Tensor& o) {
        if (a->tracked()) {
            a->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i] * b->data[i];
        }
        if (b->tracked()) {
            b->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) b->grad[i] += o.grad[i] * a->data[i];
        }
    });
}

TensorPtr scale(const TensorPtr& a, double s) {
    std::vector<double> out(a->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * s;
    return make_op("scale", a->shape, std::move(out), {a}, [a, s](Tensor& o) {
        a->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i] * s;
    });
}

TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& b) {
    require_rank("add_rowvec", *x, 2);
    require_rank("add_rowvec", *b, 1);
    const int64_t n = x->shape[0], d = x->shape[1];
    if (b->shape[0] != d) {
        throw ShapeError("add_rowvec: bias " + shape_str(b->shape) + " does not match " +
                         shape_str(x->shape));
    }
    std::vector<double> out(x->data.size());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = x->data[i * d + j] + b->data[j];
    return make_op("add_rowvec", x->shape, std::move(out), {x, b}, [x, b, n, d](Tensor& o) {
        if (x->tracked()) accumulate(*x, o.grad);
        if (b->tracked()) {
            b->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) b->grad[j] += o.grad[i * d + j];
        }
    });
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require_rank("matmul", *a, 2);
    require_rank("matmul", *b, 2);
    const int64_t n = a->shape[0], m = a->shape[1], p = b->shape[1];
    if (b->shape[0] != m) {
        throw ShapeError("matmul: inner dims disagree " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    std::vector<double> out(static_cast<size_t>(n * p), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t k = 0; k < m; ++k) {
            const double av = a->data[i * m + k];
            if (av == 0.0) continue;
            const double* brow = &b->data[k * p];
            double* orow = &out[i * p];
            for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    return make_op("matmul", {n, p}, std::move(out), {a, b}, [a, b, n, m, p](Tensor& o) {
        if (a->tracked()) {
            a->ensure_grad();  // gA = G * B^T
            for (int64_t i = 0; i < n; ++i)
                for (int64_t k = 0; k < m; ++k) {
                    double acc = 0.0;
                    const double* grow = &o.grad[i * p];
                    const double* brow = &b->data[k * p];
                    for (int64_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
                    a->grad[i * m + k] += acc;
                }
        }
        if (b->tracked()) {
            b->ensure_grad();  // gB = A^T * G
            for (int64_t i = 0; i < n; ++i)
                for (int64_t k = 0; k < m; ++k) {
                    const double av = a->data[i * m + k];
                    if (av == 0.0) continue;
                    const double* grow = &o.grad[i * p];
                    double* brow = &b->grad[k * p];
                    for (int64_t j = 0; j < p; ++j) brow[j] += av * grow[j];
                }
        }
    });
}

TensorPtr relu(const TensorPtr& x) {
    std::vector<double> out(x->data.size());
    if (Tensor::kink_scan_active()) {
        double margin = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < out.size(); ++i) {
            const double v = x->data[i];
            out[i] = v > 0.0 ? v : 0.0;
            margin = std::min(margin, std::fabs(v));
        }
        Tensor::note_kink_distance(margin);
    } else {
        for (size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
    }
    return make_op("relu", x->shape, std::move(out), {x}, [x](Tensor& o) {
        x->ensure_grad();  // subgradient 0 at the kink
        for (size_t i = 0; i < o.grad.size(); ++i)
            if (x->data[i] > 0.0) x->grad[i] += o.grad[i];
    });
}

TensorPtr sigmoid(const TensorPtr& x) {
    std::vector<double> out(x->data.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double v = x->data[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return make_op("sigmoid", x->shape, std::move(out), {x}, [x](Tensor& o) {
        x->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) {
            const double s = o.data[i];
            x->grad[i] += o.grad[i] * s * (1.0 - s);
        }
    });
}

TensorPtr activation(const TensorPtr& x, Activation kind) {
    return kind == Activation::relu ? relu(x) : sigmoid(x);
}

TensorPtr softmax_rows(const TensorPtr& x) {
    require_rank("softmax", *x, 2);
    const int64_t n = x->shape[0], k = x->shape[1];
    if (k < 2) throw ShapeError("softmax: needs at least 2 columns, got " + shape_str(x->shape));
    std::vector<double> out(x->data.size());
    for (int64_t i = 0; i < n; ++i) {
        const double* row = &x->data[i * k];
        double mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            out[i * k + j] = std::exp(row[j] - mx);
            sum += out[i * k + j];
        }
        for (int64_t j = 0; j < k; ++j) out[i * k + j] /= sum;
    }
    return make_op("softmax", x->shape, std::move(out), {x}, [x, n, k](Tensor& o) {
        x->ensure_grad();  // gx = s .* (g - <g,s>) per row
        for (int64_t i = 0; i < n; ++i) {
            const double* s = &o.data[i * k];
            const double* g = &o.grad[i * k];
            double dot = 0.0;
            for (int64_t j = 0; j < k; ++j) dot += g[j] * s[j];
            for (int64_t j = 0; j < k; ++j) x->grad[i * k + j] += s[j] * (g[j] - dot);
        }
    });
}

TensorPtr log_elem(const TensorPtr& x) {
    std::vector<double> out(x->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(x->data[i]);
    return make_op("log", x->shape, std::move(out), {x}, [x](Tensor& o) {
        x->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) x->grad[i] += o.grad[i] / x->data[i];
    });
}

TensorPtr pow_const(const TensorPtr& x, double e) {
    std::vector<double> out(x->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::pow(x->data[i], e);
    return make_op("pow", x->shape, std::move(out), {x}, [x, e](Tensor& o) {
        x->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i)
            x->grad[i] += o.grad[i] * e * std::pow(x->data[i], e - 1.0);
    });
}

TensorPtr clamp(const TensorPtr& x, double lo, double hi) {
    std::vector<double> out(x->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, x->data[i]));
    return make_op("clamp", x->shape, std::move(out), {x}, [x, lo, hi](Tensor& o) {
        x->ensure_grad();  // pass-through strictly inside the interval
        for (size_t i = 0; i < o.grad.size(); ++i)
            if (x->data[i] > lo && x->data[i] < hi) x->grad[i] += o.grad[i];
    });
}

TensorPtr rsub_const(double c, const TensorPtr& x) {
    std::vector<double> out(x->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = c - x->data[i];
    return make_op("rsub", x->shape, std::move(out), {x}, [x](Tensor& o) {
        x->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) x->grad[i] -= o.grad[i];
    });
}

TensorPtr sum_all(const TensorPtr& x) {
    double s = 0.0;
    for (double v : x->data) s += v;
    return make_op("sum", {1}, {s}, {x}, [x](Tensor& o) {
        x->ensure_grad();
        for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += o.grad[0];
    });
}

TensorPtr gather_rows(const TensorPtr& p, const std::vector<int64_t>& idx) {
    require_rank("gather_rows", *p, 2);
    const int64_t n = p->shape[0], k = p->shape[1];
    if (static_cast<int64_t>(idx.size()) != n) {
        throw ShapeError("gather_rows: index count " + std::to_string(idx.size()) +
                         " does not match rows of " + shape_str(p->shape));
    }
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        if (idx[i] < 0 || idx[i] >= k) {
            throw LabelError("label " + std::to_string(idx[i]) + " out of range [0," +
                             std::to_string(k) + ") at row " + std::to_string(i));
        }
        out[i] = p->data[i * k + idx[i]];
    }
    return make_op("gather_rows", {n}, std::move(out), {p}, [p, idx, k](Tensor& o) {
        p->ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i)
            p->grad[static_cast<int64_t>(i) * k + idx[i]] += o.grad[i];
    });
}

TensorPtr select_row(const TensorPtr& x, int64_t row) {
    require_rank("select_row", *x, 2);
    const int64_t n = x->shape[0], d = x->shape[1];
    if (row < 0 || row >= n) {
        throw ShapeError("select_row: row " + std::to_string(row) + " out of " + shape_str(x->shape));
    }
    std::vector<double> out(x->data.begin() + row * d, x->data.begin() + (row + 1) * d);
    return make_op("select_row", {1, d}, std::move(out), {x}, [x, row, d](Tensor& o) {
        x->ensure_grad();
        for (int64_t j = 0; j < d; ++j) x->grad[row * d + j] += o.grad[j];
    });
}

TensorPtr concat_cols(const std::vector<TensorPtr>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input list");
    const int64_t n = xs[0]->shape[0];
    int64_t total = 0;
    for (const auto& x : xs) {
        require_rank("concat_cols", *x, 2);
        if (x->shape[0] != n) {
            throw ShapeError("concat_cols: row mismatch " + shape_str(xs[0]->shape) + " vs " +
                             shape_str(x->shape));
        }
        total += x->shape[1];
    }
    std::vector<double> out(static_cast<size_t>(n * total));
    int64_t off = 0;
    for (const auto& x : xs) {
        const int64_t d = x->shape[1];
        for (int64_t i = 0; i < n; ++i)
            std::memcpy(&out[i * total + off], &x->data[i * d], sizeof(double) * d);
        off += d;
    }
    std::vector<TensorPtr> parents(xs.begin(), xs.end());
    return make_op("concat_cols", {n, total}, std::move(out), parents, [xs, n, total](Tensor& o) {
        int64_t off2 = 0;
        for (const auto& x : xs) {
            const int64_t d = x->shape[1];
            if (x->tracked()) {
                x->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) x->grad[i * d + j] += o.grad[i * total + off2 + j];
            }
            off2 += d;
        }
    });
}

TensorPtr concat_rows(const std::vector<TensorPtr>& xs) {
    if (xs.empty()) throw ShapeError("concat_rows: empty input list");
    const int64_t d = xs[0]->shape.size() == 2 ? xs[0]->shape[1] : -1;
    int64_t total = 0;
    for (const auto& x : xs) {
        require_rank("concat_rows", *x, 2);
        if (x->shape[1] != d) {
            throw ShapeError("concat_rows: column mismatch " + shape_str(xs[0]->shape) + " vs " +
                             shape_str(x->shape));
        }
        total += x->shape[0];
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(total * d));
    for (const auto& x : xs) out.insert(out.end(), x->data.begin(), x->data.end());
    std::vector<TensorPtr> parents(xs.begin(), xs.end());
    return make_op("concat_rows", {total, d}, std::move(out), parents, [xs](Tensor& o) {
        size_t off = 0;
        for (const auto& x : xs) {
            if (x->tracked()) {
                x->ensure_grad();
                for (size_t i = 0; i < x->data.size(); ++i) x->grad[i] += o.grad[off + i];
            }
            off += x->data.size();
        }
    });
}

TensorPtr reshape(const TensorPtr& x, Shape s) {
    if (shape_numel(s) != x->numel()) {
        throw ShapeError("reshape: element count mismatch " + shape_str(x->shape) + " -> " +
                         shape_str(s));
    }
    std::vector<double> out = x->data;  // row-major relabeling
    return make_op("reshape", std::move(s), std::move(out), {x}, [x](Tensor& o) {
        accumulate(*x, o.grad);
    });
}

TensorPtr flatten(const TensorPtr& x) { return reshape(x, {1, x->numel()}); }

TensorPtr pointwise_conv3d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    require_rank("pointwise_conv3d", *x, 5);
    require_rank("pointwise_conv3d", *w, 2);
    const int64_t batch = x->shape[0], cin = x->shape[1];
    const int64_t vol = x->shape[2] * x->shape[3] * x->shape[4];
    const int64_t cout = w->shape[0];
    if (w->shape[1] != cin) {
        throw ShapeError("pointwise_conv3d: weight " + shape_str(w->shape) +
                         " does not match input " + shape_str(x->shape));
    }
    if (b && (b->shape.size() != 1 || b->shape[0] != cout)) {
        throw ShapeError("pointwise_conv3d: bias " + shape_str(b->shape) + " does not match " +
                         shape_str(w->shape));
    }
    Shape os = {batch, cout, x->shape[2], x->shape[3], x->shape[4]};
    std::vector<double> out(static_cast<size_t>(batch * cout * vol), 0.0);
    for (int64_t bi = 0; bi < batch; ++bi) {
        const double* xb = &x->data[bi * cin * vol];
        double* ob = &out[bi * cout * vol];
        for (int64_t o = 0; o < cout; ++o) {
            double* orow = &ob[o * vol];
            if (b) {
                const double bias = b->data[o];
                for (int64_t v = 0; v < vol; ++v) orow[v] = bias;
            }
            for (int64_t i = 0; i < cin; ++i) {
                const double wv = w->data[o * cin + i];
                if (wv == 0.0) continue;
                const double* xrow = &xb[i * vol];
                for (int64_t v = 0; v < vol; ++v) orow[v] += wv * xrow[v];
            }
        }
    }
    std::vector<TensorPtr> parents = {x, w};
    if (b) parents.push_back(b);
    return make_op("pointwise_conv3d", std::move(os), std::move(out), std::move(parents),
                   [x, w, b, batch, cin, cout, vol](Tensor& o) {
        for (int64_t bi = 0; bi < batch; ++bi) {
            const double* gb = &o.grad[bi * cout * vol];
            if (x->tracked()) {
                x->ensure_grad();
                double* gx = &x->grad[bi * cin * vol];
                for (int64_t oc = 0; oc < cout; ++oc) {
                    const double* grow = &gb[oc * vol];
                    for (int64_t i = 0; i < cin; ++i) {
                        const double wv = w->data[oc * cin + i];
                        if (wv == 0.0) continue;
                        double* gxr = &gx[i * vol];
                        for (int64_t v = 0; v < vol; ++v) gxr[v] += wv * grow[v];
                    }
                }
            }
            if (w->tracked()) {
                w->ensure_grad();
                const double* xb = &x->data[bi * cin * vol];
                for (int64_t oc = 0; oc < cout; ++oc) {
                    const double* grow = &gb[oc * vol];
                    for (int64_t i = 0; i < cin; ++i) {
                        const double* xrow = &xb[i * vol];
                        double acc = 0.0;
                        for (int64_t v = 0; v < vol; ++v) acc += grow[v] * xrow[v];
                        w->grad[oc * cin + i] += acc;
                    }
                }
            }
            if (b && b->tracked()) {
                b->ensure_grad();
                for (int64_t oc = 0; oc < cout; ++oc) {
                    const double* grow = &gb[oc * vol];
                    double acc = 0.0;
                    for (int64_t v = 0; v < vol; ++v) acc += grow[v];
                    b->grad[oc] += acc;
                }
            }
        }
    });
}

namespace {

// C[o,:] += A[o,:] * B with A [rows,r], B [r,vol]; four output rows at a
// time with register-resident 16-wide accumulator tiles.
void gemm_rows(const double* a, const double* b, double* c, int64_t rows, int64_t r,
               int64_t vol) {
    int64_t o = 0;
    for (; o + 4 <= rows; o += 4) {
        const double *a0 = a + o * r, *a1 = a + (o + 1) * r, *a2 = a + (o + 2) * r,
                     *a3 = a + (o + 3) * r;
        for (int64_t vt = 0; vt < vol; vt += 16) {
            const int64_t tw = std::min<int64_t>(16, vol - vt);
            double acc0[16] = {0}, acc1[16] = {0}, acc2[16] = {0}, acc3[16] = {0};
            if (tw == 16) {
                for (int64_t rr = 0; rr < r; ++rr) {
                    const double* __restrict brow = b + rr * vol + vt;
                    const double v0 = a0[rr], v1 = a1[rr], v2 = a2[rr], v3 = a3[rr];
                    for (int64_t v = 0; v < 16; ++v) {
                        const double bv = brow[v];
                        acc0[v] += v0 * bv;
                        acc1[v] += v1 * bv;
                        acc2[v] += v2 * bv;
                        acc3[v] += v3 * bv;
                    }
                }
            } else {
                for (int64_t rr = 0; rr < r; ++rr) {
                    const double* __restrict brow = b + rr * vol + vt;
                    const double v0 = a0[rr], v1 = a1[rr], v2 = a2[rr], v3 = a3[rr];
                    for (int64_t v = 0; v < tw; ++v) {
                        const double bv = brow[v];
                        acc0[v] += v0 * bv;
                        acc1[v] += v1 * bv;
                        acc2[v] += v2 * bv;
                        acc3[v] += v3 * bv;
                    }
                }
            }
            for (int64_t v = 0; v < tw; ++v) {
                c[o * vol + vt + v] += acc0[v];
                c[(o + 1) * vol + vt + v] += acc1[v];
                c[(o + 2) * vol + vt + v] += acc2[v];
                c[(o + 3) * vol + vt + v] += acc3[v];
            }
        }
    }
    for (; o < rows; ++o) {
        double* __restrict crow = c + o * vol;
        const double* arow = a + o * r;
        for (int64_t rr = 0; rr < r; ++rr) {
            const double av = arow[rr];
            if (av == 0.0) continue;
            const double* __restrict brow = b + rr * vol;
            for (int64_t v = 0; v < vol; ++v) crow[v] += av * brow[v];
        }
    }
}

// Gathers the zero-padded 3x3x3 neighborhoods into col[r*vol + v] with
// r = i*27 + offset so that rows line up with the [Cout,Cin,3,3,3] weight
// layout and the convolution becomes a plain GEMM.
void im2col_3x3x3(const double* x, int64_t cin, int64_t dd, int64_t hh, int64_t ww,
                  std::vector<double>& col) {
    const int64_t vol = dd * hh * ww;
    col.assign(static_cast<size_t>(cin * 27 * vol), 0.0);
    for (int64_t i = 0; i < cin; ++i) {
        const double* xc = &x[i * vol];
        for (int64_t dz = 0; dz < 3; ++dz) {
            for (int64_t dy = 0; dy < 3; ++dy) {
                for (int64_t dx = 0; dx < 3; ++dx) {
                    double* crow = &col[(i * 27 + dz * 9 + dy * 3 + dx) * vol];
                    const int64_t z0 = std::max<int64_t>(0, 1 - dz);
                    const int64_t z1 = std::min(dd, dd + 1 - dz);
                    const int64_t y0 = std::max<int64_t>(0, 1 - dy);
                    const int64_t y1 = std::min(hh, hh + 1 - dy);
                    const int64_t x0 = std::max<int64_t>(0, 1 - dx);
                    const int64_t x1 = std::min(ww, ww + 1 - dx);
                    for (int64_t z = z0; z < z1; ++z) {
                        const int64_t sz = z + dz - 1;
                        for (int64_t y = y0; y < y1; ++y) {
                            const int64_t sy = y + dy - 1;
                            const double* src = &xc[(sz * hh + sy) * ww + (x0 + dx - 1)];
                            double* dst = &crow[(z * hh + y) * ww + x0];
                            std::memcpy(dst, src, sizeof(double) * (x1 - x0));
                        }
                    }
                }
            }
        }
    }
}

std::mutex g_col_cache_mu;

// Frozen inputs keep their gathered neighborhoods for the tensor lifetime;
// the write happens once under the lock, readers go through the atomic.
const std::vector<double>* frozen_col(Tensor& x, int64_t cin, int64_t dd, int64_t hh,
                                      int64_t ww) {
    if (!x.frozen) return nullptr;
    const std::vector<double>* p = x.col_cache.load(std::memory_order_acquire);
    if (p) return p;
    std::lock_guard<std::mutex> lock(g_col_cache_mu);
    p = x.col_cache.load(std::memory_order_relaxed);
    if (p) return p;
    auto owner = std::make_shared<std::vector<double>>();
    im2col_3x3x3(x.data.data(), cin, dd, hh, ww, *owner);
    x.col_cache_owner = owner;
    x.col_cache.store(owner.get(), std::memory_order_release);
    return owner.get();
}

}  // namespace

TensorPtr conv3d_same(const TensorPtr& x, const TensorPtr& w) {
    require_rank("conv3d_same", *x, 5);
    require_rank("conv3d_same", *w, 5);
    if (x->shape[0] != 1) {
        throw ShapeError("conv3d_same: expected batch 1 input, got " + shape_str(x->shape));
    }
    if (w->shape[2] != 3 || w->shape[3] != 3 || w->shape[4] != 3) {
        throw ShapeError("conv3d_same: kernel must be 3x3x3, got " + shape_str(w->shape));
    }
    const int64_t cin = x->shape[1], dd = x->shape[2], hh = x->shape[3], ww = x->shape[4];
    const int64_t cout = w->shape[0];
    if (w->shape[1] != cin) {
        throw ShapeError("conv3d_same: weight " + shape_str(w->shape) + " does not match input " +
                         shape_str(x->shape));
    }
    const int64_t vol = dd * hh * ww;
    const int64_t r = cin * 27;
    const std::vector<double>* colp = frozen_col(*x, cin, dd, hh, ww);
    thread_local std::vector<double> scratch;
    if (!colp) {
        im2col_3x3x3(x->data.data(), cin, dd, hh, ww, scratch);
        colp = &scratch;
    }
    std::vector<double> out(static_cast<size_t>(cout * vol), 0.0);
    gemm_rows(w->data.data(), colp->data(), out.data(), cout, r, vol);
    return make_op("conv3d_same", {1, cout, dd, hh, ww}, std::move(out), {x, w},
                   [x, w, cin, cout, dd, hh, ww, vol, r](Tensor& o) {
        const std::vector<double>* colp = frozen_col(*x, cin, dd, hh, ww);
        thread_local std::vector<double> scratch_b;
        if (!colp) {
            im2col_3x3x3(x->data.data(), cin, dd, hh, ww, scratch_b);
            colp = &scratch_b;
        }
        const double* col2 = colp->data();
        if (w->tracked()) {
            w->ensure_grad();  // gW[o,r] = <gout[o,:], col[r,:]>
            for (int64_t oc = 0; oc < cout; ++oc) {
                const double* grow = &o.grad[oc * vol];
                double* gw = &w->grad[oc * r];
                for (int64_t rr = 0; rr < r; ++rr) {
                    const double* crow = &col2[rr * vol];
                    double acc = 0.0;
                    for (int64_t v = 0; v < vol; ++v) acc += grow[v] * crow[v];
                    gw[rr] += acc;
                }
            }
        }
        if (x->tracked()) {
            x->ensure_grad();  // gcol = W^T gout, scattered back (col2im)
            std::vector<double> gcol(static_cast<size_t>(r * vol), 0.0);
            for (int64_t oc = 0; oc < cout; ++oc) {
                const double* grow = &o.grad[oc * vol];
                const double* wrow = &w->data[oc * r];
                for (int64_t rr = 0; rr < r; ++rr) {
                    const double wv = wrow[rr];
                    if (wv == 0.0) continue;
                    double* gcrow = &gcol[rr * vol];
                    for (int64_t v = 0; v < vol; ++v) gcrow[v] += wv * grow[v];
                }
            }
            for (int64_t i = 0; i < cin; ++i) {
                double* gx = &x->grad[i * vol];
                for (int64_t dz = 0; dz < 3; ++dz)
                    for (int64_t dy = 0; dy < 3; ++dy)
                        for (int64_t dx = 0; dx < 3; ++dx) {
                            const double* gcrow = &gcol[(i * 27 + dz * 9 + dy * 3 + dx) * vol];
                            for (int64_t z = 0; z < dd; ++z) {
                                const int64_t sz = z + dz - 1;
                                if (sz < 0 || sz >= dd) continue;
                                for (int64_t y = 0; y < hh; ++y) {
                                    const int64_t sy = y + dy - 1;
                                    if (sy < 0 || sy >= hh) continue;
                                    for (int64_t xx = 0; xx < ww; ++xx) {
                                        const int64_t sx = xx + dx - 1;
                                        if (sx < 0 || sx >= ww) continue;
                                        gx[(sz * hh + sy) * ww + sx] += gcrow[(z * hh + y) * ww + xx];
                                    }
                                }
                            }
                        }
            }
        }
    });
}

TensorPtr global_avg_pool(const TensorPtr& x) {
    require_rank("global_avg_pool", *x, 5);
    const int64_t batch = x->shape[0], c = x->shape[1];
    const int64_t vol = x->shape[2] * x->shape[3] * x->shape[4];
    std::vector<double> out(static_cast<size_t>(batch * c));
    for (int64_t bi = 0; bi < batch; ++bi)
        for (int64_t ci = 0; ci < c; ++ci) {
            const double* row = &x->data[(bi * c + ci) * vol];
            double acc = 0.0;
            for (int64_t v = 0; v < vol; ++v) acc += row[v];
            out[bi * c + ci] = acc / static_cast<double>(vol);
        }
    return make_op("global_avg_pool", {batch, c, 1, 1, 1}, std::move(out), {x},
                   [x, batch, c, vol](Tensor& o) {
        x->ensure_grad();
        const double inv = 1.0 / static_cast<double>(vol);
        for (int64_t bi = 0; bi < batch; ++bi)
            for (int64_t ci = 0; ci < c; ++ci) {
                const double g = o.grad[bi * c + ci] * inv;
                double* gx = &x->grad[(bi * c + ci) * vol];
                for (int64_t v = 0; v < vol; ++v) gx[v] += g;
            }
    });
}

TensorPtr swap_axes01(const TensorPtr& x) {
    require_rank("swap_axes01", *x, 5);
    const int64_t a = x->shape[0], b = x->shape[1];
    const int64_t rest = x->shape[2] * x->shape[3] * x->shape[4];
    Shape os = {b, a, x->shape[2], x->shape[3], x->shape[4]};
    std::vector<double> out(x->data.size());
    for (int64_t i = 0; i < a; ++i)
        for (int64_t j = 0; j < b; ++j)
            std::memcpy(&out[(j * a + i) * rest], &x->data[(i * b + j) * rest],
                        sizeof(double) * rest);
    return make_op("swap_axes01", std::move(os), std::move(out), {x}, [x, a, b, rest](Tensor& o) {
        x->ensure_grad();
        for (int64_t i = 0; i < a; ++i)
            for (int64_t j = 0; j < b; ++j) {
                const double* g = &o.grad[(j * a + i) * rest];
                double* gx = &x->grad[(i * b + j) * rest];
                for (int64_t v = 0; v < rest; ++v) gx[v] += g[v];
            }
    });
}

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
    require_rank("concat_channels", *a, 5);
    require_rank("concat_channels", *b, 5);
    if (a->shape[0] != b->shape[0] || a->shape[2] != b->shape[2] || a->shape[3] != b->shape[3] ||
        a->shape[4] != b->shape[4] || a->shape[0] != 1) {
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    const int64_t ca = a->shape[1], cb = b->shape[1];
    Shape os = {1, ca + cb, a->shape[2], a->shape[3], a->shape[4]};
    std::vector<double> out;
    out.reserve(a->data.size() + b->data.size());
    out.insert(out.end(), a->data.begin(), a->data.end());
    out.insert(out.end(), b->data.begin(), b->data.end());
    return make_op("concat_channels", std::move(os), std::move(out), {a, b}, [a, b](Tensor& o) {
        if (a->tracked()) {
            a->ensure_grad();
            for (size_t i = 0; i < a->data.size(); ++i) a->grad[i] += o.grad[i];
        }
        if (b->tracked()) {
            b->ensure_grad();
            const size_t off = a->data.size();
            for (size_t i = 0; i < b->data.size(); ++i) b->grad[i] += o.grad[off + i];
        }
    });
}

TensorPtr mul_channel_gate(const TensorPtr& x, const TensorPtr& gate) {
    require_rank("mul_channel_gate", *x, 5);
    require_rank("mul_channel_gate", *gate, 5);
    const int64_t c = x->shape[1];
    if (x->shape[0] != 1 || gate->shape != Shape{1, c, 1, 1, 1}) {
        throw ShapeError("mul_channel_gate: gate " + shape_str(gate->shape) +
                         " does not broadcast over " + shape_str(x->shape));
    }
    const int64_t vol = x->shape[2] * x->shape[3] * x->shape[4];
    std::vector<double> out(x->data.size());
    for (int64_t ci = 0; ci < c; ++ci) {
        const double g = gate->data[ci];
        const double* row = &x->data[ci * vol];
        double* orow = &out[ci * vol];
        for (int64_t v = 0; v < vol; ++v) orow[v] = row[v] * g;
    }
    return make_op("mul_channel_gate", x->shape, std::move(out), {x, gate},
                   [x, gate, c, vol](Tensor& o) {
        for (int64_t ci = 0; ci < c; ++ci) {
            const double* grow = &o.grad[ci * vol];
            if (x->tracked()) {
                x->ensure_grad();
                const double g = gate->data[ci];
                double* gx = &x->grad[ci * vol];
                for (int64_t v = 0; v < vol; ++v) gx[v] += grow[v] * g;
            }
            if (gate->tracked()) {
                gate->ensure_grad();
                const double* row = &x->data[ci * vol];
                double acc = 0.0;
                for (int64_t v = 0; v < vol; ++v) acc += grow[v] * row[v];
                gate->grad[ci] += acc;
            }
        }
    });
}

}  // namespace ops
}  // namespace hyda
