#include "hyda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hyda {

namespace {

int64_t argmax_row(const double* row, int64_t k) {
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int64_t>& labels,
                        int64_t positive) {
    int64_t pos = 0, neg = 0;
    for (int64_t l : labels) (l == positive ? pos : neg)++;
    if (pos == 0 || neg == 0) {
        throw MetricError("AUC undefined: labels contain a single class");
    }
    const int64_t n = static_cast<int64_t>(scores.size());
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int64_t a, int64_t b) { return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)]; });
    // Average ranks over tie groups gives the half-credit convention.
    double rank_sum_pos = 0.0;
    int64_t i = 0;
    while (i < n) {
        int64_t j = i;
        while (j + 1 < n && scores[static_cast<size_t>(order[static_cast<size_t>(j + 1)])] ==
                                scores[static_cast<size_t>(order[static_cast<size_t>(i)])])
            ++j;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (int64_t t = i; t <= j; ++t) {
            if (labels[static_cast<size_t>(order[static_cast<size_t>(t)])] == positive)
                rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(pos) * (pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace

Metrics compute_metrics(const TensorPtr& p_final, const std::vector<int64_t>& labels,
                        int64_t positive_class) {
    if (p_final->shape.size() != 2 ||
        p_final->shape[0] != static_cast<int64_t>(labels.size())) {
        throw ShapeError("compute_metrics: predictions " + shape_str(p_final->shape) +
                         " do not match " + std::to_string(labels.size()) + " labels");
    }
    const int64_t n = p_final->shape[0], k = p_final->shape[1];
    std::vector<int64_t> pred(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pred[static_cast<size_t>(i)] = argmax_row(&p_final->data[i * k], k);

    Metrics m;
    int64_t correct = 0;
    for (int64_t i = 0; i < n; ++i)
        if (pred[static_cast<size_t>(i)] == labels[static_cast<size_t>(i)]) ++correct;
    m.acc = 100.0 * static_cast<double>(correct) / static_cast<double>(n);

    if (k == 2) {
        int64_t tp = 0, tn = 0, fp = 0, fn = 0;
        for (int64_t i = 0; i < n; ++i) {
            const bool is_pos = labels[static_cast<size_t>(i)] == positive_class;
            const bool said_pos = pred[static_cast<size_t>(i)] == positive_class;
            if (is_pos && said_pos) ++tp;
            else if (is_pos) ++fn;
            else if (said_pos) ++fp;
            else ++tn;
        }
        m.sen = tp + fn > 0 ? 100.0 * tp / static_cast<double>(tp + fn) : 0.0;
        m.spe = tn + fp > 0 ? 100.0 * tn / static_cast<double>(tn + fp) : 0.0;
        m.f1 = 2 * tp + fp + fn > 0 ? 100.0 * 2.0 * tp / static_cast<double>(2 * tp + fp + fn) : 0.0;
        std::vector<double> scores(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i)
            scores[static_cast<size_t>(i)] = p_final->data[i * k + positive_class];
        m.auc = 100.0 * mann_whitney_auc(scores, labels, positive_class);
        m.binary = true;
    } else {
        // Multi-class: accuracy plus macro F1 only.
        double f1_sum = 0.0;
        for (int64_t c = 0; c < k; ++c) {
            int64_t tp = 0, fp = 0, fn = 0;
            for (int64_t i = 0; i < n; ++i) {
                const bool is_c = labels[static_cast<size_t>(i)] == c;
                const bool said_c = pred[static_cast<size_t>(i)] == c;
                if (is_c && said_c) ++tp;
                else if (said_c) ++fp;
                else if (is_c) ++fn;
            }
            f1_sum += 2 * tp + fp + fn > 0 ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn) : 0.0;
        }
        m.f1 = 100.0 * f1_sum / static_cast<double>(k);
        m.spe = m.sen = m.auc = std::numeric_limits<double>::quiet_NaN();
        m.binary = false;
    }
    return m;
}

}  // namespace hyda
