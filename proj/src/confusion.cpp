#include "metaprop/confusion.hpp"

#include <sstream>

#include "metaprop/errors.hpp"

namespace metaprop {

ConfusionMatrix::ConfusionMatrix(std::vector<std::vector<long long>> counts)
    : counts_(std::move(counts)) {
    const std::size_t q = counts_.size();
    if (q < 2) throw DataError("confusion matrix needs q >= 2 classes");
    row_sums_.assign(q, 0);
    col_sums_.assign(q, 0);
    for (std::size_t r = 0; r < q; ++r) {
        if (counts_[r].size() != q)
            throw DataError("confusion matrix must be square");
        for (std::size_t c = 0; c < q; ++c) {
            const long long x = counts_[r][c];
            if (x < 0) throw DataError("confusion matrix counts must be non-negative");
            row_sums_[r] += x;
            col_sums_[c] += x;
            total_ += x;
        }
    }
    if (total_ <= 0) throw DataError("confusion matrix total count must be positive");
}

long long ConfusionMatrix::diagonal_sum() const {
    long long k = 0;
    for (int r = 0; r < classes(); ++r) k += counts_[r][r];
    return k;
}

ProportionOutcome overall_accuracy(const ConfusionMatrix& cm) {
    ProportionOutcome out;
    out.k = cm.diagonal_sum();
    out.n = cm.total();
    out.validate();
    return out;
}

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm) {
    std::vector<ClassMetrics> metrics(cm.classes());
    for (int r = 0; r < cm.classes(); ++r) {
        ClassMetrics& m = metrics[r];
        const double diag = static_cast<double>(cm.at(r, r));
        if (cm.row_sum(r) > 0) m.recall = diag / static_cast<double>(cm.row_sum(r));
        if (cm.col_sum(r) > 0) m.precision = diag / static_cast<double>(cm.col_sum(r));
        if (m.recall && m.precision) {
            const double denom = *m.recall + *m.precision;
            m.f1 = denom > 0.0 ? 2.0 * (*m.recall) * (*m.precision) / denom : 0.0;
        }
    }
    return metrics;
}

double benchmark_accuracy(const std::vector<long long>& class_counts) {
    if (class_counts.size() < 2)
        throw DataError("benchmark_accuracy needs at least 2 classes");
    long long n = 0;
    for (long long c : class_counts) {
        if (c < 0) throw DataError("benchmark_accuracy: counts must be non-negative");
        n += c;
    }
    if (n <= 0) throw DataError("benchmark_accuracy: all class counts are zero");
    double p0 = 0.0;
    for (long long c : class_counts) {
        const double share = static_cast<double>(c) / static_cast<double>(n);
        p0 += share * share;
    }
    return p0;
}

}  // namespace metaprop
