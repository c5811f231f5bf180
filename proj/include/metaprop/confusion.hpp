#ifndef METAPROP_CONFUSION_HPP
#define METAPROP_CONFUSION_HPP

#include <optional>
#include <vector>

#include "metaprop/effect_transforms.hpp"

namespace metaprop {

// q x q count table, rows = observed class, columns = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::vector<std::vector<long long>> counts);

    int classes() const { return static_cast<int>(counts_.size()); }
    long long total() const { return total_; }
    long long at(int r, int c) const { return counts_[r][c]; }
    long long row_sum(int r) const { return row_sums_[r]; }
    long long col_sum(int c) const { return col_sums_[c]; }
    long long diagonal_sum() const;
    const std::vector<long long>& row_sums() const { return row_sums_; }

private:
    std::vector<std::vector<long long>> counts_;
    std::vector<long long> row_sums_;
    std::vector<long long> col_sums_;
    long long total_ = 0;
};

// Per-class metrics; a class with an empty row/column marginal has no
// defined recall/precision and is reported as missing, never as 0.
struct ClassMetrics {
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> f1;
};

/// Overall accuracy: k = diagonal sum, n = total count.
ProportionOutcome overall_accuracy(const ConfusionMatrix& cm);

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm);

/// Chance benchmark p0 = sum_r (n_r. / n)^2 from per-class counts.
double benchmark_accuracy(const std::vector<long long>& class_counts);

}  // namespace metaprop

#endif
