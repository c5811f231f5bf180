#ifndef METAPROP_FEATURES_HPP
#define METAPROP_FEATURES_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "metaprop/dataset.hpp"

namespace metaprop {

enum class FeatureKind { Categorical, Numeric, Binary };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    // declared levels (categorical); empty = infer from the data.
    // "unknown" is always a legal level and absorbs missing values.
    std::vector<std::string> categories;
    // reference level; empty = most frequent observed level, ties alphabetical
    std::string reference;
};

// Design matrix aligned to trial order, intercept column first.
struct FeatureMatrix {
    std::vector<std::string> column_names;
    Eigen::MatrixXd values;  // m x p

    struct Group {
        std::string feature;
        std::vector<int> columns;  // may be empty (single observed level)
    };
    std::vector<Group> groups;  // one entry per selected feature, in order

    int rows() const { return static_cast<int>(values.rows()); }
    int cols() const { return static_cast<int>(values.cols()); }
    const Group* find_group(const std::string& feature) const;
};

const FeatureSpec* find_spec(const std::vector<FeatureSpec>& specs, const std::string& name);

/// Builds the design matrix for the selected features.
/// Categorical features become dummies against the reference level (most
/// frequent observed level unless the spec declares one); numerics pass
/// through uncentered; binaries as 0/1. Features are study-level, so all
/// trials of a study share a row pattern. Throws DataError on unseen
/// categories or missing numeric values, RankError if the assembled matrix
/// is column-rank deficient.
FeatureMatrix encode_features(const Dataset& dataset,
                              const std::vector<FeatureSpec>& specs,
                              const std::vector<std::string>& selected);

FeatureMatrix subset_rows(const FeatureMatrix& X, const std::vector<int>& rows);

FeatureKind feature_kind_from_string(const std::string& kind);
std::string feature_kind_to_string(FeatureKind kind);

}  // namespace metaprop

#endif
