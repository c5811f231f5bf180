#ifndef METAPROP_META_REGRESSION_HPP
#define METAPROP_META_REGRESSION_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "metaprop/dataset.hpp"
#include "metaprop/features.hpp"
#include "metaprop/multilevel.hpp"

namespace metaprop {

enum class Criterion { AIC, BIC, RMSE };

Criterion criterion_from_string(const std::string& name);
std::string criterion_to_string(Criterion c);

struct ModelScores {
    double aic = 0.0;
    double bic = 0.0;
    double rmse = 0.0;
    double ml_loglik = 0.0;
    double reml_loglik = 0.0;

    double value(Criterion c) const;
};

/// AIC = -2 l_ML + 2 (p + q_var), BIC = -2 l_ML + (p + q_var) log m, where
/// l_ML is the full maximum-likelihood refit (REML likelihoods are not
/// comparable across fixed-effect structures) and q_var counts the free
/// variance components. RMSE uses fixed-effects predictions from the REML
/// fit over the transformed effect sizes.
ModelScores information_criteria(const Dataset& dataset, const FeatureMatrix& X,
                                 const FitOptions& options = {});

struct RSquared {
    std::optional<double> r2_xi;
    std::optional<double> r2_zeta;
    bool xi_truncated = false;
    bool zeta_truncated = false;
};

/// Proportional reduction in the variance components relative to the
/// intercept-only fit; truncated below at zero (flagged), undefined when
/// the null component is zero.
RSquared r_squared(const FitResult& fit_null, const FitResult& fit_features);

struct CandidateScore {
    std::string feature;
    int added_columns = 0;
    ModelScores scores;
    bool ok = false;
    std::string error;
};

struct SelectionStep {
    std::vector<CandidateScore> candidates;  // all evaluated extensions
    std::string chosen;
    bool accepted = false;
    double criterion_before = 0.0;
    double criterion_after = 0.0;
};

struct SelectionPath {
    Criterion criterion = Criterion::AIC;
    ModelScores null_scores;
    std::vector<SelectionStep> steps;
    std::vector<std::string> accepted;

    nlohmann::json to_json() const;
};

/// Greedy forward selection: at each step every single-feature extension is
/// fitted, the lowest criterion value wins (ties broken by fewer added
/// columns, then name) and is accepted iff strictly below the current
/// model; candidates whose fit fails are skipped with the reason recorded.
SelectionPath forward_select(const Dataset& dataset,
                             const std::vector<FeatureSpec>& specs, Criterion criterion,
                             const FitOptions& options = {});

struct FeatureImportance {
    std::string name;
    double mean_pfi = 0.0;
    double p2_5 = 0.0;
    double p25 = 0.0;
    double p75 = 0.0;
    double p97_5 = 0.0;
    std::vector<double> replicates;  // fold-major, K*B values
};

struct PfiReport {
    int folds = 0;
    int permutations = 0;
    std::uint64_t seed = 0;
    std::vector<FeatureImportance> features;

    nlohmann::json to_json() const;
};

/// K-fold permutation feature importance. Trials are partitioned into K
/// seeded folds; per fold the full model is fitted on the other folds and
/// the held-out RMSE of the fixed-effects predictions is compared with the
/// RMSE after shuffling one feature's held-out values (B permutations per
/// feature per fold). PFI replicate = permuted RMSE / original RMSE.
PfiReport permutation_importance(const Dataset& dataset,
                                 const std::vector<FeatureSpec>& specs,
                                 const std::vector<std::string>& selected, int folds,
                                 int permutations, std::uint64_t seed,
                                 const FitOptions& options = {});

/// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

}  // namespace metaprop

#endif
