#ifndef METAPROP_DATASET_IO_HPP
#define METAPROP_DATASET_IO_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "metaprop/dataset.hpp"
#include "metaprop/features.hpp"

namespace metaprop {

// Declarative description of the input file: delimiter, missing-value token
// and one declaration per feature column. Every feature column present in
// the file must be declared or listed under "ignore".
struct SchemaConfig {
    char delimiter = ',';
    std::string missing_token;  // empty string by default
    std::vector<FeatureSpec> features;
    std::vector<std::string> ignore_columns;

    static SchemaConfig from_json(const nlohmann::json& j);
    static SchemaConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
};

/// Loads a delimited text file with header. Required columns: study_id,
/// trial_id, n, and k or p (k wins when both are present; k = round(p*n)
/// otherwise). Trials are grouped by study in file order; the DA transform
/// is applied eagerly; study-level features must agree across the trials
/// of a study. Every error names the offending line or feature.
Dataset load_dataset(const std::string& path, const SchemaConfig& schema);

Dataset parse_dataset_csv(const std::string& text, const SchemaConfig& schema,
                          const std::string& origin);

std::string dataset_to_csv(const Dataset& dataset, const SchemaConfig& schema);
void save_dataset(const Dataset& dataset, const SchemaConfig& schema,
                  const std::string& path);

struct IntRange {
    long long lo = 1;
    long long hi = 1;
};

// One generated study-level feature. Numerics are drawn uniformly on
// [lo, hi] and contribute beta * value to the study effect; binaries are
// fair coin flips contributing beta * value; categorical levels are drawn
// uniformly and contribute the matching level effect.
struct SimFeature {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    double beta = 0.0;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::string> levels;
    std::vector<double> level_effects;
};

struct SimConfig {
    int studies = 20;
    IntRange trials_per_study{1, 5};
    IntRange n_per_trial{100, 1000};
    std::vector<long long> trial_counts;  // optional explicit m_j profile
    double mu = 0.9;
    double sigma2_xi = 0.01;
    double sigma2_zeta = 0.005;
    std::vector<SimFeature> features;
    std::uint64_t seed = 1;
    int max_redraws = 1000;

    std::vector<FeatureSpec> feature_specs() const;
    SchemaConfig schema() const;
    nlohmann::json to_json() const;
};

struct SimulationTruth {
    SimConfig config;
    std::vector<double> study_effects;  // realized kappa_j = fixed part + xi_j
    int redraws = 0;
    nlohmann::json to_json() const;
};

/// Draws a dataset from the three-level model: xi_j and zeta_ij normal,
/// theta mapped back to a proportion via the inverse transform with the
/// trial's n, then k ~ Binomial(n, p). Out-of-range draws of theta are
/// redrawn up to config.max_redraws times (counted in the truth record).
std::pair<Dataset, SimulationTruth> simulate_dataset(const SimConfig& config);

}  // namespace metaprop

#endif
