#ifndef METAPROP_DATASET_HPP
#define METAPROP_DATASET_HPP

#include <map>
#include <string>
#include <vector>

#include "metaprop/effect_transforms.hpp"

namespace metaprop {

struct Trial {
    std::string trial_id;
    ProportionOutcome outcome;
    EffectSize effect;
};

struct Study {
    std::string id;
    std::vector<Trial> trials;
    // raw feature values; a missing value is simply an absent key
    std::map<std::string, std::string> features;
};

// Ordered collection of studies. Immutable after construction by convention;
// trial order is input order and every matrix assembly respects it.
struct Dataset {
    std::vector<Study> studies;

    int study_count() const { return static_cast<int>(studies.size()); }
    int trial_count() const;
    std::vector<int> study_sizes() const;

    // trial-order vectors used by the fitting engine
    std::vector<double> effects() const;            // theta
    std::vector<double> sampling_variances() const; // v

    /// Checks the structural invariants (>= 2 studies, >= 1 trial each,
    /// unique study ids, unique trial ids within study). Throws DataError.
    void validate() const;

    Dataset excluding(const std::vector<std::string>& study_ids) const;

    /// Keep only the trials at the given global indices (any order; the
    /// result preserves dataset order). Studies left empty are dropped.
    Dataset subset_trials(const std::vector<int>& keep) const;
};

}  // namespace metaprop

#endif
