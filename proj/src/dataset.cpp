#include "metaprop/dataset.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "metaprop/errors.hpp"

namespace metaprop {

int Dataset::trial_count() const {
    int m = 0;
    for (const Study& s : studies) m += static_cast<int>(s.trials.size());
    return m;
}

std::vector<int> Dataset::study_sizes() const {
    std::vector<int> sizes;
    sizes.reserve(studies.size());
    for (const Study& s : studies) sizes.push_back(static_cast<int>(s.trials.size()));
    return sizes;
}

std::vector<double> Dataset::effects() const {
    std::vector<double> y;
    y.reserve(trial_count());
    for (const Study& s : studies)
        for (const Trial& t : s.trials) y.push_back(t.effect.theta);
    return y;
}

std::vector<double> Dataset::sampling_variances() const {
    std::vector<double> v;
    v.reserve(trial_count());
    for (const Study& s : studies)
        for (const Trial& t : s.trials) v.push_back(t.effect.v);
    return v;
}

void Dataset::validate() const {
    if (studies.size() < 2) throw DataError("need >= 2 studies");
    std::set<std::string> ids;
    for (const Study& s : studies) {
        if (!ids.insert(s.id).second) {
            std::ostringstream msg;
            msg << "duplicate study id '" << s.id << "'";
            throw DataError(msg.str());
        }
        if (s.trials.empty()) {
            std::ostringstream msg;
            msg << "study '" << s.id << "' has no trials";
            throw DataError(msg.str());
        }
        std::set<std::string> trial_ids;
        for (const Trial& t : s.trials) {
            if (!trial_ids.insert(t.trial_id).second) {
                std::ostringstream msg;
                msg << "duplicate trial id '" << t.trial_id << "' in study '" << s.id << "'";
                throw DataError(msg.str());
            }
            t.outcome.validate();
            if (!(t.effect.v > 0.0)) {
                std::ostringstream msg;
                msg << "trial '" << t.trial_id << "' of study '" << s.id
                    << "' has non-positive sampling variance";
                throw DataError(msg.str());
            }
        }
    }
}

Dataset Dataset::excluding(const std::vector<std::string>& study_ids) const {
    Dataset out;
    for (const Study& s : studies) {
        if (std::find(study_ids.begin(), study_ids.end(), s.id) == study_ids.end())
            out.studies.push_back(s);
    }
    if (out.studies.size() < 2) throw DataError("need >= 2 studies after exclusion");
    return out;
}

Dataset Dataset::subset_trials(const std::vector<int>& keep) const {
    std::set<int> wanted(keep.begin(), keep.end());
    Dataset out;
    int global = 0;
    for (const Study& s : studies) {
        Study sub;
        sub.id = s.id;
        sub.features = s.features;
        for (const Trial& t : s.trials) {
            if (wanted.count(global)) sub.trials.push_back(t);
            ++global;
        }
        if (!sub.trials.empty()) out.studies.push_back(std::move(sub));
    }
    return out;
}

}  // namespace metaprop
