#include "metaprop/meta_regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metaprop/errors.hpp"
#include "metaprop/rng.hpp"

namespace metaprop {

Criterion criterion_from_string(const std::string& name) {
    if (name == "AIC" || name == "aic") return Criterion::AIC;
    if (name == "BIC" || name == "bic") return Criterion::BIC;
    if (name == "RMSE" || name == "rmse") return Criterion::RMSE;
    throw DataError("unknown criterion '" + name + "' (expected AIC, BIC or RMSE)");
}

std::string criterion_to_string(Criterion c) {
    switch (c) {
        case Criterion::AIC: return "AIC";
        case Criterion::BIC: return "BIC";
        case Criterion::RMSE: return "RMSE";
    }
    return "AIC";
}

double ModelScores::value(Criterion c) const {
    switch (c) {
        case Criterion::AIC: return aic;
        case Criterion::BIC: return bic;
        case Criterion::RMSE: return rmse;
    }
    return aic;
}

ModelScores information_criteria(const Dataset& dataset, const FeatureMatrix& X,
                                 const FitOptions& options) {
    const FitResult reml = reml_fit(dataset, X, options);
    const MlFit ml = ml_fit(dataset, X, options);

    const int m = dataset.trial_count();
    const int p = X.cols();
    const int n_var = reml.zeta_fixed ? 1 : 2;
    const double n_par = static_cast<double>(p + n_var);

    ModelScores scores;
    scores.ml_loglik = ml.loglik;
    scores.reml_loglik = reml.reml_loglik;
    scores.aic = -2.0 * ml.loglik + 2.0 * n_par;
    scores.bic = -2.0 * ml.loglik + n_par * std::log(static_cast<double>(m));
    const Eigen::VectorXd y =
        Eigen::Map<const Eigen::VectorXd>(dataset.effects().data(), m).eval();
    scores.rmse = std::sqrt((y - reml.fitted).squaredNorm() / static_cast<double>(m));
    return scores;
}

RSquared r_squared(const FitResult& fit_null, const FitResult& fit_features) {
    if (fit_null.beta.size() != 1)
        throw DataError("r_squared: the null fit must be intercept-only");
    if (fit_null.n_trials != fit_features.n_trials ||
        fit_null.n_studies != fit_features.n_studies)
        throw DataError("r_squared: fits are not on the same dataset");

    RSquared out;
    if (fit_null.components.sigma2_xi > 0.0) {
        double r2 = 1.0 - fit_features.components.sigma2_xi / fit_null.components.sigma2_xi;
        if (r2 < 0.0) {
            r2 = 0.0;
            out.xi_truncated = true;
        }
        out.r2_xi = r2;
    }
    if (fit_null.components.sigma2_zeta > 0.0) {
        double r2 =
            1.0 - fit_features.components.sigma2_zeta / fit_null.components.sigma2_zeta;
        if (r2 < 0.0) {
            r2 = 0.0;
            out.zeta_truncated = true;
        }
        out.r2_zeta = r2;
    }
    return out;
}

nlohmann::json SelectionPath::to_json() const {
    nlohmann::json j;
    j["criterion"] = criterion_to_string(criterion);
    j["null_model"] = {{"aic", null_scores.aic},
                       {"bic", null_scores.bic},
                       {"rmse", null_scores.rmse},
                       {"ml_loglik", null_scores.ml_loglik}};
    j["accepted"] = accepted;
    j["steps"] = nlohmann::json::array();
    for (const SelectionStep& step : steps) {
        nlohmann::json js;
        js["chosen"] = step.chosen;
        js["accepted"] = step.accepted;
        js["criterion_before"] = step.criterion_before;
        js["criterion_after"] = step.criterion_after;
        js["candidates"] = nlohmann::json::array();
        for (const CandidateScore& c : step.candidates) {
            nlohmann::json jc;
            jc["feature"] = c.feature;
            jc["added_columns"] = c.added_columns;
            jc["ok"] = c.ok;
            if (c.ok) {
                jc["aic"] = c.scores.aic;
                jc["bic"] = c.scores.bic;
                jc["rmse"] = c.scores.rmse;
            } else {
                jc["error"] = c.error;
            }
            js["candidates"].push_back(jc);
        }
        j["steps"].push_back(js);
    }
    return j;
}

SelectionPath forward_select(const Dataset& dataset,
                             const std::vector<FeatureSpec>& specs, Criterion criterion,
                             const FitOptions& options) {
    if (specs.empty()) throw DataError("forward_select: no candidate features");

    SelectionPath path;
    path.criterion = criterion;
    path.null_scores = information_criteria(
        dataset, encode_features(dataset, specs, {}), options);
    double current = path.null_scores.value(criterion);
    const int base_cols = 1;
    int current_cols = base_cols;

    while (true) {
        SelectionStep step;
        step.criterion_before = current;
        const CandidateScore* best = nullptr;

        for (const FeatureSpec& spec : specs) {
            if (std::find(path.accepted.begin(), path.accepted.end(), spec.name) !=
                path.accepted.end())
                continue;
            CandidateScore cand;
            cand.feature = spec.name;
            try {
                std::vector<std::string> selected = path.accepted;
                selected.push_back(spec.name);
                const FeatureMatrix X = encode_features(dataset, specs, selected);
                cand.added_columns = X.cols() - current_cols;
                cand.scores = information_criteria(dataset, X, options);
                cand.ok = true;
            } catch (const std::exception& e) {
                cand.ok = false;
                cand.error = e.what();
            }
            step.candidates.push_back(std::move(cand));
        }
        if (step.candidates.empty()) break;

        for (const CandidateScore& cand : step.candidates) {
            if (!cand.ok) continue;
            if (!best) {
                best = &cand;
                continue;
            }
            const double bv = best->scores.value(criterion);
            const double cv = cand.scores.value(criterion);
            // ties: fewer added columns, then alphabetical name
            if (cv < bv ||
                (cv == bv && (cand.added_columns < best->added_columns ||
                              (cand.added_columns == best->added_columns &&
                               cand.feature < best->feature))))
                best = &cand;
        }
        if (!best) {
            path.steps.push_back(std::move(step));
            break;
        }

        step.chosen = best->feature;
        step.criterion_after = best->scores.value(criterion);
        step.accepted = step.criterion_after < current;
        const bool accepted = step.accepted;
        const int added = best->added_columns;
        const double after = step.criterion_after;
        const std::string chosen = best->feature;
        path.steps.push_back(std::move(step));

        if (!accepted) break;
        path.accepted.push_back(chosen);
        current = after;
        current_cols += added;
    }
    return path;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("percentile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q / 100.0;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

nlohmann::json PfiReport::to_json() const {
    nlohmann::json j;
    j["folds"] = folds;
    j["permutations"] = permutations;
    j["seed"] = seed;
    j["replicates_per_feature"] = folds * permutations;
    j["features"] = nlohmann::json::array();
    for (const FeatureImportance& f : features) {
        j["features"].push_back({{"name", f.name},
                                 {"mean_pfi", f.mean_pfi},
                                 {"p2_5", f.p2_5},
                                 {"p25", f.p25},
                                 {"p75", f.p75},
                                 {"p97_5", f.p97_5}});
    }
    return j;
}

PfiReport permutation_importance(const Dataset& dataset,
                                 const std::vector<FeatureSpec>& specs,
                                 const std::vector<std::string>& selected, int folds,
                                 int permutations, std::uint64_t seed,
                                 const FitOptions& options) {
    if (folds < 2) throw DataError("permutation_importance: need K >= 2 folds");
    if (permutations < 1) throw DataError("permutation_importance: need B >= 1");
    const int m = dataset.trial_count();
    if (m < 2 * folds)
        throw DataError("permutation_importance: need m >= 2K trials");

    // encode once over the full dataset so folds share the column layout
    const FeatureMatrix X = encode_features(dataset, specs, selected);

    PfiReport report;
    report.folds = folds;
    report.permutations = permutations;
    report.seed = seed;
    for (const std::string& name : selected) {
        FeatureImportance f;
        f.name = name;
        f.replicates.reserve(static_cast<std::size_t>(folds) * permutations);
        report.features.push_back(std::move(f));
    }

    // seeded trial-level partition: shuffled order dealt round-robin
    Rng fold_rng = Rng(seed).derive(0xf01d5ULL);
    const std::vector<std::size_t> order = fold_rng.permutation(static_cast<std::size_t>(m));
    std::vector<std::vector<int>> fold_members(folds);
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        fold_members[pos % folds].push_back(static_cast<int>(order[pos]));
    for (auto& members : fold_members) std::sort(members.begin(), members.end());

    for (int f = 0; f < folds; ++f) {
        const std::vector<int>& test_rows = fold_members[f];
        std::vector<int> train_rows;
        train_rows.reserve(m - test_rows.size());
        for (int g = 0; g < folds; ++g) {
            if (g == f) continue;
            train_rows.insert(train_rows.end(), fold_members[g].begin(), fold_members[g].end());
        }
        std::sort(train_rows.begin(), train_rows.end());

        const int n_var = 2;
        if (static_cast<int>(train_rows.size()) < X.cols() + n_var) {
            std::ostringstream msg;
            msg << "permutation_importance: fold " << (f + 1) << " leaves only "
                << train_rows.size() << " training trials for " << X.cols() + n_var
                << " parameters";
            throw DataError(msg.str());
        }

        const Dataset train = dataset.subset_trials(train_rows);
        const FeatureMatrix X_train = subset_rows(X, train_rows);
        const FitResult fit = reml_fit(train, X_train, options);

        const FeatureMatrix X_test = subset_rows(X, test_rows);
        const Dataset test = dataset.subset_trials(test_rows);
        const Eigen::VectorXd y_test = Eigen::Map<const Eigen::VectorXd>(
            test.effects().data(), static_cast<int>(test_rows.size())).eval();
        const Eigen::VectorXd pred = X_test.values * fit.beta;
        const int n_test = static_cast<int>(test_rows.size());
        const double rmse_orig =
            std::sqrt((y_test - pred).squaredNorm() / static_cast<double>(n_test));
        if (!(rmse_orig > 0.0))
            throw DataError("permutation_importance: zero held-out RMSE, ratios undefined");

        for (std::size_t gi = 0; gi < selected.size(); ++gi) {
            const FeatureMatrix::Group* group = X.find_group(selected[gi]);
            const std::vector<int>& cols = group->columns;
            for (int b = 0; b < permutations; ++b) {
                // substream per (fold, feature, permutation); replicate order
                // is deterministic regardless of evaluation schedule
                Rng perm_rng = Rng(seed).derive(
                    (static_cast<std::uint64_t>(f) << 40) ^
                    (static_cast<std::uint64_t>(gi) << 20) ^
                    static_cast<std::uint64_t>(b + 1));
                const std::vector<std::size_t> perm =
                    perm_rng.permutation(static_cast<std::size_t>(n_test));

                double sq_sum = 0.0;
                for (int r = 0; r < n_test; ++r) {
                    double delta = 0.0;
                    for (int c : cols)
                        delta += (X_test.values(static_cast<int>(perm[r]), c) -
                                  X_test.values(r, c)) *
                                 fit.beta(c);
                    const double e = y_test(r) - (pred(r) + delta);
                    sq_sum += e * e;
                }
                const double rmse_perm = std::sqrt(sq_sum / static_cast<double>(n_test));
                report.features[gi].replicates.push_back(rmse_perm / rmse_orig);
            }
        }
    }

    for (FeatureImportance& f : report.features) {
        f.mean_pfi = std::accumulate(f.replicates.begin(), f.replicates.end(), 0.0) /
                     static_cast<double>(f.replicates.size());
        f.p2_5 = percentile(f.replicates, 2.5);
        f.p25 = percentile(f.replicates, 25.0);
        f.p75 = percentile(f.replicates, 75.0);
        f.p97_5 = percentile(f.replicates, 97.5);
    }
    return report;
}

}  // namespace metaprop
