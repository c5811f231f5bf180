#include "metaprop/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metaprop/errors.hpp"
#include "metaprop/rng.hpp"

namespace metaprop {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == delimiter) {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

long long parse_int(const std::string& raw, const std::string& column, int line_no) {
    std::size_t pos = 0;
    long long value = 0;
    try {
        value = std::stoll(raw, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != raw.size() || raw.empty()) {
        std::ostringstream msg;
        msg << "line " << line_no << ": column '" << column << "': '" << raw
            << "' is not an integer";
        throw DataError(msg.str());
    }
    return value;
}

double parse_double(const std::string& raw, const std::string& column, int line_no) {
    std::size_t pos = 0;
    double value = 0;
    try {
        value = std::stod(raw, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != raw.size() || raw.empty()) {
        std::ostringstream msg;
        msg << "line " << line_no << ": column '" << column << "': '" << raw
            << "' is not a number";
        throw DataError(msg.str());
    }
    return value;
}

}  // namespace

SchemaConfig SchemaConfig::from_json(const nlohmann::json& j) {
    SchemaConfig schema;
    if (j.contains("delimiter")) {
        const std::string d = j.at("delimiter").get<std::string>();
        if (d.size() != 1) throw DataError("schema: delimiter must be a single character");
        schema.delimiter = d[0];
    }
    if (j.contains("missing")) schema.missing_token = j.at("missing").get<std::string>();
    if (j.contains("ignore"))
        schema.ignore_columns = j.at("ignore").get<std::vector<std::string>>();
    if (j.contains("features")) {
        for (const auto& f : j.at("features")) {
            FeatureSpec spec;
            spec.name = f.at("name").get<std::string>();
            spec.kind = feature_kind_from_string(f.at("kind").get<std::string>());
            if (f.contains("categories"))
                spec.categories = f.at("categories").get<std::vector<std::string>>();
            if (f.contains("reference")) spec.reference = f.at("reference").get<std::string>();
            if (spec.kind == FeatureKind::Categorical && !spec.categories.empty() &&
                spec.categories.size() < 2)
                throw DataError("schema: categorical feature '" + spec.name +
                                "' must list >= 2 levels");
            schema.features.push_back(std::move(spec));
        }
    }
    return schema;
}

SchemaConfig SchemaConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("schema file '" + path + "': " + e.what());
    }
    return from_json(j);
}

nlohmann::json SchemaConfig::to_json() const {
    nlohmann::json j;
    j["delimiter"] = std::string(1, delimiter);
    j["missing"] = missing_token;
    j["features"] = nlohmann::json::array();
    for (const FeatureSpec& f : features) {
        nlohmann::json jf;
        jf["name"] = f.name;
        jf["kind"] = feature_kind_to_string(f.kind);
        if (!f.categories.empty()) jf["categories"] = f.categories;
        if (!f.reference.empty()) jf["reference"] = f.reference;
        j["features"].push_back(jf);
    }
    if (!ignore_columns.empty()) j["ignore"] = ignore_columns;
    return j;
}

Dataset parse_dataset_csv(const std::string& text, const SchemaConfig& schema,
                          const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw DataError(origin + ": empty file (header row required)");

    const std::vector<std::string> header = split_line(line, schema.delimiter);
    std::map<std::string, int> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (col.count(header[i]))
            throw DataError(origin + ": duplicate column '" + header[i] + "'");
        col[header[i]] = static_cast<int>(i);
    }
    for (const char* required : {"study_id", "trial_id", "n"}) {
        if (!col.count(required))
            throw DataError(origin + ": missing required column '" + std::string(required) + "'");
    }
    if (!col.count("k") && !col.count("p"))
        throw DataError(origin + ": need a 'k' or 'p' column");

    // every other column must be a declared feature or explicitly ignored
    std::set<std::string> known = {"study_id", "trial_id", "k", "p", "n"};
    for (const FeatureSpec& f : schema.features) known.insert(f.name);
    for (const std::string& c : schema.ignore_columns) known.insert(c);
    for (const std::string& h : header) {
        if (!known.count(h))
            throw DataError(origin + ": column '" + h +
                            "' is neither declared as a feature nor ignored");
    }

    Dataset dataset;
    std::map<std::string, std::size_t> study_index;
    std::set<std::pair<std::string, std::string>> seen_trials;

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> fields = split_line(line, schema.delimiter);
        if (fields.size() != header.size()) {
            std::ostringstream msg;
            msg << origin << ": line " << line_no << ": expected " << header.size()
                << " fields, found " << fields.size();
            throw DataError(msg.str());
        }
        auto get = [&](const std::string& name) { return fields[col.at(name)]; };

        const std::string study_id = get("study_id");
        const std::string trial_id = get("trial_id");
        if (study_id.empty()) {
            std::ostringstream msg;
            msg << origin << ": line " << line_no << ": empty study_id";
            throw DataError(msg.str());
        }
        if (!seen_trials.insert({study_id, trial_id}).second) {
            std::ostringstream msg;
            msg << origin << ": line " << line_no << ": duplicate trial ('" << study_id
                << "', '" << trial_id << "')";
            throw DataError(msg.str());
        }

        Trial trial;
        trial.trial_id = trial_id;
        trial.outcome.n = parse_int(get("n"), "n", line_no);
        const bool has_k = col.count("k") && get("k") != schema.missing_token;
        if (has_k) {
            trial.outcome.k = parse_int(get("k"), "k", line_no);
        } else if (col.count("p") && get("p") != schema.missing_token) {
            const double p = parse_double(get("p"), "p", line_no);
            const double kk = p * static_cast<double>(trial.outcome.n);
            const double rounded = std::llround(kk);
            if (!(std::fabs(kk - rounded) <= 0.5)) {
                std::ostringstream msg;
                msg << origin << ": line " << line_no << ": p = " << p
                    << " does not map to an integer k within tolerance";
                throw DataError(msg.str());
            }
            trial.outcome.k = static_cast<long long>(rounded);
        } else {
            std::ostringstream msg;
            msg << origin << ": line " << line_no << ": neither k nor p given";
            throw DataError(msg.str());
        }
        try {
            trial.effect = da_transform(trial.outcome);
        } catch (const DataError& e) {
            std::ostringstream msg;
            msg << origin << ": line " << line_no << ": " << e.what();
            throw DataError(msg.str());
        }

        // collect declared features present in this file
        std::map<std::string, std::string> row_features;
        for (const FeatureSpec& f : schema.features) {
            if (!col.count(f.name)) continue;
            const std::string raw = get(f.name);
            if (raw == schema.missing_token) continue;  // missing stays absent
            row_features[f.name] = raw;
        }

        auto it = study_index.find(study_id);
        if (it == study_index.end()) {
            Study study;
            study.id = study_id;
            study.features = row_features;
            study.trials.push_back(std::move(trial));
            study_index[study_id] = dataset.studies.size();
            dataset.studies.push_back(std::move(study));
        } else {
            Study& study = dataset.studies[it->second];
            // a study-level feature must agree across the study's trials
            for (const FeatureSpec& f : schema.features) {
                if (!col.count(f.name)) continue;
                const auto prev = study.features.find(f.name);
                const auto curr = row_features.find(f.name);
                const std::string prev_v =
                    prev == study.features.end() ? schema.missing_token : prev->second;
                const std::string curr_v =
                    curr == row_features.end() ? schema.missing_token : curr->second;
                if (prev_v != curr_v) {
                    std::ostringstream msg;
                    msg << origin << ": line " << line_no << ": study '" << study_id
                        << "' has inconsistent values for feature '" << f.name << "': '"
                        << prev_v << "' vs '" << curr_v << "'";
                    throw DataError(msg.str());
                }
            }
            study.trials.push_back(std::move(trial));
        }
    }

    dataset.validate();
    return dataset;
}

Dataset load_dataset(const std::string& path, const SchemaConfig& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open input file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_dataset_csv(buffer.str(), schema, path);
}

std::string dataset_to_csv(const Dataset& dataset, const SchemaConfig& schema) {
    std::ostringstream out;
    const char d = schema.delimiter;
    out << "study_id" << d << "trial_id" << d << "k" << d << "n";
    for (const FeatureSpec& f : schema.features) out << d << f.name;
    out << "\n";
    for (const Study& s : dataset.studies) {
        for (const Trial& t : s.trials) {
            out << s.id << d << t.trial_id << d << t.outcome.k << d << t.outcome.n;
            for (const FeatureSpec& f : schema.features) {
                auto it = s.features.find(f.name);
                out << d << (it == s.features.end() ? schema.missing_token : it->second);
            }
            out << "\n";
        }
    }
    return out.str();
}

void save_dataset(const Dataset& dataset, const SchemaConfig& schema,
                  const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write to '" + path + "'");
    out << dataset_to_csv(dataset, schema);
}

std::vector<FeatureSpec> SimConfig::feature_specs() const {
    std::vector<FeatureSpec> specs;
    for (const SimFeature& f : features) {
        FeatureSpec spec;
        spec.name = f.name;
        spec.kind = f.kind;
        if (f.kind == FeatureKind::Categorical) spec.categories = f.levels;
        specs.push_back(std::move(spec));
    }
    return specs;
}

SchemaConfig SimConfig::schema() const {
    SchemaConfig schema;
    schema.features = feature_specs();
    return schema;
}

nlohmann::json SimConfig::to_json() const {
    nlohmann::json j;
    j["studies"] = studies;
    j["trials_per_study"] = {trials_per_study.lo, trials_per_study.hi};
    if (!trial_counts.empty()) j["trial_counts"] = trial_counts;
    j["n_per_trial"] = {n_per_trial.lo, n_per_trial.hi};
    j["mu"] = mu;
    j["sigma2_xi"] = sigma2_xi;
    j["sigma2_zeta"] = sigma2_zeta;
    j["seed"] = seed;
    j["features"] = nlohmann::json::array();
    for (const SimFeature& f : features) {
        nlohmann::json jf;
        jf["name"] = f.name;
        jf["kind"] = feature_kind_to_string(f.kind);
        jf["beta"] = f.beta;
        if (f.kind == FeatureKind::Numeric) jf["range"] = {f.lo, f.hi};
        if (f.kind == FeatureKind::Categorical) {
            jf["levels"] = f.levels;
            jf["level_effects"] = f.level_effects;
        }
        j["features"].push_back(jf);
    }
    return j;
}

nlohmann::json SimulationTruth::to_json() const {
    nlohmann::json j;
    j["config"] = config.to_json();
    j["study_effects"] = study_effects;
    j["redraws"] = redraws;
    return j;
}

std::pair<Dataset, SimulationTruth> simulate_dataset(const SimConfig& config) {
    if (config.studies < 2) throw DataError("simulate_dataset: need >= 2 studies");
    if (config.sigma2_xi < 0.0 || config.sigma2_zeta < 0.0)
        throw DataError("simulate_dataset: variances must be >= 0");
    if (!config.trial_counts.empty() &&
        static_cast<int>(config.trial_counts.size()) != config.studies)
        throw DataError("simulate_dataset: trial_counts length must equal studies");

    Rng rng(config.seed);
    Dataset dataset;
    SimulationTruth truth;
    truth.config = config;

    const double sd_xi = std::sqrt(config.sigma2_xi);
    const double sd_zeta = std::sqrt(config.sigma2_zeta);

    for (int j = 0; j < config.studies; ++j) {
        Study study;
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "S%03d", j + 1);
            study.id = buf;
        }
        double fixed = config.mu;
        for (const SimFeature& f : config.features) {
            if (f.kind == FeatureKind::Categorical) {
                if (f.levels.empty() || f.levels.size() != f.level_effects.size())
                    throw DataError("simulate_dataset: categorical feature '" + f.name +
                                    "' needs matching levels/effects");
                const std::size_t idx = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<long long>(f.levels.size()) - 1));
                study.features[f.name] = f.levels[idx];
                fixed += f.level_effects[idx];
            } else if (f.kind == FeatureKind::Binary) {
                const long long value = rng.uniform_int(0, 1);
                study.features[f.name] = value ? "1" : "0";
                fixed += f.beta * static_cast<double>(value);
            } else {
                const double value = rng.uniform(f.lo, f.hi);
                study.features[f.name] = format_double(value);
                fixed += f.beta * value;
            }
        }
        const double xi = rng.normal(0.0, sd_xi);
        truth.study_effects.push_back(fixed + xi);

        const long long mj = config.trial_counts.empty()
                                 ? rng.uniform_int(config.trials_per_study.lo,
                                                   config.trials_per_study.hi)
                                 : config.trial_counts[j];
        if (mj < 1) throw DataError("simulate_dataset: every study needs >= 1 trial");
        for (long long i = 0; i < mj; ++i) {
            const long long n = rng.uniform_int(config.n_per_trial.lo, config.n_per_trial.hi);
            if (n < 1) throw DataError("simulate_dataset: n must be >= 1");
            const double n_real = static_cast<double>(n);
            const double lo = da_gamma_min(n_real);
            const double hi = da_gamma_max(n_real);

            double theta = 0.0;
            bool ok = false;
            for (int attempt = 0; attempt <= config.max_redraws; ++attempt) {
                theta = fixed + xi + rng.normal(0.0, sd_zeta);
                if (2.0 * theta >= lo && 2.0 * theta <= hi) {
                    ok = true;
                    if (attempt > 0) truth.redraws += attempt;
                    break;
                }
            }
            if (!ok) {
                std::ostringstream msg;
                msg << "simulate_dataset: study " << study.id << " trial " << (i + 1)
                    << ": theta stayed outside the invertible range after "
                    << config.max_redraws << " redraws";
                throw DataError(msg.str());
            }

            const double p = da_inverse(2.0 * theta, n_real);
            Trial trial;
            {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "t%03lld", i + 1);
                trial.trial_id = buf;
            }
            trial.outcome.k = rng.binomial(n, p);
            trial.outcome.n = n;
            trial.effect = da_transform(trial.outcome);
            study.trials.push_back(std::move(trial));
        }
        dataset.studies.push_back(std::move(study));
    }

    dataset.validate();
    return {std::move(dataset), std::move(truth)};
}

}  // namespace metaprop
