#include "metaprop/features.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "metaprop/errors.hpp"

namespace metaprop {

namespace {

const std::string kUnknown = "unknown";

std::string study_value(const Study& s, const std::string& feature) {
    auto it = s.features.find(feature);
    return it == s.features.end() ? std::string() : it->second;
}

double parse_numeric(const std::string& raw, const std::string& feature,
                     const std::string& study_id) {
    std::size_t pos = 0;
    double value = 0.0;
    try {
        value = std::stod(raw, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != raw.size() || raw.empty()) {
        std::ostringstream msg;
        msg << "feature '" << feature << "': value '" << raw << "' of study '"
            << study_id << "' is not numeric";
        throw DataError(msg.str());
    }
    return value;
}

}  // namespace

const FeatureMatrix::Group* FeatureMatrix::find_group(const std::string& feature) const {
    for (const Group& g : groups)
        if (g.feature == feature) return &g;
    return nullptr;
}

const FeatureSpec* find_spec(const std::vector<FeatureSpec>& specs, const std::string& name) {
    for (const FeatureSpec& s : specs)
        if (s.name == name) return &s;
    return nullptr;
}

FeatureKind feature_kind_from_string(const std::string& kind) {
    if (kind == "categorical") return FeatureKind::Categorical;
    if (kind == "numeric") return FeatureKind::Numeric;
    if (kind == "binary") return FeatureKind::Binary;
    throw DataError("unknown feature kind '" + kind + "'");
}

std::string feature_kind_to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Categorical: return "categorical";
        case FeatureKind::Numeric: return "numeric";
        case FeatureKind::Binary: return "binary";
    }
    return "numeric";
}

FeatureMatrix encode_features(const Dataset& dataset,
                              const std::vector<FeatureSpec>& specs,
                              const std::vector<std::string>& selected) {
    const int m = dataset.trial_count();
    FeatureMatrix X;
    X.column_names.push_back("(intercept)");

    struct Column {
        std::string name;
        std::vector<double> per_study;  // one value per study, expanded later
    };
    std::vector<Column> columns;

    for (const std::string& name : selected) {
        const FeatureSpec* spec = find_spec(specs, name);
        if (!spec) throw DataError("feature '" + name + "' is not declared in the schema");

        FeatureMatrix::Group group;
        group.feature = name;

        if (spec->kind == FeatureKind::Categorical) {
            // resolve per-study levels; missing maps to "unknown"
            std::vector<std::string> levels(dataset.studies.size());
            std::map<std::string, int> freq;
            for (std::size_t j = 0; j < dataset.studies.size(); ++j) {
                std::string value = study_value(dataset.studies[j], name);
                if (value.empty()) value = kUnknown;
                if (!spec->categories.empty() && value != kUnknown &&
                    std::find(spec->categories.begin(), spec->categories.end(), value) ==
                        spec->categories.end()) {
                    std::ostringstream msg;
                    msg << "feature '" << name << "': unseen category '" << value
                        << "' in study '" << dataset.studies[j].id << "'";
                    throw DataError(msg.str());
                }
                levels[j] = value;
                freq[value] += 1;
            }
            // reference: declared if observed, else most frequent (ties alphabetical)
            std::string reference = spec->reference;
            if (reference.empty() || !freq.count(reference)) {
                int best = -1;
                for (const auto& [level, count] : freq) {
                    if (count > best) {
                        best = count;
                        reference = level;
                    }
                }
            }
            // one dummy per observed non-reference level, alphabetical
            for (const auto& [level, count] : freq) {
                if (level == reference) continue;
                Column col;
                col.name = name + "=" + level;
                col.per_study.resize(dataset.studies.size());
                for (std::size_t j = 0; j < dataset.studies.size(); ++j)
                    col.per_study[j] = levels[j] == level ? 1.0 : 0.0;
                group.columns.push_back(static_cast<int>(columns.size()) + 1);
                columns.push_back(std::move(col));
            }
        } else {
            Column col;
            col.name = name;
            col.per_study.resize(dataset.studies.size());
            for (std::size_t j = 0; j < dataset.studies.size(); ++j) {
                const Study& s = dataset.studies[j];
                const std::string raw = study_value(s, name);
                if (raw.empty()) {
                    std::ostringstream msg;
                    msg << "feature '" << name << "': missing value in study '" << s.id
                        << "' (numeric features cannot be 'unknown' in a fit)";
                    throw DataError(msg.str());
                }
                if (spec->kind == FeatureKind::Binary) {
                    if (raw != "0" && raw != "1") {
                        std::ostringstream msg;
                        msg << "feature '" << name << "': binary value '" << raw
                            << "' of study '" << s.id << "' must be 0 or 1";
                        throw DataError(msg.str());
                    }
                    col.per_study[j] = raw == "1" ? 1.0 : 0.0;
                } else {
                    col.per_study[j] = parse_numeric(raw, name, s.id);
                }
            }
            group.columns.push_back(static_cast<int>(columns.size()) + 1);
            columns.push_back(std::move(col));
        }
        X.groups.push_back(std::move(group));
    }

    const int p = static_cast<int>(columns.size()) + 1;
    X.values.resize(m, p);
    X.values.col(0).setOnes();
    for (const Column& col : columns) X.column_names.push_back(col.name);
    int row = 0;
    for (std::size_t j = 0; j < dataset.studies.size(); ++j) {
        for (std::size_t t = 0; t < dataset.studies[j].trials.size(); ++t) {
            for (std::size_t c = 0; c < columns.size(); ++c)
                X.values(row, static_cast<int>(c) + 1) = columns[c].per_study[j];
            ++row;
        }
    }

    const auto qr = X.values.colPivHouseholderQr();
    if (qr.rank() < p) {
        std::ostringstream msg;
        msg << "design matrix is rank deficient after assembly (rank " << qr.rank()
            << " < " << p << " columns)";
        throw RankError(msg.str());
    }
    return X;
}

FeatureMatrix subset_rows(const FeatureMatrix& X, const std::vector<int>& rows) {
    FeatureMatrix out;
    out.column_names = X.column_names;
    out.groups = X.groups;
    out.values.resize(static_cast<int>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.values.row(static_cast<int>(i)) = X.values.row(rows[i]);
    return out;
}

}  // namespace metaprop
