#pragma once

// Cohort data model: the N x P x T observation tensor with an explicit
// observation mask, per-subject organ-dysfunction label vectors derived
// from ICD-9 codes, and per-feature z-score normalization.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tempheno/errors.hpp"

namespace tempheno {

/// Longitudinal cohort tensor, values indexed (subject, feature, hour)
/// row-major. Unobserved cells hold NaN at the storage level; callers must
/// consult `mask` and never branch on the sentinel.
struct CohortTensor {
    std::size_t n_subjects = 0;
    std::size_t n_features = 0;
    std::size_t n_hours = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;  // 1 = observed
    std::vector<std::string> feature_names;
    std::vector<std::string> subject_ids;

    static CohortTensor empty(std::size_t n, std::size_t p, std::size_t t) {
        CohortTensor out;
        out.n_subjects = n;
        out.n_features = p;
        out.n_hours = t;
        out.values.assign(n * p * t, std::numeric_limits<double>::quiet_NaN());
        out.mask.assign(n * p * t, 0);
        out.feature_names.resize(p);
        out.subject_ids.resize(n);
        return out;
    }

    std::size_t index(std::size_t n, std::size_t p, std::size_t t) const {
        return (n * n_features + p) * n_hours + t;
    }
    double at(std::size_t n, std::size_t p, std::size_t t) const {
        return values[index(n, p, t)];
    }
    bool observed(std::size_t n, std::size_t p, std::size_t t) const {
        return mask[index(n, p, t)] != 0;
    }
    void set(std::size_t n, std::size_t p, std::size_t t, double v) {
        values[index(n, p, t)] = v;
        mask[index(n, p, t)] = 1;
    }

    /// Pointer to subject n's contiguous P x T slab.
    const double* slab(std::size_t n) const { return values.data() + n * n_features * n_hours; }
    double* slab(std::size_t n) { return values.data() + n * n_features * n_hours; }

    std::size_t cell_count() const { return n_subjects * n_features * n_hours; }

    bool fully_observed() const {
        return std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
    }

    void validate() const {
        if (n_subjects < 1 || n_features < 1 || n_hours < 1)
            throw ConfigError("cohort tensor requires N >= 1, P >= 1, T >= 1");
        if (values.size() != cell_count() || mask.size() != cell_count())
            throw ConfigError("cohort tensor storage does not match declared shape");
        if (feature_names.size() != n_features || subject_ids.size() != n_subjects)
            throw ConfigError("cohort tensor name lists do not match declared shape");
    }
};

/// Column mapping and shape contract for long-format records CSV.
struct IngestSchema {
    std::string subject_col = "subject_id";
    std::string feature_col = "feature";
    std::string hour_col = "hour";
    std::string value_col = "value";
    std::vector<std::string> feature_names;  // the known feature set, in tensor order
    std::size_t n_hours = 120;
};

struct IngestResult {
    CohortTensor tensor;
    std::size_t duplicate_count = 0;    // cells written more than once (last write wins)
    std::size_t dropped_out_of_range = 0;  // rows with hour outside [0, T)
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::optional<double> parse_double(const std::string& s) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(t, &pos);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (pos != t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<long> parse_long(const std::string& s) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(t, &pos);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (pos != t.size()) return std::nullopt;
    return v;
}

}  // namespace detail

/// Reads a long-format records CSV (subject_id,feature,hour,value per the
/// schema's column mapping) into a cohort tensor. The mask is true exactly at
/// the distinct (subject, feature, hour) keys present; duplicates resolve
/// last-write-wins and are counted. Subjects appear in first-appearance order.
inline IngestResult ingest_long_csv(const std::string& path, const IngestSchema& schema) {
    if (schema.feature_names.empty())
        throw ConfigError("ingest schema must name at least one feature");
    if (schema.n_hours < 1) throw ConfigError("ingest schema requires n_hours >= 1");

    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open records CSV: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ConfigError("no records in " + path);
    const auto header = detail::split_csv_line(line);
    auto col_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (detail::trim(header[i]) == name) return i;
        throw ConfigError("records CSV " + path + " lacks column '" + name + "'");
    };
    const std::size_t c_subj = col_of(schema.subject_col);
    const std::size_t c_feat = col_of(schema.feature_col);
    const std::size_t c_hour = col_of(schema.hour_col);
    const std::size_t c_val = col_of(schema.value_col);

    std::unordered_map<std::string, std::size_t> feature_index;
    for (std::size_t p = 0; p < schema.feature_names.size(); ++p)
        feature_index[schema.feature_names[p]] = p;

    struct Row {
        std::size_t subject, feature, hour;
        double value;
    };
    std::vector<Row> rows;
    std::vector<std::string> subject_ids;
    std::unordered_map<std::string, std::size_t> subject_index;
    std::size_t dropped = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() <= std::max({c_subj, c_feat, c_hour, c_val}))
            throw ConfigError("records CSV row " + std::to_string(line_no) + ": too few columns");
        const std::string subj = detail::trim(cells[c_subj]);
        const std::string feat = detail::trim(cells[c_feat]);
        auto fit = feature_index.find(feat);
        if (fit == feature_index.end())
            throw ConfigError("records CSV row " + std::to_string(line_no) +
                              ": unknown feature '" + feat + "'");
        const auto hour = detail::parse_long(cells[c_hour]);
        if (!hour || *hour < 0)
            throw ConfigError("records CSV row " + std::to_string(line_no) +
                              ": hour must be a non-negative integer");
        const auto value = detail::parse_double(cells[c_val]);
        if (!value)
            throw ConfigError("records CSV row " + std::to_string(line_no) +
                              ": non-numeric value '" + detail::trim(cells[c_val]) + "'");
        if (static_cast<std::size_t>(*hour) >= schema.n_hours) {
            ++dropped;
            continue;
        }
        auto sit = subject_index.find(subj);
        std::size_t si;
        if (sit == subject_index.end()) {
            si = subject_ids.size();
            subject_index[subj] = si;
            subject_ids.push_back(subj);
        } else {
            si = sit->second;
        }
        rows.push_back({si, fit->second, static_cast<std::size_t>(*hour), *value});
    }
    if (rows.empty()) throw ConfigError("no records in " + path);

    IngestResult out;
    out.dropped_out_of_range = dropped;
    out.tensor = CohortTensor::empty(subject_ids.size(), schema.feature_names.size(),
                                     schema.n_hours);
    out.tensor.feature_names = schema.feature_names;
    out.tensor.subject_ids = subject_ids;
    for (const Row& r : rows) {
        if (out.tensor.observed(r.subject, r.feature, r.hour)) ++out.duplicate_count;
        out.tensor.set(r.subject, r.feature, r.hour, r.value);
    }
    return out;
}

/// Half-open ICD-9 integer-part range for one organ-dysfunction group.
struct IcdRange {
    std::string name;
    int lo;
    int hi;  // inclusive
};

inline std::vector<IcdRange> default_organ_ranges() {
    return {{"liver", 570, 573}, {"kidney", 580, 589}, {"lung", 510, 519}};
}

/// Per-subject binary organ-dysfunction group vectors, sorted by subject id.
struct OrganLabelSet {
    std::vector<std::string> subject_ids;
    std::vector<std::vector<int>> labels;  // each of length n_groups, entries in {0,1}
    std::size_t n_groups = 3;
    std::size_t malformed_count = 0;

    /// Index of the single set group, or -1 if the subject has zero or
    /// several groups set.
    static int single_group(const std::vector<int>& label) {
        int hit = -1;
        for (std::size_t g = 0; g < label.size(); ++g) {
            if (label[g] == 0) continue;
            if (hit >= 0) return -1;
            hit = static_cast<int>(g);
        }
        return hit;
    }

    /// Reorders labels to match `ids`; subjects absent from this set get the
    /// zero vector.
    OrganLabelSet aligned_to(const std::vector<std::string>& ids) const {
        std::unordered_map<std::string, std::size_t> where;
        for (std::size_t i = 0; i < subject_ids.size(); ++i) where[subject_ids[i]] = i;
        OrganLabelSet out;
        out.n_groups = n_groups;
        out.malformed_count = malformed_count;
        out.subject_ids = ids;
        out.labels.reserve(ids.size());
        for (const auto& id : ids) {
            auto it = where.find(id);
            if (it == where.end())
                out.labels.emplace_back(n_groups, 0);
            else
                out.labels.push_back(labels[it->second]);
        }
        return out;
    }
};

/// Maps a labels CSV (subject_id,icd9_code) onto organ-group vectors: entry g
/// is 1 iff some code's integer part falls in group g's range. Malformed code
/// strings are skipped and counted; codes outside every range are ignored.
/// Output subjects are sorted by id, so the result is row-order insensitive.
inline OrganLabelSet map_icd9_labels(const std::string& path,
                                     const std::vector<IcdRange>& ranges = default_organ_ranges()) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open labels CSV: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ConfigError("no records in " + path);
    const auto header = detail::split_csv_line(line);
    std::size_t c_subj = header.size(), c_code = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string h = detail::trim(header[i]);
        if (h == "subject_id") c_subj = i;
        if (h == "icd9_code") c_code = i;
    }
    if (c_subj == header.size() || c_code == header.size())
        throw ConfigError("labels CSV " + path + " must have columns subject_id,icd9_code");

    std::map<std::string, std::vector<int>> by_subject;  // ordered -> sorted output
    std::size_t malformed = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() <= std::max(c_subj, c_code)) {
            ++malformed;
            continue;
        }
        const std::string subj = detail::trim(cells[c_subj]);
        const std::string code = detail::trim(cells[c_code]);
        auto& label = by_subject.try_emplace(subj, std::vector<int>(ranges.size(), 0)).first->second;
        const std::string head = code.substr(0, code.find('.'));
        const auto intpart = detail::parse_long(head);
        if (!intpart) {
            ++malformed;
            continue;
        }
        for (std::size_t g = 0; g < ranges.size(); ++g)
            if (*intpart >= ranges[g].lo && *intpart <= ranges[g].hi) label[g] = 1;
    }

    OrganLabelSet out;
    out.n_groups = ranges.size();
    out.malformed_count = malformed;
    for (auto& [id, label] : by_subject) {
        out.subject_ids.push_back(id);
        out.labels.push_back(std::move(label));
    }
    return out;
}

/// Per-feature affine transform recorded by normalize(). Stored std is always
/// positive: constant features keep std 1 and are listed by name.
struct FeatureNormalization {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<std::string> constant_features;
};

/// Z-scores every feature over its observed entries pooled across subjects
/// and hours (population std). Constant features are zero-centered with std
/// recorded as 1. Errors on a feature with no observed entry.
inline std::pair<CohortTensor, FeatureNormalization> normalize(const CohortTensor& tensor) {
    tensor.validate();
    const std::size_t P = tensor.n_features, T = tensor.n_hours, N = tensor.n_subjects;
    FeatureNormalization norm;
    norm.mean.assign(P, 0.0);
    norm.stddev.assign(P, 1.0);
    for (std::size_t p = 0; p < P; ++p) {
        double sum = 0, sumsq = 0;
        std::size_t count = 0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < T; ++t)
                if (tensor.observed(n, p, t)) {
                    const double v = tensor.at(n, p, t);
                    sum += v;
                    sumsq += v * v;
                    ++count;
                }
        if (count == 0)
            throw ConfigError("feature '" + tensor.feature_names[p] + "' has no observed entries");
        const double mean = sum / static_cast<double>(count);
        const double var = std::max(0.0, sumsq / static_cast<double>(count) - mean * mean);
        double std = std::sqrt(var);
        if (std <= 0.0) {
            std = 1.0;
            norm.constant_features.push_back(tensor.feature_names[p]);
        }
        norm.mean[p] = mean;
        norm.stddev[p] = std;
    }
    CohortTensor out = tensor;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t t = 0; t < T; ++t)
                if (out.observed(n, p, t))
                    out.values[out.index(n, p, t)] =
                        (out.at(n, p, t) - norm.mean[p]) / norm.stddev[p];
    return {std::move(out), std::move(norm)};
}

/// Inverse of normalize() on observed entries.
inline CohortTensor denormalize(const CohortTensor& tensor, const FeatureNormalization& norm) {
    if (norm.mean.size() != tensor.n_features || norm.stddev.size() != tensor.n_features)
        throw ConfigError("normalization parameters do not match tensor feature count");
    CohortTensor out = tensor;
    for (std::size_t n = 0; n < out.n_subjects; ++n)
        for (std::size_t p = 0; p < out.n_features; ++p)
            for (std::size_t t = 0; t < out.n_hours; ++t)
                if (out.observed(n, p, t))
                    out.values[out.index(n, p, t)] =
                        out.at(n, p, t) * norm.stddev[p] + norm.mean[p];
    return out;
}

}  // namespace tempheno
