#pragma once

// Artifact persistence: tensor directories (meta.json + flat little-endian
// float64 values + byte mask), raw binary arrays, and CSV emission with a
// fixed round-trippable float format so identical runs produce identical
// bytes.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempheno/cohort.hpp"
#include "tempheno/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary artifacts are little-endian; big-endian hosts are unsupported");

namespace tempheno {

/// %.17g: shortest text that still round-trips an IEEE double exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_doubles(const std::string& path, const std::vector<double>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out) throw MissingArtifactError("short write to " + path);
}

inline std::vector<double> read_doubles(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot read " + path);
    std::vector<double> data(expected);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(expected * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(double))
        throw ConfigError(path + " holds fewer values than its metadata declares");
    return data;
}

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot read " + path);
    std::vector<std::uint8_t> data(expected);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(in.gcount()) != expected)
        throw ConfigError(path + " holds fewer bytes than its metadata declares");
    return data;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return j;
}

/// Saves a tensor as a directory: meta.json, values.bin ((n,p,t) row-major
/// float64), mask.bin (one byte per cell). Optional normalization parameters
/// ride along in meta.json.
inline void save_tensor(const std::string& dir, const CohortTensor& tensor,
                        const FeatureNormalization* norm = nullptr) {
    tensor.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json meta{{"n_subjects", tensor.n_subjects},
                        {"n_features", tensor.n_features},
                        {"n_hours", tensor.n_hours},
                        {"feature_names", tensor.feature_names},
                        {"subject_ids", tensor.subject_ids}};
    if (norm != nullptr)
        meta["normalization"] = {{"mean", norm->mean},
                                 {"stddev", norm->stddev},
                                 {"constant_features", norm->constant_features}};
    write_json(dir + "/meta.json", meta);
    // NaN sentinels in unobserved cells are written as-is; readers must use the mask.
    write_doubles(dir + "/values.bin", tensor.values);
    write_bytes(dir + "/mask.bin", tensor.mask);
}

struct LoadedTensor {
    CohortTensor tensor;
    std::optional<FeatureNormalization> normalization;
};

inline LoadedTensor load_tensor(const std::string& dir) {
    if (!std::filesystem::exists(dir + "/meta.json"))
        throw MissingArtifactError("missing tensor directory " + dir);
    const auto meta = load_json(dir + "/meta.json");
    LoadedTensor out;
    CohortTensor& t = out.tensor;
    t.n_subjects = meta.at("n_subjects").get<std::size_t>();
    t.n_features = meta.at("n_features").get<std::size_t>();
    t.n_hours = meta.at("n_hours").get<std::size_t>();
    t.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
    t.subject_ids = meta.at("subject_ids").get<std::vector<std::string>>();
    t.values = read_doubles(dir + "/values.bin", t.cell_count());
    t.mask = read_bytes(dir + "/mask.bin", t.cell_count());
    t.validate();
    if (meta.contains("normalization")) {
        FeatureNormalization norm;
        norm.mean = meta["normalization"].at("mean").get<std::vector<double>>();
        norm.stddev = meta["normalization"].at("stddev").get<std::vector<double>>();
        norm.constant_features =
            meta["normalization"].at("constant_features").get<std::vector<std::string>>();
        out.normalization = std::move(norm);
    }
    return out;
}

/// Row-by-row CSV writer with deterministic float formatting.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw MissingArtifactError("cannot write " + path);
    }
    void cell(const std::string& s) {
        if (!first_) out_ << ',';
        out_ << s;
        first_ = false;
    }
    void cell(double v) { cell(format_double(v)); }
    void cell(std::size_t v) { cell(std::to_string(v)); }
    void cell(int v) { cell(std::to_string(v)); }
    void endrow() {
        out_ << '\n';
        first_ = true;
    }

private:
    std::ofstream out_;
    bool first_ = true;
};

}  // namespace tempheno
