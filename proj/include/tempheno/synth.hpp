#pragma once

// Synthetic longitudinal cohorts with planted structure: smooth archetype
// trajectories, per-subject mixtures and off-manifold severity offsets
// arranged into hybrid blobs, planted time shifts, configurable missingness,
// organ labels for dominant-archetype subjects, and outcome flags. Every
// draw derives from the spec seed, so outputs are reproducible bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempheno/cohort.hpp"
#include "tempheno/errors.hpp"
#include "tempheno/imputation.hpp"
#include "tempheno/soft_cluster.hpp"

namespace tempheno {
namespace synth {

inline const std::vector<std::string>& default_feature_names() {
    static const std::vector<std::string> names = {
        "systolic_bp", "base_excess", "creatinine", "heart_rate",
        "pt_inr",      "lactate",     "respiratory_rate"};
    return names;
}

enum class Missingness { uniform, block };

struct SynthSpec {
    std::size_t n_subjects = 200;
    std::size_t n_features = 7;
    std::size_t n_hours = 120;
    int n_archetypes = 3;
    double mixture_concentration = 1.0;  // larger = tighter blobs around their prototype
    double noise_std = 0.1;
    int max_shift = 6;  // planted shifts drawn uniformly from [-max_shift, max_shift]
    double missing_fraction = 0.4;
    Missingness mechanism = Missingness::uniform;
    int n_blobs = 6;
    double severity_scale = 1.0;  // scales off-manifold offsets; 0 = exact rank-K mixtures
    std::uint64_t seed = 0;

    void validate() const {
        if (n_subjects < 1 || n_features < 1 || n_hours < 1)
            throw ConfigError("synth: counts must be positive");
        if (n_archetypes < 2) throw ConfigError("synth: need at least two archetypes");
        if (n_blobs < n_archetypes)
            throw ConfigError("synth: blob count must be >= archetype count");
        if (!(missing_fraction >= 0 && missing_fraction < 1))
            throw ConfigError("synth: missing_fraction must lie in [0, 1)");
        if (max_shift < 0 || static_cast<std::size_t>(max_shift) >= n_hours)
            throw ConfigError("synth: max_shift must lie in [0, T)");
        if (noise_std < 0) throw ConfigError("synth: noise_std must be >= 0");
        if (severity_scale < 0) throw ConfigError("synth: severity_scale must be >= 0");
        if (mixture_concentration <= 0)
            throw ConfigError("synth: mixture_concentration must be > 0");
    }
};

struct GroundTruth {
    cluster::CentroidSet archetypes;  // K x P x T
    Eigen::MatrixXd mixture_weights;  // N x K
    std::vector<int> shifts;          // the tau that re-aligns each subject
    std::vector<double> clean;        // noiseless values on the observed timeline
    std::vector<std::uint8_t> clean_valid;  // 0 where the shift vacated the window
    std::vector<std::size_t> hidden_cells;  // flat indices hidden by the missingness mechanism
    std::vector<int> blob_ids;
    std::vector<double> severity;  // in [0, 1]
    std::vector<int> mortality;
};

struct SynthOutput {
    CohortTensor tensor;
    OrganLabelSet labels;
    GroundTruth truth;
};

namespace detail {

// Smooth zero-mean unit-RMS series from a short random Fourier sum.
inline std::vector<double> smooth_series(std::mt19937_64& rng, std::size_t t_count) {
    static const int harmonics[] = {1, 2, 3, 5};
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    std::vector<double> s(t_count, 0.0);
    for (int h : harmonics) {
        const double amp = gauss(rng) / std::sqrt(static_cast<double>(h));
        const double ph = phase(rng);
        for (std::size_t t = 0; t < t_count; ++t)
            s[t] += amp * std::sin(2.0 * M_PI * h * static_cast<double>(t) /
                                       static_cast<double>(t_count) +
                                   ph);
    }
    double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(t_count);
    double sq = 0;
    for (double& v : s) {
        v -= mean;
        sq += v * v;
    }
    const double rms = std::sqrt(sq / static_cast<double>(t_count));
    if (rms > 0)
        for (double& v : s) v /= rms;
    return s;
}

inline std::vector<double> dirichlet(std::mt19937_64& rng, const std::vector<double>& alpha) {
    std::vector<double> w(alpha.size());
    double sum = 0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        std::gamma_distribution<double> gamma(alpha[i], 1.0);
        w[i] = gamma(rng);
        sum += w[i];
    }
    if (sum <= 0) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
        return w;
    }
    for (double& v : w) v /= sum;
    return w;
}

struct BlobPrototype {
    std::vector<double> weights;
    double offset;  // off-manifold distance driving severity and ABM spread
};

// Blob layout: the last K blobs are near-pure archetypes (they supply the
// labeled subjects); earlier blobs are mixtures with growing off-manifold
// offsets, the first being the balanced most-severe group.
inline std::vector<BlobPrototype> blob_prototypes(std::mt19937_64& rng, int n_blobs,
                                                  int n_archetypes) {
    std::vector<BlobPrototype> blobs(static_cast<std::size_t>(n_blobs));
    const int mixed = n_blobs - n_archetypes;
    for (int b = 0; b < n_blobs; ++b) {
        auto& blob = blobs[static_cast<std::size_t>(b)];
        blob.weights.assign(static_cast<std::size_t>(n_archetypes),
                            0.0);
        if (b >= mixed) {
            const auto g = static_cast<std::size_t>(b - mixed);
            std::fill(blob.weights.begin(), blob.weights.end(),
                      0.1 / static_cast<double>(n_archetypes - 1));
            blob.weights[g] = 0.9;
        } else if (b == 0) {
            std::fill(blob.weights.begin(), blob.weights.end(),
                      1.0 / static_cast<double>(n_archetypes));
        } else {
            std::vector<double> alpha(static_cast<std::size_t>(n_archetypes), 1.2);
            alpha[static_cast<std::size_t>(b % n_archetypes)] = 4.0;
            blob.weights = dirichlet(rng, alpha);
        }
        // offsets descend from severe to mild across blobs
        blob.offset = n_blobs > 1 ? 2.2 * static_cast<double>(n_blobs - 1 - b) /
                                        static_cast<double>(n_blobs - 1) +
                                        0.05
                                  : 0.05;
    }
    return blobs;
}

}  // namespace detail

/// Generates the cohort. Archetypes are rejected and redrawn until every pair
/// is separated by at least five noise standard deviations in per-cell RMS;
/// the first three subjects of each near-pure blob carry its exact prototype
/// weights so every archetype has single-label subjects whenever N >= 3K.
inline SynthOutput generate(const SynthSpec& spec) {
    spec.validate();
    const std::size_t N = spec.n_subjects, P = spec.n_features, T = spec.n_hours;
    const auto K = static_cast<std::size_t>(spec.n_archetypes);
    std::mt19937_64 master(spec.seed);

    SynthOutput out;
    auto& truth = out.truth;

    // archetypes with enforced pairwise separation
    const double min_rms = 5.0 * spec.noise_std;
    bool separated = false;
    for (int attempt = 0; attempt < 20 && !separated; ++attempt) {
        truth.archetypes = cluster::CentroidSet::zeros(K, P, T);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t p = 0; p < P; ++p) {
                const auto series = detail::smooth_series(master, T);
                std::copy(series.begin(), series.end(),
                          truth.archetypes.centroid(k) + p * T);
            }
        separated = true;
        for (std::size_t a = 0; a < K && separated; ++a)
            for (std::size_t b = a + 1; b < K && separated; ++b) {
                double sq = 0;
                const double* ca = truth.archetypes.centroid(a);
                const double* cb = truth.archetypes.centroid(b);
                for (std::size_t j = 0; j < P * T; ++j) {
                    const double d = ca[j] - cb[j];
                    sq += d * d;
                }
                if (std::sqrt(sq / static_cast<double>(P * T)) < min_rms) separated = false;
            }
    }
    if (!separated)
        throw ConfigError(
            "synth: infeasible archetype separation for the requested noise level");

    const auto blobs = detail::blob_prototypes(master, spec.n_blobs, spec.n_archetypes);
    const int mixed_blobs = spec.n_blobs - spec.n_archetypes;

    out.tensor = CohortTensor::empty(N, P, T);
    out.tensor.feature_names =
        P == default_feature_names().size()
            ? default_feature_names()
            : [&] {
                  std::vector<std::string> names;
                  for (std::size_t p = 0; p < P; ++p)
                      names.push_back("var_" + std::to_string(p + 1));
                  return names;
              }();
    for (std::size_t i = 0; i < N; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "s%05zu", i + 1);
        out.tensor.subject_ids[i] = buf;
    }

    truth.mixture_weights.setZero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K));
    truth.shifts.assign(N, 0);
    truth.blob_ids.assign(N, 0);
    truth.severity.assign(N, 0.0);
    truth.mortality.assign(N, 0);
    truth.clean.assign(N * P * T, std::numeric_limits<double>::quiet_NaN());
    truth.clean_valid.assign(N * P * T, 0);

    std::vector<std::uint64_t> subject_seeds(N);
    for (auto& s : subject_seeds) s = master();

    std::vector<std::size_t> pure_forced(static_cast<std::size_t>(spec.n_blobs), 0);
    std::vector<double> canonical(N * P * T, 0.0);
    std::vector<double> pop_mean(P * T, 0.0);

    for (std::size_t i = 0; i < N; ++i) {
        std::mt19937_64 rng(subject_seeds[i]);
        const int blob = static_cast<int>(i % static_cast<std::size_t>(spec.n_blobs));
        truth.blob_ids[i] = blob;
        const auto& proto = blobs[static_cast<std::size_t>(blob)];

        std::vector<double> w;
        if (blob >= mixed_blobs && pure_forced[static_cast<std::size_t>(blob)] < 3) {
            w = proto.weights;  // exact prototype: guaranteed single-label seeds
            ++pure_forced[static_cast<std::size_t>(blob)];
        } else {
            std::vector<double> alpha(K);
            for (std::size_t k = 0; k < K; ++k)
                alpha[k] = std::max(0.02, proto.weights[k]) * 60.0 * spec.mixture_concentration;
            w = detail::dirichlet(rng, alpha);
        }
        for (std::size_t k = 0; k < K; ++k)
            truth.mixture_weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                w[k];

        // canonical trajectory: archetype mixture plus the blob's off-manifold offset
        double* canon = canonical.data() + i * P * T;
        for (std::size_t k = 0; k < K; ++k) {
            const double* arch = truth.archetypes.centroid(k);
            for (std::size_t j = 0; j < P * T; ++j) canon[j] += w[k] * arch[j];
        }
        if (spec.severity_scale > 0 && proto.offset > 0) {
            std::uniform_real_distribution<double> jitter(0.85, 1.15);
            const double magnitude = proto.offset * spec.severity_scale * jitter(rng);
            double sq = 0;
            std::vector<double> offset(P * T);
            for (std::size_t p = 0; p < P; ++p) {
                const auto series = detail::smooth_series(rng, T);
                std::copy(series.begin(), series.end(), offset.begin() + p * T);
            }
            for (double v : offset) sq += v * v;
            const double rms = std::sqrt(sq / static_cast<double>(P * T));
            if (rms > 0)
                for (std::size_t j = 0; j < P * T; ++j)
                    canon[j] += magnitude * offset[j] / rms;
        }
        for (std::size_t j = 0; j < P * T; ++j) pop_mean[j] += canon[j];

        if (spec.max_shift > 0) {
            // Discretized centered Gaussian: a clear plurality of zero shifts
            // pins the cohort timeline, keeping per-subject shifts
            // identifiable (a flat distribution leaves a global offset free).
            std::normal_distribution<double> shift(0.0, static_cast<double>(spec.max_shift) / 3.0);
            const int s = static_cast<int>(std::lround(shift(rng)));
            truth.shifts[i] = std::clamp(s, -spec.max_shift, spec.max_shift);
        }
    }
    for (double& v : pop_mean) v /= static_cast<double>(N);

    // severity: per-cell RMS distance of the canonical trajectory from the
    // population mean, normalized by the cohort maximum
    double max_raw = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const double* canon = canonical.data() + i * P * T;
        double sq = 0;
        for (std::size_t j = 0; j < P * T; ++j) {
            const double d = canon[j] - pop_mean[j];
            sq += d * d;
        }
        truth.severity[i] = std::sqrt(sq / static_cast<double>(P * T));
        max_raw = std::max(max_raw, truth.severity[i]);
    }
    if (max_raw > 0)
        for (double& s : truth.severity) s /= max_raw;

    // observed timeline: un-align by the planted shift, add noise, hide cells
    std::vector<double> shifted(P * T);
    std::vector<std::uint8_t> shifted_valid(P * T);
    for (std::size_t i = 0; i < N; ++i) {
        std::mt19937_64 rng(subject_seeds[i] ^ 0xd1b54a32d192ed03ULL);
        imputation::shift_slab(canonical.data() + i * P * T, nullptr, P, T, -truth.shifts[i],
                               shifted.data(), shifted_valid.data());
        std::normal_distribution<double> noise(0.0, spec.noise_std);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        std::vector<std::uint8_t> hidden(P * T, 0);
        if (spec.missing_fraction > 0) {
            if (spec.mechanism == Missingness::uniform) {
                for (std::size_t j = 0; j < P * T; ++j)
                    if (unit(rng) < spec.missing_fraction) hidden[j] = 1;
            } else {
                std::uniform_int_distribution<std::size_t> start(0, T - 1);
                std::uniform_int_distribution<std::size_t> span(4, 12);
                for (std::size_t p = 0; p < P; ++p) {
                    const auto target = static_cast<std::size_t>(
                        spec.missing_fraction * static_cast<double>(T));
                    std::size_t count = 0;
                    for (int guard = 0; guard < 64 && count < target; ++guard) {
                        const std::size_t s = start(rng);
                        const std::size_t e = std::min(T, s + span(rng));
                        for (std::size_t t = s; t < e; ++t) {
                            if (!hidden[p * T + t]) {
                                hidden[p * T + t] = 1;
                                ++count;
                            }
                        }
                    }
                }
            }
        }

        for (std::size_t j = 0; j < P * T; ++j) {
            const std::size_t cell = i * P * T + j;
            if (!shifted_valid[j]) continue;  // shift-vacated: no truth, never observed
            truth.clean[cell] = shifted[j];
            truth.clean_valid[cell] = 1;
            const double noisy = shifted[j] + (spec.noise_std > 0 ? noise(rng) : 0.0);
            if (hidden[j]) {
                truth.hidden_cells.push_back(cell);
            } else {
                out.tensor.values[cell] = noisy;
                out.tensor.mask[cell] = 1;
            }
        }
    }

    // labels: a single unit vector wherever one archetype clearly dominates
    out.labels.n_groups = K;
    out.labels.subject_ids = out.tensor.subject_ids;
    out.labels.labels.assign(N, std::vector<int>(K, 0));
    for (std::size_t i = 0; i < N; ++i) {
        Eigen::Index dominant = 0;
        const double top = truth.mixture_weights.row(static_cast<Eigen::Index>(i)).maxCoeff(&dominant);
        if (top > 0.8) out.labels.labels[i][static_cast<std::size_t>(dominant)] = 1;
    }

    // mortality risk grows with planted severity
    for (std::size_t i = 0; i < N; ++i) {
        std::mt19937_64 rng(subject_seeds[i] ^ 0x94d049bb133111ebULL);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double p = std::clamp(0.05 + 0.85 * truth.severity[i], 0.0, 1.0);
        truth.mortality[i] = unit(rng) < p ? 1 : 0;
    }
    return out;
}

/// Chance-corrected agreement between two partitions.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw ConfigError("ari: partition sizes differ");
    if (a.empty()) throw ConfigError("ari: empty partitions");
    const auto relabel = [](const std::vector<int>& v) {
        std::vector<int> ids = v;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        std::vector<std::size_t> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            out[i] = static_cast<std::size_t>(
                std::lower_bound(ids.begin(), ids.end(), v[i]) - ids.begin());
        return std::pair{out, ids.size()};
    };
    const auto [ra, na] = relabel(a);
    const auto [rb, nb] = relabel(b);
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(na),
                                                  static_cast<Eigen::Index>(nb));
    for (std::size_t i = 0; i < a.size(); ++i)
        table(static_cast<Eigen::Index>(ra[i]), static_cast<Eigen::Index>(rb[i])) += 1.0;
    const auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_cells = 0;
    for (Eigen::Index i = 0; i < table.rows(); ++i)
        for (Eigen::Index j = 0; j < table.cols(); ++j) sum_cells += choose2(table(i, j));
    double sum_rows = 0, sum_cols = 0;
    for (Eigen::Index i = 0; i < table.rows(); ++i) sum_rows += choose2(table.row(i).sum());
    for (Eigen::Index j = 0; j < table.cols(); ++j) sum_cols += choose2(table.col(j).sum());
    const double n_pairs = choose2(static_cast<double>(a.size()));
    const double expected = sum_rows * sum_cols / n_pairs;
    const double maximum = 0.5 * (sum_rows + sum_cols);
    if (maximum == expected) return 0.0;  // both partitions trivial
    return (sum_cells - expected) / (maximum - expected);
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ConfigError("spearman: size mismatch");
    if (x.size() < 2) throw ConfigError("spearman: need at least two samples");
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
            for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
            i = j;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx == 0 || vy == 0) throw NumericError("spearman: constant ranks");
    return cov / std::sqrt(vx * vy);
}

struct PipelineOutputs {
    const CohortTensor* imputed = nullptr;
    const cluster::CentroidSet* centroids = nullptr;
    const std::vector<int>* hybrid_clusters = nullptr;
    const std::vector<double>* abm = nullptr;
};

struct RecoveryReport {
    std::optional<double> imputation_rel_rmse;  // on mechanism-hidden cells
    std::optional<double> centroid_rms;         // after the best archetype bijection
    std::optional<double> ari;                  // planted blobs vs hybrid clusters
    std::optional<double> severity_spearman;    // planted severity vs (1 - ABM)
};

/// Scores whichever pipeline outputs are supplied against the planted truth.
inline RecoveryReport score_recovery(const GroundTruth& truth, const PipelineOutputs& outputs) {
    RecoveryReport rep;
    const std::size_t n = truth.severity.size();

    if (outputs.imputed != nullptr) {
        if (outputs.imputed->values.size() != truth.clean.size())
            throw ConfigError("score_recovery: imputed tensor shape mismatch");
        double err = 0, ref = 0;
        for (std::size_t cell : truth.hidden_cells) {
            const double t = truth.clean[cell];
            const double d = outputs.imputed->values[cell] - t;
            err += d * d;
            ref += t * t;
        }
        if (ref > 0) rep.imputation_rel_rmse = std::sqrt(err / ref);
    }

    if (outputs.centroids != nullptr) {
        const auto& got = *outputs.centroids;
        const auto& want = truth.archetypes;
        if (got.k != want.k || got.slab_len() != want.slab_len())
            throw ConfigError("score_recovery: centroid shape mismatch");
        if (got.k > 8) throw ConfigError("score_recovery: too many centroids for bijection");
        std::vector<std::size_t> perm(got.k);
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double sq = 0;
            for (std::size_t k = 0; k < got.k; ++k) {
                const double* a = got.centroid(k);
                const double* b = want.centroid(perm[k]);
                for (std::size_t j = 0; j < got.slab_len(); ++j) {
                    const double d = a[j] - b[j];
                    sq += d * d;
                }
            }
            best = std::min(best,
                            std::sqrt(sq / static_cast<double>(got.k * got.slab_len())));
        } while (std::next_permutation(perm.begin(), perm.end()));
        rep.centroid_rms = best;
    }

    if (outputs.hybrid_clusters != nullptr) {
        if (outputs.hybrid_clusters->size() != n)
            throw ConfigError("score_recovery: hybrid assignment size mismatch");
        rep.ari = adjusted_rand_index(truth.blob_ids, *outputs.hybrid_clusters);
    }

    if (outputs.abm != nullptr) {
        if (outputs.abm->size() != n)
            throw ConfigError("score_recovery: ABM vector size mismatch");
        std::vector<double> inv(n);
        for (std::size_t i = 0; i < n; ++i) inv[i] = 1.0 - (*outputs.abm)[i];
        rep.severity_spearman = spearman(truth.severity, inv);
    }
    return rep;
}

}  // namespace synth
}  // namespace tempheno
