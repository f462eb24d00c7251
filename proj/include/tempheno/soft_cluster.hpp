#pragma once

// Semi-supervised, time-aware hybrid soft clustering: centroids seeded from
// single-organ-label subjects, overlapping assignment against the mean of
// assigned centroids, a harmonic-weighted centroid update, one gradient
// calibration step per sweep against a fuzzy-weighted loss, and a final
// inverse-cubed-distance membership matrix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempheno/cohort.hpp"
#include "tempheno/errors.hpp"

namespace tempheno {
namespace cluster {

struct ClusterConfig {
    int k = 3;
    double eta = 2.0;     // fuzzifier
    double beta1 = 10.0;  // pull toward the target centroid
    double beta2 = 0.01;  // push away from non-target centroids
    double learning_rate = 1e-5;
    int max_iters = 200;
    std::vector<std::string> truncated_features = {"systolic_bp", "base_excess",
                                                   "respiratory_rate"};
    std::size_t trunc_window = 24;  // truncated features compare only hours [0, W)
    double trunc_scale = 5.0;       // and their per-feature distance is scaled by this
    double membership_exponent = 3.0;
    int max_assignments = 0;  // 0 = no cap; 1 reduces assignment to nearest-centroid
    int stable_iters = 3;     // early exit after this many unchanged assignment sweeps
    double centroid_tol = 1e-6;  // ... combined with centroid displacement below this

    void validate() const {
        if (k < 2) throw ConfigError("cluster: k must be >= 2");
        if (!(eta > 1.0)) throw ConfigError("cluster: eta must be > 1");
        if (beta1 < 0 || beta2 < 0) throw ConfigError("cluster: beta1, beta2 must be >= 0");
        if (learning_rate < 0) throw ConfigError("cluster: learning_rate must be >= 0");
        if (max_iters < 1) throw ConfigError("cluster: max_iters must be >= 1");
        if (trunc_scale <= 0) throw ConfigError("cluster: trunc_scale must be > 0");
        if (membership_exponent <= 0)
            throw ConfigError("cluster: membership_exponent must be > 0");
        if (max_assignments < 0) throw ConfigError("cluster: max_assignments must be >= 0");
    }
};

/// Per-feature comparison window and weight, resolved once per tensor.
struct DistanceSpec {
    std::size_t n_features = 0;
    std::size_t n_hours = 0;
    std::vector<std::size_t> window;  // hours compared, per feature
    std::vector<double> weight;
};

inline DistanceSpec make_distance_spec(const std::vector<std::string>& feature_names,
                                       std::size_t n_hours, const ClusterConfig& config) {
    if (config.trunc_window > n_hours)
        throw ConfigError("cluster: trunc_window exceeds tensor hour count");
    DistanceSpec spec;
    spec.n_features = feature_names.size();
    spec.n_hours = n_hours;
    spec.window.assign(spec.n_features, n_hours);
    spec.weight.assign(spec.n_features, 1.0);
    for (const auto& name : config.truncated_features) {
        const auto it = std::find(feature_names.begin(), feature_names.end(), name);
        if (it == feature_names.end()) continue;  // tensors without the feature are fine
        const auto p = static_cast<std::size_t>(it - feature_names.begin());
        spec.window[p] = config.trunc_window;
        spec.weight[p] = config.trunc_scale;
    }
    return spec;
}

/// Sum over features of the weighted Euclidean norm of the in-window
/// difference. Truncated features never read hours >= W.
inline double distance(const double* x, const double* c, const DistanceSpec& spec) {
    double total = 0;
    for (std::size_t p = 0; p < spec.n_features; ++p) {
        const double* xp = x + p * spec.n_hours;
        const double* cp = c + p * spec.n_hours;
        double sq = 0;
        for (std::size_t t = 0; t < spec.window[p]; ++t) {
            const double d = xp[t] - cp[t];
            sq += d * d;
        }
        total += spec.weight[p] * std::sqrt(sq);
    }
    return total;
}

/// Checked variant for external callers.
inline double distance_checked(const std::vector<double>& x, const std::vector<double>& c,
                               const DistanceSpec& spec) {
    const std::size_t len = spec.n_features * spec.n_hours;
    if (x.size() != len || c.size() != len)
        throw ConfigError("distance: slab shape does not match the distance spec");
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError("distance: non-finite subject value");
    for (double v : c)
        if (!std::isfinite(v)) throw NumericError("distance: non-finite centroid value");
    return distance(x.data(), c.data(), spec);
}

/// K trajectory centroids, each a P x T slab.
struct CentroidSet {
    std::size_t k = 0;
    std::size_t n_features = 0;
    std::size_t n_hours = 0;
    std::vector<double> data;  // k * P * T

    static CentroidSet zeros(std::size_t k, std::size_t p, std::size_t t) {
        CentroidSet out;
        out.k = k;
        out.n_features = p;
        out.n_hours = t;
        out.data.assign(k * p * t, 0.0);
        return out;
    }
    std::size_t slab_len() const { return n_features * n_hours; }
    double* centroid(std::size_t c) { return data.data() + c * slab_len(); }
    const double* centroid(std::size_t c) const { return data.data() + c * slab_len(); }
    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
    }
};

using Assignment = std::vector<int>;  // sorted centroid ids, never empty

/// Centroid g = elementwise mean over subjects whose label vector is exactly
/// the g-th unit vector. Labels must be aligned to the tensor's subjects.
inline CentroidSet init_centroids(const CohortTensor& tensor, const OrganLabelSet& labels,
                                  int k) {
    if (labels.labels.size() != tensor.n_subjects)
        throw ConfigError("init_centroids: labels not aligned to tensor subjects");
    if (static_cast<std::size_t>(k) != labels.n_groups)
        throw ConfigError("init_centroids: k must equal the organ group count");
    CentroidSet centroids =
        CentroidSet::zeros(static_cast<std::size_t>(k), tensor.n_features, tensor.n_hours);
    const std::size_t len = centroids.slab_len();
    for (int g = 0; g < k; ++g) {
        std::size_t count = 0;
        double* c = centroids.centroid(static_cast<std::size_t>(g));
        for (std::size_t i = 0; i < tensor.n_subjects; ++i) {
            if (OrganLabelSet::single_group(labels.labels[i]) != g) continue;
            const double* x = tensor.slab(i);
            for (std::size_t j = 0; j < len; ++j) c[j] += x[j];
            ++count;
        }
        if (count == 0)
            throw ConfigError("init_centroids: no single-label subjects for group " +
                              std::to_string(g + 1));
        for (std::size_t j = 0; j < len; ++j) c[j] /= static_cast<double>(count);
    }
    return centroids;
}

namespace detail {

inline void set_mean(const CentroidSet& centroids, const Assignment& members,
                     std::vector<double>& out) {
    const std::size_t len = centroids.slab_len();
    out.assign(len, 0.0);
    for (int c : members) {
        const double* src = centroids.centroid(static_cast<std::size_t>(c));
        for (std::size_t j = 0; j < len; ++j) out[j] += src[j];
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (std::size_t j = 0; j < len; ++j) out[j] *= inv;
}

}  // namespace detail

/// Greedy overlapping assignment: start at the nearest centroid and keep
/// adding the nearest unassigned one while the mean of the assigned centroids
/// moves strictly closer to the subject. When an old assignment is supplied,
/// it wins only if strictly closer (ties favor the new assignment).
inline Assignment assign(const double* x, const CentroidSet& centroids, const DistanceSpec& spec,
                         const Assignment* m_old = nullptr, int max_assignments = 0) {
    const std::size_t K = centroids.k;
    std::vector<double> dists(K);
    for (std::size_t c = 0; c < K; ++c) dists[c] = distance(x, centroids.centroid(c), spec);

    Assignment members;
    members.push_back(static_cast<int>(
        std::min_element(dists.begin(), dists.end()) - dists.begin()));
    double phi_dist = dists[static_cast<std::size_t>(members[0])];

    const std::size_t cap =
        max_assignments > 0 ? std::min<std::size_t>(static_cast<std::size_t>(max_assignments), K)
                            : K;
    std::vector<double> phi;
    std::vector<char> in_set(K, 0);
    in_set[static_cast<std::size_t>(members[0])] = 1;
    while (members.size() < cap) {
        int cand = -1;
        double cand_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < K; ++c)
            if (!in_set[c] && dists[c] < cand_d) {
                cand = static_cast<int>(c);
                cand_d = dists[c];
            }
        Assignment grown = members;
        grown.push_back(cand);
        std::sort(grown.begin(), grown.end());
        detail::set_mean(centroids, grown, phi);
        const double grown_dist = distance(x, phi.data(), spec);
        if (grown_dist < phi_dist) {
            members = std::move(grown);
            in_set[static_cast<std::size_t>(cand)] = 1;
            phi_dist = grown_dist;
        } else {
            break;
        }
    }
    std::sort(members.begin(), members.end());

    if (m_old != nullptr && !m_old->empty()) {
        detail::set_mean(centroids, *m_old, phi);
        const double old_dist = distance(x, phi.data(), spec);
        if (!(phi_dist <= old_dist)) return *m_old;
    }
    return members;
}

/// One harmonic-weighted centroid sweep. For each subject in cluster k with
/// weight alpha = 1/|m|^2 the contribution is |m| * x minus the other
/// assigned centroids, all read at their pre-sweep values. Clusters left
/// without members keep their previous centroid and are reported.
inline CentroidSet update_centroids(const CohortTensor& tensor,
                                    const std::vector<Assignment>& assignments,
                                    const CentroidSet& centroids,
                                    std::vector<int>* empty_clusters = nullptr) {
    if (assignments.size() != tensor.n_subjects)
        throw ConfigError("update_centroids: assignment count does not match subjects");
    const std::size_t K = centroids.k;
    const std::size_t len = centroids.slab_len();
    CentroidSet next = CentroidSet::zeros(K, centroids.n_features, centroids.n_hours);
    std::vector<double> weight_sum(K, 0.0);
    std::vector<double> contrib(len);
    for (std::size_t i = 0; i < tensor.n_subjects; ++i) {
        const Assignment& m = assignments[i];
        const double msize = static_cast<double>(m.size());
        const double alpha = 1.0 / (msize * msize);
        const double* x = tensor.slab(i);
        for (int k : m) {
            for (std::size_t j = 0; j < len; ++j) contrib[j] = msize * x[j];
            for (int c : m) {
                if (c == k) continue;
                const double* old = centroids.centroid(static_cast<std::size_t>(c));
                for (std::size_t j = 0; j < len; ++j) contrib[j] -= old[j];
            }
            double* acc = next.centroid(static_cast<std::size_t>(k));
            for (std::size_t j = 0; j < len; ++j) acc[j] += alpha * contrib[j];
            weight_sum[static_cast<std::size_t>(k)] += alpha;
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        double* c = next.centroid(k);
        if (weight_sum[k] == 0.0) {
            const double* old = centroids.centroid(k);
            std::copy(old, old + len, c);
            if (empty_clusters != nullptr) empty_clusters->push_back(static_cast<int>(k));
            continue;
        }
        for (std::size_t j = 0; j < len; ++j) c[j] /= weight_sum[k];
    }
    return next;
}

/// Snapshot of the calibration loss and its pieces at the pre-step centroids.
struct CalibrationState {
    Eigen::MatrixXd u;  // N x K fuzzy weights, frozen during differentiation
    double unsup_loss = 0;
    double t_loss = 0;
    double nt_loss = 0;
    double sup_loss = 0;
    double total_loss = 0;
    std::vector<double> gradient;  // d total_loss / d centroids, K * P * T
};

namespace detail {

// Adds coef * d dist(x, c)/dc to grad for one (subject, centroid) pair. The
// per-feature norm's zero case takes the zero subgradient.
inline void accumulate_distance_gradient(const double* x, const double* c,
                                         const DistanceSpec& spec, double coef, double* grad) {
    for (std::size_t p = 0; p < spec.n_features; ++p) {
        const double* xp = x + p * spec.n_hours;
        const double* cp = c + p * spec.n_hours;
        double sq = 0;
        for (std::size_t t = 0; t < spec.window[p]; ++t) {
            const double d = xp[t] - cp[t];
            sq += d * d;
        }
        if (sq == 0.0) continue;
        const double scale = coef * spec.weight[p] / std::sqrt(sq);
        double* gp = grad + p * spec.n_hours;
        for (std::size_t t = 0; t < spec.window[p]; ++t) gp[t] += scale * (cp[t] - xp[t]);
    }
}

}  // namespace detail

/// Computes the fuzzy weights u_ik = (d_ik / sum_j d_ij)^(-2/(eta-1)), the
/// unsupervised and label-constraint losses, and applies one gradient step to
/// the centroids with the weights held constant. A subject at distance zero
/// from a centroid degenerates to an indicator row and contributes nothing to
/// the gradient.
inline std::pair<CentroidSet, CalibrationState> calibrate(const CohortTensor& tensor,
                                                          const CentroidSet& centroids,
                                                          const OrganLabelSet& labels,
                                                          const ClusterConfig& config,
                                                          const DistanceSpec& spec) {
    if (labels.labels.size() != tensor.n_subjects)
        throw ConfigError("calibrate: labels not aligned to tensor subjects");
    const std::size_t N = tensor.n_subjects;
    const std::size_t K = centroids.k;
    const std::size_t len = centroids.slab_len();

    CalibrationState state;
    state.u.setZero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K));
    state.gradient.assign(K * len, 0.0);

    Eigen::MatrixXd d(N, K);
    for (std::size_t i = 0; i < N; ++i) {
        const double* x = tensor.slab(i);
        double row_sum = 0;
        int zero_at = -1;
        for (std::size_t k = 0; k < K; ++k) {
            const double dk = distance(x, centroids.centroid(k), spec);
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = dk;
            row_sum += dk;
            if (dk == 0.0 && zero_at < 0) zero_at = static_cast<int>(k);
        }
        if (zero_at >= 0) {
            state.u(static_cast<Eigen::Index>(i), zero_at) = 1.0;
            continue;
        }
        for (std::size_t k = 0; k < K; ++k)
            state.u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                std::pow(d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) / row_sum,
                         -2.0 / (config.eta - 1.0));
    }

    for (std::size_t i = 0; i < N; ++i) {
        const double* x = tensor.slab(i);
        const int target = OrganLabelSet::single_group(labels.labels[i]);
        for (std::size_t k = 0; k < K; ++k) {
            const double dk = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            const double uk =
                state.u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            double coef = std::pow(uk, config.eta);
            state.unsup_loss += coef * dk;
            if (target >= 0) {
                if (static_cast<std::size_t>(target) == k) {
                    state.t_loss += dk;
                    coef += config.beta1;
                } else {
                    state.nt_loss += dk;
                    coef -= config.beta2;
                }
            }
            if (coef != 0.0)
                detail::accumulate_distance_gradient(x, centroids.centroid(k), spec, coef,
                                                     state.gradient.data() + k * len);
        }
    }
    state.sup_loss = config.beta1 * state.t_loss - config.beta2 * state.nt_loss;
    state.total_loss = state.unsup_loss + state.sup_loss;
    if (!std::isfinite(state.total_loss))
        throw NumericError("calibrate: non-finite calibration loss");

    CentroidSet out = centroids;
    for (std::size_t j = 0; j < out.data.size(); ++j)
        out.data[j] -= config.learning_rate * state.gradient[j];
    return {std::move(out), std::move(state)};
}

/// Step-5 membership row: d^(-e) normalized. Zero distances split the row
/// uniformly among the zero-distance centroids.
inline std::vector<double> membership_from_distances(const std::vector<double>& dists,
                                                     double exponent) {
    std::vector<double> mu(dists.size(), 0.0);
    std::size_t zeros = 0;
    for (double d : dists)
        if (d == 0.0) ++zeros;
    if (zeros > 0) {
        for (std::size_t k = 0; k < dists.size(); ++k)
            if (dists[k] == 0.0) mu[k] = 1.0 / static_cast<double>(zeros);
        return mu;
    }
    double sum = 0;
    for (std::size_t k = 0; k < dists.size(); ++k) {
        mu[k] = std::pow(dists[k], -exponent);
        sum += mu[k];
    }
    for (double& v : mu) v /= sum;
    return mu;
}

struct SoftResult {
    Eigen::MatrixXd distances;    // N x K
    Eigen::MatrixXd memberships;  // N x K, rows sum to 1
    CentroidSet centroids;
    std::vector<Assignment> assignments;
    std::vector<double> loss_trace;  // total calibration loss per sweep
    int iterations = 0;
};

/// Full clustering loop: seed centroids from single-label subjects, then
/// sweep (centroid update, calibration step, overlapping reassignment) up to
/// max_iters, exiting early once assignments hold still for `stable_iters`
/// sweeps and centroids stop moving. Requires a fully imputed tensor.
inline SoftResult fit(const CohortTensor& tensor, const OrganLabelSet& labels,
                      const ClusterConfig& config) {
    config.validate();
    tensor.validate();
    if (!tensor.fully_observed())
        throw ConfigError("cluster: fit requires a fully observed (imputed) tensor");
    for (double v : tensor.values)
        if (!std::isfinite(v)) throw NumericError("cluster: non-finite tensor value");

    const DistanceSpec spec = make_distance_spec(tensor.feature_names, tensor.n_hours, config);
    const std::size_t N = tensor.n_subjects;
    const std::size_t K = static_cast<std::size_t>(config.k);

    SoftResult res;
    res.centroids = init_centroids(tensor, labels, config.k);
    res.assignments.resize(N);
    for (std::size_t i = 0; i < N; ++i)
        res.assignments[i] =
            assign(tensor.slab(i), res.centroids, spec, nullptr, config.max_assignments);

    int stable = 0;
    for (int iter = 0; iter < config.max_iters; ++iter) {
        const CentroidSet before = res.centroids;
        CentroidSet updated = update_centroids(tensor, res.assignments, res.centroids);
        auto [calibrated, state] = calibrate(tensor, updated, labels, config, spec);
        res.centroids = std::move(calibrated);
        if (!res.centroids.all_finite())
            throw NumericError("cluster: non-finite centroid at sweep " + std::to_string(iter));
        res.loss_trace.push_back(state.total_loss);

        bool changed = false;
        for (std::size_t i = 0; i < N; ++i) {
            Assignment next = assign(tensor.slab(i), res.centroids, spec, &res.assignments[i],
                                     config.max_assignments);
            if (next != res.assignments[i]) {
                changed = true;
                res.assignments[i] = std::move(next);
            }
        }
        res.iterations = iter + 1;

        double displacement = 0;
        for (std::size_t k = 0; k < K; ++k) {
            double sq = 0;
            const double* a = res.centroids.centroid(k);
            const double* b = before.centroid(k);
            for (std::size_t j = 0; j < res.centroids.slab_len(); ++j) {
                const double dd = a[j] - b[j];
                sq += dd * dd;
            }
            displacement = std::max(displacement, std::sqrt(sq));
        }
        stable = changed ? 0 : stable + 1;
        if (stable >= config.stable_iters && displacement < config.centroid_tol) break;
    }

    res.distances.setZero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K));
    res.memberships.setZero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K));
    std::vector<double> row(K);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            row[k] = distance(tensor.slab(i), res.centroids.centroid(k), spec);
            res.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
        }
        const auto mu = membership_from_distances(row, config.membership_exponent);
        for (std::size_t k = 0; k < K; ++k)
            res.memberships(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = mu[k];
    }
    return res;
}

}  // namespace cluster
}  // namespace tempheno
