#pragma once

// Post-clustering analysis: the ABM severity indicator, the combined
// (membership, ABM) representation, PAM K-Medoids over it, Silhouette-based
// cluster-count selection, and severity-ranked per-cluster summaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempheno/errors.hpp"

namespace tempheno {
namespace post {

/// ABM_i = 1 - (min_k d_ik / dist)^(1/3), dist being the maximum over the
/// whole matrix. Stays in [0,1]; errors when every distance is zero.
inline std::vector<double> abm(const Eigen::MatrixXd& distances) {
    if (distances.rows() < 1 || distances.cols() < 1)
        throw ConfigError("abm: empty distance matrix");
    if ((distances.array() < 0).any()) throw ConfigError("abm: negative distance");
    const double dist = distances.maxCoeff();
    if (dist <= 0.0) throw NumericError("abm: all distances are zero, global max undefined");
    std::vector<double> out(static_cast<std::size_t>(distances.rows()));
    for (Eigen::Index i = 0; i < distances.rows(); ++i)
        out[static_cast<std::size_t>(i)] = 1.0 - std::cbrt(distances.row(i).minCoeff() / dist);
    return out;
}

/// R_i = (mu_i1 .. mu_iK, ABM_i) per subject.
inline Eigen::MatrixXd build_representation(const Eigen::MatrixXd& memberships,
                                            const std::vector<double>& abm_values) {
    if (static_cast<std::size_t>(memberships.rows()) != abm_values.size())
        throw ConfigError("representation: membership and ABM sizes differ");
    Eigen::MatrixXd rep(memberships.rows(), memberships.cols() + 1);
    rep.leftCols(memberships.cols()) = memberships;
    for (Eigen::Index i = 0; i < rep.rows(); ++i)
        rep(i, memberships.cols()) = abm_values[static_cast<std::size_t>(i)];
    return rep;
}

namespace detail {

inline Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& points) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, i) = 0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = (points.row(i) - points.row(j)).norm();
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

}  // namespace detail

/// Mean Silhouette over all points with Euclidean distances: a_i is the mean
/// distance to the other members of the own cluster (0 for singletons), b_i
/// the smallest mean distance to any other cluster. Points with a = b = 0
/// score 0.
inline double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& assignment) {
    const std::size_t n = static_cast<std::size_t>(points.rows());
    if (assignment.size() != n) throw ConfigError("silhouette: assignment size mismatch");
    int n_clusters = 0;
    for (int a : assignment) {
        if (a < 0) throw ConfigError("silhouette: negative cluster id");
        n_clusters = std::max(n_clusters, a + 1);
    }
    std::vector<std::size_t> sizes(static_cast<std::size_t>(n_clusters), 0);
    for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];
    if (n_clusters < 2) throw ConfigError("silhouette: needs at least two clusters");
    for (std::size_t c = 0; c < sizes.size(); ++c)
        if (sizes[c] == 0) throw ConfigError("silhouette: cluster " + std::to_string(c) + " is empty");

    const Eigen::MatrixXd d = detail::pairwise_distances(points);
    double total = 0;
    std::vector<double> cluster_sum(static_cast<std::size_t>(n_clusters));
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(cluster_sum.begin(), cluster_sum.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i)
                cluster_sum[static_cast<std::size_t>(assignment[j])] +=
                    d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        const auto own = static_cast<std::size_t>(assignment[i]);
        if (sizes[own] == 1) continue;  // singleton: s_i = 0
        const double a = cluster_sum[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cluster_sum.size(); ++c)
            if (c != own) b = std::min(b, cluster_sum[c] / static_cast<double>(sizes[c]));
        const double denom = std::max(a, b);
        total += denom > 0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

struct HybridAssignment {
    std::vector<int> cluster;          // per point, 0-based
    std::vector<std::size_t> medoids;  // point indices, one per cluster
    Eigen::MatrixXd medoid_points;     // k x dim
    double total_cost = 0;
    double mean_silhouette = 0;
    std::vector<double> cost_trace;  // cost after build, then after each swap
};

/// PAM: greedy BUILD then best-improvement SWAP until no single swap lowers
/// the summed distance to the nearest medoid. Fully deterministic; the seed
/// is reserved for optional random restarts and unused by the base algorithm.
inline HybridAssignment kmedoids(const Eigen::MatrixXd& points, int k,
                                 std::uint64_t seed = 0) {
    (void)seed;
    const std::size_t n = static_cast<std::size_t>(points.rows());
    if (k < 2) throw ConfigError("kmedoids: k must be >= 2");
    if (static_cast<std::size_t>(k) > n) throw ConfigError("kmedoids: k exceeds point count");
    const Eigen::MatrixXd d = detail::pairwise_distances(points);

    std::vector<std::size_t> medoids;
    std::vector<char> is_medoid(n, 0);
    // BUILD: first the 1-medoid optimum, then the largest marginal gain.
    {
        std::size_t best = 0;
        double best_cost = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) {
            const double cost = d.col(static_cast<Eigen::Index>(c)).sum();
            if (cost < best_cost) {
                best_cost = cost;
                best = c;
            }
        }
        medoids.push_back(best);
        is_medoid[best] = 1;
    }
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i)
        nearest[i] = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(medoids[0]));
    while (medoids.size() < static_cast<std::size_t>(k)) {
        std::size_t best = n;
        double best_gain = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) {
            if (is_medoid[c]) continue;
            double gain = 0;
            for (std::size_t i = 0; i < n; ++i)
                gain += std::max(0.0, nearest[i] - d(static_cast<Eigen::Index>(i),
                                                     static_cast<Eigen::Index>(c)));
            if (gain > best_gain) {
                best_gain = gain;
                best = c;
            }
        }
        medoids.push_back(best);
        is_medoid[best] = 1;
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], d(static_cast<Eigen::Index>(i),
                                                static_cast<Eigen::Index>(best)));
    }

    // Nearest and second-nearest medoid distances drive the O(n) swap delta.
    std::vector<double> d1(n), d2(n);
    std::vector<std::size_t> n1(n);
    auto refresh = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            d1[i] = std::numeric_limits<double>::infinity();
            d2[i] = std::numeric_limits<double>::infinity();
            for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
                const double v =
                    d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(medoids[mi]));
                if (v < d1[i]) {
                    d2[i] = d1[i];
                    d1[i] = v;
                    n1[i] = mi;
                } else if (v < d2[i]) {
                    d2[i] = v;
                }
            }
        }
    };
    refresh();
    HybridAssignment out;
    double cost = 0;
    for (std::size_t i = 0; i < n; ++i) cost += d1[i];
    out.cost_trace.push_back(cost);

    const double improvement_eps = 1e-12;
    for (;;) {
        double best_delta = -improvement_eps;
        std::size_t best_m = 0, best_o = 0;
        bool found = false;
        for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
            for (std::size_t o = 0; o < n; ++o) {
                if (is_medoid[o]) continue;
                double delta = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dio =
                        d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
                    if (n1[i] == mi)
                        delta += std::min(dio, d2[i]) - d1[i];
                    else
                        delta += std::min(0.0, dio - d1[i]);
                }
                if (delta < best_delta) {
                    best_delta = delta;
                    best_m = mi;
                    best_o = o;
                    found = true;
                }
            }
        }
        if (!found) break;
        is_medoid[medoids[best_m]] = 0;
        medoids[best_m] = best_o;
        is_medoid[best_o] = 1;
        refresh();
        cost = 0;
        for (std::size_t i = 0; i < n; ++i) cost += d1[i];
        out.cost_trace.push_back(cost);
    }

    // Stable cluster numbering: medoids sorted by point index.
    std::sort(medoids.begin(), medoids.end());
    out.medoids = medoids;
    out.cluster.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
            const double v =
                d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(medoids[mi]));
            if (v < best) {
                best = v;
                out.cluster[i] = static_cast<int>(mi);
            }
        }
    }
    out.total_cost = cost;
    out.medoid_points.resize(static_cast<Eigen::Index>(medoids.size()), points.cols());
    for (std::size_t mi = 0; mi < medoids.size(); ++mi)
        out.medoid_points.row(static_cast<Eigen::Index>(mi)) =
            points.row(static_cast<Eigen::Index>(medoids[mi]));
    out.mean_silhouette = k >= 2 ? silhouette(points, out.cluster) : 0.0;
    return out;
}

struct SweepEntry {
    int k;
    double mean_silhouette;
};

struct SweepResult {
    int chosen_k = 0;
    std::vector<SweepEntry> table;
};

/// Runs K-Medoids plus Silhouette for every k in [k_min, k_max] and picks the
/// best-scoring k at or above constraint_min (ties go to the smaller k).
inline SweepResult sweep_k(const Eigen::MatrixXd& points, int k_min = 2, int k_max = 20,
                           int constraint_min = 4, std::uint64_t seed = 0) {
    const std::size_t n = static_cast<std::size_t>(points.rows());
    if (k_min < 2) throw ConfigError("sweep_k: k_min must be >= 2");
    if (k_max < k_min) throw ConfigError("sweep_k: empty k range");
    if (static_cast<std::size_t>(k_max) >= n)
        throw ConfigError("sweep_k: k_max must be < N");
    SweepResult res;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        const auto clustering = kmedoids(points, k, seed);
        res.table.push_back({k, clustering.mean_silhouette});
        if (k >= constraint_min && clustering.mean_silhouette > best) {
            best = clustering.mean_silhouette;
            res.chosen_k = k;
        }
    }
    if (res.chosen_k == 0)
        throw ConfigError("sweep_k: no k in range satisfies the minimum-cluster constraint");
    return res;
}

struct SummaryRow {
    int cluster;  // 1-based rank, most severe (lowest mean ABM) first
    std::size_t size;
    std::vector<double> mean_membership;
    double mean_abm;
    std::optional<double> mortality_pct;
};

struct RankedSummary {
    std::vector<SummaryRow> rows;
    std::vector<int> ranked_cluster;  // per subject, 1-based rank ids
};

/// Renumbers clusters by ascending mean ABM (most to least severe) and
/// reports size, mean memberships, mean ABM and, when outcomes are given,
/// mortality percentage per cluster.
inline RankedSummary rank_and_summarize(const Eigen::MatrixXd& representation,
                                        const std::vector<int>& assignment,
                                        const std::optional<std::vector<int>>& outcomes =
                                            std::nullopt) {
    const std::size_t n = static_cast<std::size_t>(representation.rows());
    if (assignment.size() != n)
        throw ConfigError("rank_and_summarize: assignment does not cover all subjects");
    if (outcomes && outcomes->size() != n)
        throw ConfigError("rank_and_summarize: outcomes size mismatch");
    const Eigen::Index k_soft = representation.cols() - 1;
    int n_clusters = 0;
    for (int a : assignment) n_clusters = std::max(n_clusters, a + 1);

    struct Acc {
        std::size_t size = 0;
        std::vector<double> mu_sum;
        double abm_sum = 0;
        double deaths = 0;
    };
    std::vector<Acc> acc(static_cast<std::size_t>(n_clusters));
    for (auto& a : acc) a.mu_sum.assign(static_cast<std::size_t>(k_soft), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        Acc& a = acc[static_cast<std::size_t>(assignment[i])];
        ++a.size;
        for (Eigen::Index c = 0; c < k_soft; ++c)
            a.mu_sum[static_cast<std::size_t>(c)] += representation(static_cast<Eigen::Index>(i), c);
        a.abm_sum += representation(static_cast<Eigen::Index>(i), k_soft);
        if (outcomes) a.deaths += (*outcomes)[i] != 0 ? 1.0 : 0.0;
    }

    std::vector<int> order(acc.size());
    for (std::size_t c = 0; c < acc.size(); ++c) order[c] = static_cast<int>(c);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double ma = acc[static_cast<std::size_t>(a)].size
                              ? acc[static_cast<std::size_t>(a)].abm_sum /
                                    static_cast<double>(acc[static_cast<std::size_t>(a)].size)
                              : std::numeric_limits<double>::infinity();
        const double mb = acc[static_cast<std::size_t>(b)].size
                              ? acc[static_cast<std::size_t>(b)].abm_sum /
                                    static_cast<double>(acc[static_cast<std::size_t>(b)].size)
                              : std::numeric_limits<double>::infinity();
        return ma < mb;
    });

    RankedSummary out;
    std::vector<int> rank_of(acc.size(), 0);
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto c = static_cast<std::size_t>(order[r]);
        rank_of[c] = static_cast<int>(r) + 1;
        if (acc[c].size == 0) continue;
        SummaryRow row;
        row.cluster = static_cast<int>(r) + 1;
        row.size = acc[c].size;
        row.mean_membership.resize(static_cast<std::size_t>(k_soft));
        for (Eigen::Index j = 0; j < k_soft; ++j)
            row.mean_membership[static_cast<std::size_t>(j)] =
                acc[c].mu_sum[static_cast<std::size_t>(j)] / static_cast<double>(acc[c].size);
        row.mean_abm = acc[c].abm_sum / static_cast<double>(acc[c].size);
        if (outcomes) row.mortality_pct = 100.0 * acc[c].deaths / static_cast<double>(acc[c].size);
        out.rows.push_back(std::move(row));
    }
    out.ranked_cluster.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.ranked_cluster[i] = rank_of[static_cast<std::size_t>(assignment[i])];
    return out;
}

}  // namespace post
}  // namespace tempheno
