#pragma once

// Missing-data imputation by alternating minimization: masked low-rank
// factorization of the unfolded N x (P*T) matrix interleaved with a
// per-subject discrete time-shift search, then reconstruction on the
// original timeline with observed entries restored verbatim.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "tempheno/cohort.hpp"
#include "tempheno/errors.hpp"

namespace tempheno {
namespace imputation {

struct ImputeConfig {
    int rank = 5;
    int max_shift = 12;  // search range [-max_shift, +max_shift] hours
    double tol = 1e-5;   // relative objective decrease; below it the loop stops
    int max_outer_iters = 50;
    double ridge = 1e-6;
    std::uint64_t seed = 0;  // reserved; initialization is a deterministic SVD

    void validate(std::size_t n, std::size_t p, std::size_t t) const {
        if (rank < 1) throw ConfigError("impute: rank must be >= 1");
        if (static_cast<std::size_t>(rank) > std::min(n, p * t))
            throw ConfigError("impute: rank exceeds min(N, P*T)");
        if (max_shift < 0) throw ConfigError("impute: max_shift must be >= 0");
        if (static_cast<std::size_t>(max_shift) >= t)
            throw ConfigError("impute: max_shift must be < T");
        if (max_outer_iters < 1) throw ConfigError("impute: max_outer_iters must be >= 1");
        if (ridge < 0) throw ConfigError("impute: ridge must be >= 0");
    }
};

struct ImputationResult {
    Eigen::MatrixXd U;  // N x r
    Eigen::MatrixXd V;  // (P*T) x r
    std::vector<int> tau;
    std::vector<double> objective_trace;  // regularized masked loss per outer iteration
    std::vector<std::size_t> zero_rows;   // rows with no observed entry (factor forced to 0)
    std::vector<std::size_t> zero_cols;
};

/// Shifts one P x T slab in time. Positive tau delays the series: the output
/// at hour t carries the input at hour t - tau; vacated cells become
/// unobserved. Input cells may themselves be unobserved per in_mask (pass
/// nullptr for a fully observed slab).
inline void shift_slab(const double* in, const std::uint8_t* in_mask, std::size_t p_count,
                       std::size_t t_count, int tau, double* out, std::uint8_t* out_mask) {
    for (std::size_t p = 0; p < p_count; ++p) {
        for (std::size_t t = 0; t < t_count; ++t) {
            const long src = static_cast<long>(t) - tau;
            const std::size_t j = p * t_count + t;
            if (src < 0 || src >= static_cast<long>(t_count)) {
                out[j] = std::numeric_limits<double>::quiet_NaN();
                out_mask[j] = 0;
                continue;
            }
            const std::size_t sj = p * t_count + static_cast<std::size_t>(src);
            const bool obs = in_mask == nullptr || in_mask[sj] != 0;
            out[j] = obs ? in[sj] : std::numeric_limits<double>::quiet_NaN();
            out_mask[j] = obs ? 1 : 0;
        }
    }
}

using IndicatorMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Unfolds the tensor into N x (P*T) with row i shifted by tau[i], flattened
/// feature-major (column j = p*T + t). The indicator mirrors observability
/// after shifting; unobserved cells of D hold 0 and must not be read.
inline void unfold(const CohortTensor& tensor, const std::vector<int>& tau, Eigen::MatrixXd& D,
                   IndicatorMatrix& A) {
    const std::size_t N = tensor.n_subjects, P = tensor.n_features, T = tensor.n_hours;
    if (tau.size() != N) throw ConfigError("unfold: tau length must equal subject count");
    D.setZero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(P * T));
    A.setZero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(P * T));
    std::vector<double> row(P * T);
    std::vector<std::uint8_t> row_mask(P * T);
    for (std::size_t i = 0; i < N; ++i) {
        shift_slab(tensor.slab(i), tensor.mask.data() + i * P * T, P, T, tau[i], row.data(),
                   row_mask.data());
        for (std::size_t j = 0; j < P * T; ++j) {
            if (row_mask[j]) {
                D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
                A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1;
            }
        }
    }
}

/// Masked squared error plus the ridge terms; the quantity the alternating
/// steps jointly decrease.
inline double objective(const Eigen::MatrixXd& D, const IndicatorMatrix& A,
                        const Eigen::MatrixXd& U, const Eigen::MatrixXd& V, double ridge) {
    double err = 0;
    for (Eigen::Index i = 0; i < D.rows(); ++i)
        for (Eigen::Index j = 0; j < D.cols(); ++j)
            if (A(i, j)) {
                const double r = D(i, j) - U.row(i).dot(V.row(j));
                err += r * r;
            }
    return err + ridge * (U.squaredNorm() + V.squaredNorm());
}

/// Warm start: truncated SVD of the column-mean-imputed matrix. Columns with
/// no observed entry fall back to 0.
inline void svd_init(const Eigen::MatrixXd& D, const IndicatorMatrix& A, int rank,
                     Eigen::MatrixXd& U, Eigen::MatrixXd& V) {
    Eigen::MatrixXd filled = D;
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
        double sum = 0;
        Eigen::Index count = 0;
        for (Eigen::Index i = 0; i < D.rows(); ++i)
            if (A(i, j)) {
                sum += D(i, j);
                ++count;
            }
        const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
        for (Eigen::Index i = 0; i < D.rows(); ++i)
            if (!A(i, j)) filled(i, j) = mean;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(filled, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const int r = std::min<int>(rank, static_cast<int>(svd.singularValues().size()));
    U.setZero(D.rows(), rank);
    V.setZero(D.cols(), rank);
    for (int k = 0; k < r; ++k) {
        const double s = std::sqrt(svd.singularValues()(k));
        U.col(k) = svd.matrixU().col(k) * s;
        V.col(k) = svd.matrixV().col(k) * s;
    }
}

namespace detail {

// Ridge least squares for every row of `out`: fixing `basis`, each row i of
// the target minimizes sum_{j observed} (target - out_i . basis_j)^2 +
// ridge*|out_i|^2. Rows with no observed entry collapse to zero.
inline void solve_block(const Eigen::MatrixXd& D, const IndicatorMatrix& A, bool solve_rows,
                        const Eigen::MatrixXd& basis, double ridge, Eigen::MatrixXd& out,
                        std::vector<std::size_t>* empty) {
    const Eigen::Index n = solve_rows ? D.rows() : D.cols();
    const Eigen::Index r = basis.cols();
    Eigen::MatrixXd gram(r, r);
    Eigen::VectorXd rhs(r);
    for (Eigen::Index i = 0; i < n; ++i) {
        gram.setZero();
        rhs.setZero();
        bool any = false;
        const Eigen::Index m = solve_rows ? D.cols() : D.rows();
        for (Eigen::Index j = 0; j < m; ++j) {
            const bool obs = solve_rows ? A(i, j) != 0 : A(j, i) != 0;
            if (!obs) continue;
            any = true;
            const auto b = basis.row(j);
            gram.noalias() += b.transpose() * b;
            rhs.noalias() += b.transpose() * (solve_rows ? D(i, j) : D(j, i));
        }
        if (!any) {
            out.row(i).setZero();
            if (empty != nullptr) empty->push_back(static_cast<std::size_t>(i));
            continue;
        }
        gram.diagonal().array() += ridge;
        out.row(i) = gram.ldlt().solve(rhs).transpose();
    }
}

}  // namespace detail

/// One alternating-least-squares sweep (U given V, then V given U) on the
/// masked matrix. Each half-solve exactly minimizes the regularized objective
/// over its own block, so the objective never increases.
inline void factor_step(const Eigen::MatrixXd& D, const IndicatorMatrix& A, double ridge,
                        Eigen::MatrixXd& U, Eigen::MatrixXd& V,
                        std::vector<std::size_t>* zero_rows = nullptr,
                        std::vector<std::size_t>* zero_cols = nullptr) {
    if (zero_rows != nullptr) zero_rows->clear();
    if (zero_cols != nullptr) zero_cols->clear();
    detail::solve_block(D, A, true, V, ridge, U, zero_rows);
    detail::solve_block(D, A, false, U, ridge, V, zero_cols);
}

/// Exact per-subject argmin of the masked squared error over the shift range,
/// with U and V fixed. Ties prefer the smallest |tau|, then negative tau.
inline std::vector<int> shift_step(const CohortTensor& tensor, const Eigen::MatrixXd& U,
                                   const Eigen::MatrixXd& V, int max_shift) {
    const std::size_t N = tensor.n_subjects, P = tensor.n_features, T = tensor.n_hours;
    std::vector<int> candidates;  // 0, -1, +1, -2, +2, ...
    candidates.push_back(0);
    for (int s = 1; s <= max_shift; ++s) {
        candidates.push_back(-s);
        candidates.push_back(s);
    }
    std::vector<int> tau(N, 0);
    std::vector<double> row(P * T);
    std::vector<std::uint8_t> row_mask(P * T);
    Eigen::VectorXd model(static_cast<Eigen::Index>(P * T));
    for (std::size_t i = 0; i < N; ++i) {
        model.noalias() = V * U.row(static_cast<Eigen::Index>(i)).transpose();
        double best = std::numeric_limits<double>::infinity();
        int best_tau = 0;
        for (int cand : candidates) {
            shift_slab(tensor.slab(i), tensor.mask.data() + i * P * T, P, T, cand, row.data(),
                       row_mask.data());
            double err = 0;
            for (std::size_t j = 0; j < P * T; ++j)
                if (row_mask[j]) {
                    const double r = row[j] - model(static_cast<Eigen::Index>(j));
                    err += r * r;
                }
            if (err < best) {  // strict: candidate order encodes the tie-break
                best = err;
                best_tau = cand;
            }
        }
        tau[i] = best_tau;
    }
    return tau;
}

/// Full alternating minimization. The returned tensor lives on the original
/// (unshifted) timeline with every cell filled: holes take the low-rank
/// reconstruction (edge hours vacated by un-shifting extend the nearest
/// modeled hour) and originally observed entries are restored verbatim.
inline std::pair<CohortTensor, ImputationResult> impute(const CohortTensor& tensor,
                                                        const ImputeConfig& config) {
    tensor.validate();
    const std::size_t N = tensor.n_subjects, P = tensor.n_features, T = tensor.n_hours;
    config.validate(N, P, T);

    ImputationResult res;
    res.tau.assign(N, 0);

    Eigen::MatrixXd D;
    IndicatorMatrix A;
    unfold(tensor, res.tau, D, A);
    svd_init(D, A, config.rank, res.U, res.V);

    double prev = objective(D, A, res.U, res.V, config.ridge);
    for (int iter = 0; iter < config.max_outer_iters; ++iter) {
        factor_step(D, A, config.ridge, res.U, res.V, &res.zero_rows, &res.zero_cols);
        if (!res.U.allFinite() || !res.V.allFinite())
            throw NumericError("impute: non-finite factors at iteration " + std::to_string(iter));
        if (config.max_shift > 0) {
            res.tau = shift_step(tensor, res.U, res.V, config.max_shift);
            unfold(tensor, res.tau, D, A);
        }
        const double obj = objective(D, A, res.U, res.V, config.ridge);
        res.objective_trace.push_back(obj);
        const double rel = (prev - obj) / std::max(prev, 1e-300);
        prev = obj;
        if (rel < config.tol) break;
    }

    CohortTensor out = tensor;
    for (std::size_t i = 0; i < N; ++i) {
        // Model of subject i on the shifted grid; original-timeline hour t
        // maps to shifted hour t + tau[i], clamped at the window edges.
        Eigen::VectorXd model = res.V * res.U.row(static_cast<Eigen::Index>(i)).transpose();
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t t = 0; t < T; ++t) {
                if (tensor.observed(i, p, t)) continue;
                long src = static_cast<long>(t) + res.tau[i];
                src = std::clamp(src, 0L, static_cast<long>(T) - 1);
                const double v =
                    model(static_cast<Eigen::Index>(p * T + static_cast<std::size_t>(src)));
                out.values[out.index(i, p, t)] = v;
                out.mask[out.index(i, p, t)] = 1;
            }
    }
    if (!std::all_of(out.values.begin(), out.values.end(),
                     [](double v) { return std::isfinite(v); }))
        throw NumericError("impute: non-finite values in reconstruction");
    return {std::move(out), std::move(res)};
}

}  // namespace imputation
}  // namespace tempheno
