#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "tempheno/imputation.hpp"
#include "tempheno/synth.hpp"

using namespace tempheno;
using namespace tempheno::imputation;

namespace {

CohortTensor series_tensor(const std::vector<double>& values) {
    auto t = CohortTensor::empty(1, 1, values.size());
    t.feature_names = {"hr"};
    t.subject_ids = {"a"};
    for (std::size_t i = 0; i < values.size(); ++i) t.set(0, 0, i, values[i]);
    return t;
}

}  // namespace

TEST_CASE("unfold with zero shift flattens the slab unchanged") {
    const auto tensor = series_tensor({1.0, 2.0, 3.0});
    Eigen::MatrixXd d;
    IndicatorMatrix a;
    unfold(tensor, {0}, d, a);
    CHECK(d(0, 0) == 1.0);
    CHECK(d(0, 1) == 2.0);
    CHECK(d(0, 2) == 3.0);
    CHECK(a.cast<int>().sum() == 3);
}

TEST_CASE("positive shift delays the series and vacates the head") {
    const auto tensor = series_tensor({1.0, 2.0, 3.0});
    Eigen::MatrixXd d;
    IndicatorMatrix a;
    unfold(tensor, {+1}, d, a);
    CHECK(a(0, 0) == 0);
    CHECK(d(0, 1) == 1.0);
    CHECK(d(0, 2) == 2.0);
}

TEST_CASE("negative shift advances the series and vacates the tail") {
    const auto tensor = series_tensor({1.0, 2.0, 3.0});
    Eigen::MatrixXd d;
    IndicatorMatrix a;
    unfold(tensor, {-1}, d, a);
    CHECK(d(0, 0) == 2.0);
    CHECK(d(0, 1) == 3.0);
    CHECK(a(0, 2) == 0);
}

TEST_CASE("factor step reconstructs a fully observed rank-1 matrix") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = 12, p = 4, t = 5;
    Eigen::VectorXd u(n), v(p * t);
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = 5.0 * gauss(rng);
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = 5.0 * gauss(rng);
    auto tensor = CohortTensor::empty(n, p, t);
    tensor.feature_names = {"a", "b", "c", "d"};
    for (std::size_t i = 0; i < n; ++i) {
        tensor.subject_ids[i] = "s" + std::to_string(i);
        for (std::size_t j = 0; j < p * t; ++j)
            tensor.set(i, j / t, j % t, u(static_cast<Eigen::Index>(i)) *
                                            v(static_cast<Eigen::Index>(j)));
    }
    ImputeConfig config;
    config.rank = 1;
    config.max_shift = 0;
    config.max_outer_iters = 5;
    config.tol = 0.0;
    const auto [imputed, res] = impute(tensor, config);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p * t; ++j) {
            const double truth = u(static_cast<Eigen::Index>(i)) * v(static_cast<Eigen::Index>(j));
            const double fit = res.U.row(static_cast<Eigen::Index>(i))
                                   .dot(res.V.row(static_cast<Eigen::Index>(j)));
            num += (truth - fit) * (truth - fit);
            den += truth * truth;
        }
    CHECK(std::sqrt(num / den) < 1e-8);
}

TEST_CASE("rank-1 completion recovers 30 percent hidden entries") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution hide(0.3);
    const std::size_t n = 20, p = 5, t = 6;
    Eigen::VectorXd u(n), v(p * t);
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = 1.0 + std::abs(gauss(rng));
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = gauss(rng);
    auto tensor = CohortTensor::empty(n, p, t);
    tensor.feature_names = {"a", "b", "c", "d", "e"};
    std::vector<std::size_t> hidden;
    for (std::size_t i = 0; i < n; ++i) {
        tensor.subject_ids[i] = "s" + std::to_string(i);
        for (std::size_t j = 0; j < p * t; ++j) {
            if (hide(rng)) {
                hidden.push_back(tensor.index(i, j / t, j % t));
                continue;
            }
            tensor.set(i, j / t, j % t,
                       u(static_cast<Eigen::Index>(i)) * v(static_cast<Eigen::Index>(j)));
        }
    }
    ImputeConfig config;
    config.rank = 1;
    config.max_shift = 0;
    config.max_outer_iters = 200;
    config.tol = 1e-15;
    const auto [imputed, res] = impute(tensor, config);
    double num = 0, den = 0;
    for (std::size_t cell : hidden) {
        const std::size_t i = cell / (p * t), j = cell % (p * t);
        const double truth =
            u(static_cast<Eigen::Index>(i)) * v(static_cast<Eigen::Index>(j));
        num += (imputed.values[cell] - truth) * (imputed.values[cell] - truth);
        den += truth * truth;
    }
    CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("all-zero observations stay at the zero fixed point") {
    auto tensor = CohortTensor::empty(4, 2, 3);
    tensor.feature_names = {"a", "b"};
    for (std::size_t i = 0; i < 4; ++i) {
        tensor.subject_ids[i] = "s" + std::to_string(i);
        for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t t = 0; t < 3; ++t) tensor.set(i, p, t, 0.0);
    }
    ImputeConfig config;
    config.rank = 2;
    config.max_shift = 0;
    const auto [imputed, res] = impute(tensor, config);
    CHECK((res.U * res.V.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("singleton shift range returns all zero shifts") {
    const auto tensor = series_tensor({1.0, 2.0, 3.0});
    const Eigen::MatrixXd u = Eigen::MatrixXd::Ones(1, 1);
    const Eigen::MatrixXd v = Eigen::MatrixXd::Ones(3, 1);
    CHECK(shift_step(tensor, u, v, 0) == std::vector<int>{0});
}

TEST_CASE("fully unobserved subject shifts to zero by tie-break") {
    auto tensor = CohortTensor::empty(1, 1, 5);
    tensor.feature_names = {"hr"};
    tensor.subject_ids = {"a"};
    const Eigen::MatrixXd u = Eigen::MatrixXd::Ones(1, 1);
    const Eigen::MatrixXd v = Eigen::MatrixXd::Ones(5, 1);
    CHECK(shift_step(tensor, u, v, 2) == std::vector<int>{0});
}

TEST_CASE("planted heterogeneous shifts are recovered per subject") {
    // Shifts only identify relative to the cohort timeline, so the planted
    // values are mixed across subjects; the +2 group must come back as +2.
    synth::SynthSpec spec;
    spec.n_subjects = 80;
    spec.n_features = 4;
    spec.n_hours = 60;
    spec.noise_std = 0.03;
    spec.missing_fraction = 0.1;
    spec.max_shift = 4;
    spec.severity_scale = 0.0;
    spec.seed = 91;
    const auto data = synth::generate(spec);
    ImputeConfig config;
    config.rank = 3;
    config.max_shift = 4;
    config.seed = 1;
    const auto [imputed, res] = impute(data.tensor, config);
    std::size_t exact = 0, plus2 = 0, plus2_exact = 0;
    for (std::size_t i = 0; i < spec.n_subjects; ++i) {
        if (res.tau[i] == data.truth.shifts[i]) ++exact;
        if (data.truth.shifts[i] == 2) {
            ++plus2;
            if (res.tau[i] == 2) ++plus2_exact;
        }
    }
    REQUIRE(plus2 > 0);
    CHECK(static_cast<double>(exact) / static_cast<double>(spec.n_subjects) >= 0.95);
    CHECK(plus2_exact == plus2);
}

TEST_CASE("imputation fills hidden cells of a planted low-rank cohort") {
    synth::SynthSpec spec;
    spec.n_subjects = 80;
    spec.n_features = 7;
    spec.n_hours = 80;
    spec.noise_std = 0.05;
    spec.missing_fraction = 0.4;
    spec.max_shift = 6;
    spec.severity_scale = 0.0;
    spec.seed = 5;
    const auto data = synth::generate(spec);
    ImputeConfig config;
    config.rank = 3;
    config.max_shift = 6;
    const auto [imputed, res] = impute(data.tensor, config);
    CHECK(imputed.fully_observed());
    synth::PipelineOutputs outputs;
    outputs.imputed = &imputed;
    const auto report = synth::score_recovery(data.truth, outputs);
    REQUIRE(report.imputation_rel_rmse.has_value());
    CHECK(*report.imputation_rel_rmse < 0.15);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
        CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-9);
}

TEST_CASE("no missing data and no shift search reproduces the input exactly") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto tensor = CohortTensor::empty(6, 2, 4);
    tensor.feature_names = {"a", "b"};
    for (std::size_t i = 0; i < 6; ++i) {
        tensor.subject_ids[i] = "s" + std::to_string(i);
        for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t t = 0; t < 4; ++t) tensor.set(i, p, t, gauss(rng));
    }
    ImputeConfig config;
    config.rank = 2;
    config.max_shift = 0;
    const auto [imputed, res] = impute(tensor, config);
    CHECK(imputed.values == tensor.values);
}

TEST_CASE("infinite tolerance stops after exactly one outer iteration") {
    const auto tensor = series_tensor({1.0, 2.0, 3.0});
    ImputeConfig config;
    config.rank = 1;
    config.max_shift = 1;
    config.tol = std::numeric_limits<double>::infinity();
    config.max_outer_iters = 50;
    const auto [imputed, res] = impute(tensor, config);
    CHECK(res.objective_trace.size() == 1);
}

TEST_CASE("impute is deterministic") {
    synth::SynthSpec spec;
    spec.n_subjects = 20;
    spec.n_features = 3;
    spec.n_hours = 30;
    spec.missing_fraction = 0.3;
    spec.max_shift = 2;
    spec.severity_scale = 0.0;
    spec.seed = 12;
    const auto data = synth::generate(spec);
    ImputeConfig config;
    config.rank = 2;
    config.max_shift = 2;
    const auto [a, ra] = impute(data.tensor, config);
    const auto [b, rb] = impute(data.tensor, config);
    CHECK(a.values == b.values);
    CHECK(ra.tau == rb.tau);
}

TEST_CASE("config validation rejects impossible shapes") {
    ImputeConfig config;
    config.rank = 50;
    CHECK_THROWS_AS(config.validate(10, 2, 3), ConfigError);
    config.rank = 2;
    config.max_shift = 5;
    CHECK_THROWS_AS(config.validate(10, 2, 3), ConfigError);
}
