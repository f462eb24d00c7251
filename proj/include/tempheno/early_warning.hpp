#pragma once

// Early-warning sub-phenotype prediction: windowed summary statistics over
// the first hours of each series, multinomial logistic regression trained by
// full-batch gradient descent, and one-vs-rest macro metrics including the
// area under the precision-recall step curve.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempheno/cohort.hpp"
#include "tempheno/errors.hpp"

namespace tempheno {
namespace ew {

inline constexpr std::size_t kStatsPerWindow = 5;
inline constexpr std::size_t kWindowsPerFeature = 7;

inline const std::vector<std::string>& window_names() {
    static const std::vector<std::string> names = {"full",   "first10", "first25", "first50",
                                                   "last10", "last25",  "last50"};
    return names;
}

inline const std::vector<std::string>& stat_names() {
    static const std::vector<std::string> names = {"max", "min", "mean", "std", "skew"};
    return names;
}

namespace detail {

inline std::size_t window_len(double fraction, std::size_t horizon) {
    // round-half-up with a one-sample floor
    const auto rounded = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(horizon) + 0.5));
    return std::max<std::size_t>(1, rounded);
}

// max, min, mean, population std, Fisher skewness (0 for zero variance).
inline void window_stats(const double* begin, std::size_t len, double* out) {
    double mx = begin[0], mn = begin[0], sum = 0;
    for (std::size_t i = 0; i < len; ++i) {
        mx = std::max(mx, begin[i]);
        mn = std::min(mn, begin[i]);
        sum += begin[i];
    }
    const double mean = sum / static_cast<double>(len);
    double m2 = 0, m3 = 0;
    for (std::size_t i = 0; i < len; ++i) {
        const double c = begin[i] - mean;
        m2 += c * c;
        m3 += c * c * c;
    }
    m2 /= static_cast<double>(len);
    m3 /= static_cast<double>(len);
    out[0] = mx;
    out[1] = mn;
    out[2] = mean;
    out[3] = std::sqrt(m2);
    out[4] = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

}  // namespace detail

/// Feature vector layout: variable-major, window second, statistic minor.
/// Windows cover the series truncated to [0, horizon): the full window, the
/// first 10/25/50%, and the last 10/25/50% (length max(1, round(f*horizon))).
inline Eigen::MatrixXd extract_features(const CohortTensor& tensor, std::size_t horizon_hours) {
    tensor.validate();
    if (horizon_hours < 1) throw ConfigError("extract_features: horizon must be >= 1");
    if (horizon_hours > tensor.n_hours)
        throw ConfigError("extract_features: horizon exceeds tensor hour count");
    if (!tensor.fully_observed())
        throw ConfigError("extract_features: tensor must be fully imputed");

    const std::size_t P = tensor.n_features, T = tensor.n_hours, h = horizon_hours;
    struct Win {
        std::size_t start, len;
    };
    std::vector<Win> windows;
    windows.push_back({0, h});
    for (double f : {0.10, 0.25, 0.50}) windows.push_back({0, detail::window_len(f, h)});
    for (double f : {0.10, 0.25, 0.50}) {
        const std::size_t len = detail::window_len(f, h);
        windows.push_back({h - len, len});
    }

    Eigen::MatrixXd out(static_cast<Eigen::Index>(tensor.n_subjects),
                        static_cast<Eigen::Index>(P * kWindowsPerFeature * kStatsPerWindow));
    double stats[kStatsPerWindow];
    for (std::size_t i = 0; i < tensor.n_subjects; ++i) {
        const double* slab = tensor.slab(i);
        std::size_t col = 0;
        for (std::size_t p = 0; p < P; ++p) {
            const double* series = slab + p * T;
            for (const Win& w : windows) {
                detail::window_stats(series + w.start, w.len, stats);
                for (std::size_t s = 0; s < kStatsPerWindow; ++s)
                    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col++)) = stats[s];
            }
        }
    }
    return out;
}

inline std::vector<std::string> feature_column_names(const std::vector<std::string>& variables) {
    std::vector<std::string> names;
    names.reserve(variables.size() * kWindowsPerFeature * kStatsPerWindow);
    for (const auto& v : variables)
        for (const auto& w : window_names())
            for (const auto& s : stat_names()) names.push_back(v + "_" + w + "_" + s);
    return names;
}

struct LogisticConfig {
    double learning_rate = 0.1;
    int iterations = 500;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
};

/// Multinomial logistic regression state: weight matrix (classes x features+1,
/// last column the bias) plus the feature scaler fitted on the training set.
struct LogisticModel {
    Eigen::MatrixXd weights;
    std::vector<int> classes;
    Eigen::VectorXd scaler_mean;
    Eigen::VectorXd scaler_std;
    LogisticConfig config;
};

namespace detail {

inline Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - mx).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

inline Eigen::MatrixXd with_bias_column(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd xb(x.rows(), x.cols() + 1);
    xb.leftCols(x.cols()) = x;
    xb.col(x.cols()).setOnes();
    return xb;
}

}  // namespace detail

/// Mean cross-entropy plus (l2/2)*|W|^2 over the non-bias columns, and its
/// gradient. `x` must already carry the bias column; `y` holds class indices.
inline std::pair<double, Eigen::MatrixXd> lr_loss_and_gradient(const Eigen::MatrixXd& x,
                                                               const std::vector<int>& y,
                                                               const Eigen::MatrixXd& weights,
                                                               double l2) {
    const Eigen::Index n = x.rows();
    const Eigen::MatrixXd probs = detail::softmax_rows(x * weights.transpose());
    double loss = 0;
    Eigen::MatrixXd delta = probs;  // p - onehot(y)
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
        loss -= std::log(std::max(probs(i, c), 1e-300));
        delta(i, c) -= 1.0;
    }
    loss /= static_cast<double>(n);
    Eigen::MatrixXd grad = (delta.transpose() * x) / static_cast<double>(n);
    const Eigen::Index f = weights.cols() - 1;  // bias column is unpenalized
    loss += 0.5 * l2 * weights.leftCols(f).squaredNorm();
    grad.leftCols(f) += l2 * weights.leftCols(f);
    return {loss, std::move(grad)};
}

/// Full-batch gradient descent from zero weights; features are z-scored
/// internally and the scaler travels with the model.
inline LogisticModel train(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                           const LogisticConfig& config = {}) {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw ConfigError("train: features and labels disagree on subject count");
    if (features.rows() < 1) throw ConfigError("train: empty training set");

    LogisticModel model;
    model.config = config;
    model.classes = labels;
    std::sort(model.classes.begin(), model.classes.end());
    model.classes.erase(std::unique(model.classes.begin(), model.classes.end()),
                        model.classes.end());
    if (model.classes.size() < 2) throw ConfigError("train: need at least two distinct classes");

    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto it = std::lower_bound(model.classes.begin(), model.classes.end(), labels[i]);
        y[i] = static_cast<int>(it - model.classes.begin());
    }

    model.scaler_mean = features.colwise().mean();
    Eigen::MatrixXd centered = features.rowwise() - model.scaler_mean.transpose();
    model.scaler_std =
        (centered.array().square().colwise().mean()).sqrt().matrix().transpose();
    for (Eigen::Index j = 0; j < model.scaler_std.size(); ++j)
        if (model.scaler_std(j) <= 0) model.scaler_std(j) = 1.0;
    centered.array().rowwise() /= model.scaler_std.transpose().array();

    const Eigen::MatrixXd xb = detail::with_bias_column(centered);
    model.weights.setZero(static_cast<Eigen::Index>(model.classes.size()), xb.cols());
    for (int it = 0; it < config.iterations; ++it) {
        auto [loss, grad] = lr_loss_and_gradient(xb, y, model.weights, config.l2);
        if (!std::isfinite(loss)) throw NumericError("train: non-finite loss at iteration " +
                                                     std::to_string(it));
        model.weights -= config.learning_rate * grad;
    }
    return model;
}

/// Class probabilities for raw (unscaled) feature rows.
inline Eigen::MatrixXd predict_proba(const LogisticModel& model, const Eigen::MatrixXd& features) {
    Eigen::MatrixXd scaled = features.rowwise() - model.scaler_mean.transpose();
    scaled.array().rowwise() /= model.scaler_std.transpose().array();
    return detail::softmax_rows(detail::with_bias_column(scaled) * model.weights.transpose());
}

/// Area under the precision-recall step curve by average-precision summation
/// over distinct score thresholds (descending). Equal scores collapse into
/// one threshold. Undefined (returns nullopt) when there are no positives.
inline std::optional<double> average_precision(const std::vector<double>& scores,
                                               const std::vector<bool>& positive) {
    if (scores.size() != positive.size())
        throw ConfigError("average_precision: size mismatch");
    const std::size_t total_pos =
        static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
    if (total_pos == 0) return std::nullopt;
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0;
    std::size_t tp = 0, fp = 0;
    double prev_recall = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (positive[order[j]])
                ++tp;
            else
                ++fp;
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

struct MetricsReport {
    double accuracy = 0;
    double precision = 0;  // macro one-vs-rest
    double recall = 0;
    double auprc = 0;
    Eigen::MatrixXd confusion;  // rows normalized over ground truth
    std::vector<int> classes;
};

/// Accuracy and macro one-vs-rest precision/recall at the argmax decision,
/// macro AUPRC from the class-probability rankings, and the ground-truth
/// normalized confusion matrix. Classes absent from the ground truth are
/// skipped by the recall and AUPRC averages; their confusion row is zero.
inline MetricsReport evaluate(const LogisticModel& model, const Eigen::MatrixXd& features,
                              const std::vector<int>& labels) {
    if (labels.empty()) throw ConfigError("evaluate: empty test set");
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw ConfigError("evaluate: features and labels disagree on subject count");

    const Eigen::MatrixXd probs = predict_proba(model, features);
    const auto n = labels.size();
    const auto n_classes = model.classes.size();

    std::vector<int> truth(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto it =
            std::lower_bound(model.classes.begin(), model.classes.end(), labels[i]);
        if (it == model.classes.end() || *it != labels[i])
            throw ConfigError("evaluate: label " + std::to_string(labels[i]) +
                              " unknown to the model");
        truth[i] = static_cast<int>(it - model.classes.begin());
    }

    std::vector<int> pred(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
        pred[i] = static_cast<int>(best);
    }

    MetricsReport rep;
    rep.classes = model.classes;
    rep.confusion.setZero(static_cast<Eigen::Index>(n_classes),
                          static_cast<Eigen::Index>(n_classes));
    std::size_t correct = 0;
    std::vector<std::size_t> actual(n_classes, 0), predicted(n_classes, 0), true_pos(n_classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        const auto p = static_cast<std::size_t>(pred[i]);
        ++actual[t];
        ++predicted[p];
        if (t == p) {
            ++true_pos[t];
            ++correct;
        }
        rep.confusion(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)) += 1.0;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    double prec_sum = 0, rec_sum = 0, ap_sum = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (actual[c] > 0) {
            rep.confusion.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(actual[c]);
            ++present;
            rec_sum += static_cast<double>(true_pos[c]) / static_cast<double>(actual[c]);
            prec_sum += predicted[c] > 0
                            ? static_cast<double>(true_pos[c]) / static_cast<double>(predicted[c])
                            : 0.0;
            std::vector<double> scores(n);
            std::vector<bool> positive(n);
            for (std::size_t i = 0; i < n; ++i) {
                scores[i] = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
                positive[i] = static_cast<std::size_t>(truth[i]) == c;
            }
            ap_sum += average_precision(scores, positive).value();
        }
    }
    rep.precision = prec_sum / static_cast<double>(present);
    rep.recall = rec_sum / static_cast<double>(present);
    rep.auprc = ap_sum / static_cast<double>(present);
    return rep;
}

struct SplitConfig {
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    int max_redraws = 10;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified split: each class is shuffled and cut at round(f * size). If a
/// class ends up absent from either side, redraw with a derived seed up to
/// max_redraws times, then fail.
inline Split stratified_split(const std::vector<int>& labels, const SplitConfig& config) {
    if (!(config.test_fraction > 0) || !(config.test_fraction < 1))
        throw ConfigError("split: test_fraction must lie in (0, 1)");
    std::vector<int> classes = labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    for (int attempt = 0; attempt <= config.max_redraws; ++attempt) {
        std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(attempt));
        Split split;
        bool ok = true;
        for (int cls : classes) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == cls) idx.push_back(i);
            std::shuffle(idx.begin(), idx.end(), rng);
            const auto n_test = static_cast<std::size_t>(
                std::floor(config.test_fraction * static_cast<double>(idx.size()) + 0.5));
            if (n_test == 0 || n_test == idx.size()) {
                ok = false;
                break;
            }
            for (std::size_t i = 0; i < idx.size(); ++i)
                (i < n_test ? split.test : split.train).push_back(idx[i]);
        }
        if (!ok) continue;
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.test.begin(), split.test.end());
        return split;
    }
    throw ConfigError("split: a class is absent from one side after " +
                      std::to_string(config.max_redraws) + " redraws");
}

struct HorizonReport {
    std::size_t horizon;
    MetricsReport metrics;
    LogisticModel model;
    Eigen::MatrixXd features;  // all subjects, extraction at this horizon
};

/// One stratified split, then per horizon: extract features, train on the
/// training side, evaluate on the held-out side.
inline std::vector<HorizonReport> run_early_warning(const CohortTensor& tensor,
                                                    const std::vector<int>& labels,
                                                    const std::vector<std::size_t>& horizons,
                                                    const SplitConfig& split_config = {},
                                                    const LogisticConfig& lr_config = {}) {
    if (labels.size() != tensor.n_subjects)
        throw ConfigError("run_early_warning: labels must cover all subjects");
    const Split split = stratified_split(labels, split_config);

    auto rows = [&](const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
        return out;
    };
    auto pick = [&](const std::vector<std::size_t>& idx) {
        std::vector<int> out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
        return out;
    };

    std::vector<HorizonReport> reports;
    for (std::size_t h : horizons) {
        HorizonReport rep;
        rep.horizon = h;
        rep.features = extract_features(tensor, h);
        rep.model = train(rows(rep.features, split.train), pick(split.train), lr_config);
        rep.metrics = evaluate(rep.model, rows(rep.features, split.test), pick(split.test));
        reports.push_back(std::move(rep));
    }
    return reports;
}

}  // namespace ew
}  // namespace tempheno
