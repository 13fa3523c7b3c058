#include "mhfa/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <Eigen/Dense>

namespace mhfa::eval {

nlohmann::ordered_json metric_json(const Metric& m) {
    return m ? nlohmann::ordered_json(*m) : nlohmann::ordered_json("undefined");
}

nlohmann::ordered_json MetricsSummary::to_json() const {
    nlohmann::ordered_json j;
    j["tp"] = tp;
    j["fp"] = fp;
    j["tn"] = tn;
    j["fn"] = fn;
    j["accuracy"] = metric_json(accuracy);
    j["precision"] = metric_json(precision);
    j["recall"] = metric_json(recall);
    j["f1"] = metric_json(f1);
    return j;
}

Metric f1_from(double precision, double recall) {
    if (precision + recall == 0) return std::nullopt;
    return 2 * precision * recall / (precision + recall);
}

MetricsSummary classification_metrics(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw ValidationError("predictions", "predictions and labels differ in length (" +
                                                 std::to_string(predictions.size()) + " vs " +
                                                 std::to_string(labels.size()) + ")");
    }
    if (labels.empty()) throw ValidationError("labels", "at least one label is required");
    MetricsSummary m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int p = predictions[i];
        const int l = labels[i];
        if ((p != 0 && p != 1) || (l != 0 && l != 1)) throw ValidationError("labels", "values must be 0 or 1");
        if (p == 1 && l == 1) ++m.tp;
        if (p == 1 && l == 0) ++m.fp;
        if (p == 0 && l == 0) ++m.tn;
        if (p == 0 && l == 1) ++m.fn;
    }
    auto ratio = [](std::size_t num, std::size_t den) -> Metric {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.accuracy = ratio(m.tp + m.tn, m.total());
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    if (m.precision && m.recall) m.f1 = f1_from(*m.precision, *m.recall);
    return m;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("y", "series differ in length");
    if (x.size() < 2) throw ValidationError("x", "pearson needs at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) throw UndefinedMetricError("pearson is undefined for a series with zero variance");
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

Metric try_pearson(std::span<const double> x, std::span<const double> y) {
    try {
        return pearson(x, y);
    } catch (const UndefinedMetricError&) {
        return std::nullopt;
    } catch (const ValidationError&) {
        return std::nullopt;
    }
}

double silhouette(const std::vector<std::vector<double>>& points, std::span<const int> labels) {
    if (points.size() != labels.size()) throw ValidationError("labels", "points and labels differ in length");
    std::set<int> clusters(labels.begin(), labels.end());
    if (clusters.size() < 2) throw ValidationError("labels", "silhouette needs at least two clusters");
    const std::size_t n = points.size();
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw ValidationError("points", "points differ in dimension");
    }
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = points[i][d] - points[j][d];
                s += diff * diff;
            }
            dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
        }
    }
    std::map<int, std::size_t> sizes;
    for (int l : labels) ++sizes[l];
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] == 1) continue;  // singleton scores 0
        std::map<int, double> sum;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sum[labels[j]] += dist[i * n + j];
        }
        const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [c, s] : sum) {
            if (c != labels[i]) b = std::min(b, s / static_cast<double>(sizes[c]));
        }
        const double m = std::max(a, b);
        total += m == 0 ? 0.0 : (b - a) / m;
    }
    return total / static_cast<double>(n);
}

std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("k", "k must be >= 2");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<int> fold(labels.size(), 0);
    std::mt19937_64 rng(seed);
    int next = 0;
    for (auto& [cls, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (auto i : idx) {
            fold[i] = next;
            next = (next + 1) % k;
        }
    }
    return fold;
}

LogisticModel LogisticModel::fit(const std::vector<std::vector<double>>& x, std::span<const int> y, double lambda,
                                 int max_iter, double tol) {
    if (x.size() != y.size() || x.empty()) throw ValidationError("x", "need equal, non-zero numbers of rows and labels");
    if (!(lambda > 0)) throw ValidationError("lambda", "ridge penalty must be positive");
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto d = static_cast<Eigen::Index>(x.front().size());
    Eigen::MatrixXd X(n, d + 1);
    Eigen::VectorXd Y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(x[static_cast<std::size_t>(i)].size()) != d) {
            throw ValidationError("x", "rows differ in dimension");
        }
        for (Eigen::Index j = 0; j < d; ++j) X(i, j) = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        X(i, d) = 1.0;
        Y(i) = y[static_cast<std::size_t>(i)];
    }
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, lambda);
    penalty(d) = 0.0;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd eta = X * beta;
        const Eigen::VectorXd p = eta.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        const Eigen::VectorXd w = p.unaryExpr([](double v) { return std::max(v * (1.0 - v), 1e-12); });
        const Eigen::VectorXd grad = X.transpose() * (Y - p) - penalty.cwiseProduct(beta);
        Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
        H.diagonal() += penalty;
        H.diagonal().array() += 1e-12;
        const Eigen::VectorXd step = H.ldlt().solve(grad);
        beta += step;
        if (step.lpNorm<Eigen::Infinity>() < tol) break;
    }
    LogisticModel m;
    m.w_.assign(beta.data(), beta.data() + d);
    m.b_ = beta(d);
    return m;
}

double LogisticModel::probability(std::span<const double> features) const {
    if (features.size() != w_.size()) throw ValidationError("features", "feature dimension mismatch");
    double eta = b_;
    for (std::size_t i = 0; i < w_.size(); ++i) eta += w_[i] * features[i];
    return 1.0 / (1.0 + std::exp(-eta));
}

double kfold_accuracy(const std::vector<std::vector<double>>& x, std::span<const int> y, int k, std::uint64_t seed,
                      double lambda) {
    if (k < 2) throw ValidationError("k", "k must be >= 2");
    if (static_cast<std::size_t>(k) > x.size()) {
        throw ValidationError("k", "k (" + std::to_string(k) + ") exceeds the number of samples (" +
                                       std::to_string(x.size()) + ")");
    }
    const auto folds = stratified_folds(y, k, seed);
    double sum = 0;
    for (int f = 0; f < k; ++f) {
        std::vector<std::vector<double>> tx;
        std::vector<int> ty;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (folds[i] == f) {
                test.push_back(i);
            } else {
                tx.push_back(x[i]);
                ty.push_back(y[i]);
            }
        }
        const auto model = LogisticModel::fit(tx, ty, lambda);
        std::size_t correct = 0;
        for (auto i : test) correct += model.predict(x[i]) == y[i] ? 1 : 0;
        sum += static_cast<double>(correct) / static_cast<double>(test.size());
    }
    return sum / k;
}

}  // namespace mhfa::eval
