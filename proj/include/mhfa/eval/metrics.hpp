#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/core/errors.hpp"

namespace mhfa::eval {

/// A metric whose denominator vanished is empty; serialized as "undefined".
using Metric = std::optional<double>;

nlohmann::ordered_json metric_json(const Metric& m);

/// Thrown when a statistic is mathematically undefined for the input
/// (zero variance, too few points).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

struct MetricsSummary {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    Metric accuracy, precision, recall, f1;

    std::size_t total() const { return tp + fp + tn + fn; }
    nlohmann::ordered_json to_json() const;
};

/// Confusion counts and derived rates for binary predictions against labels.
/// Throws ValidationError on length mismatch, empty input or non-binary values.
MetricsSummary classification_metrics(std::span<const int> predictions, std::span<const int> labels);

/// Harmonic mean 2PR/(P+R); undefined when P+R = 0.
Metric f1_from(double precision, double recall);

/// Pearson correlation. Throws ValidationError on length mismatch or n < 2,
/// UndefinedMetricError when either series has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);
/// As pearson(), with the undefined cases mapped to an empty result.
Metric try_pearson(std::span<const double> x, std::span<const double> y);

/// Mean silhouette over Euclidean distances. A point alone in its cluster
/// scores 0, and 0/0 (a = b = 0) scores 0. Throws ValidationError when there
/// are fewer than two clusters or the inputs are inconsistent.
double silhouette(const std::vector<std::vector<double>>& points, std::span<const int> labels);

/// Stratified fold assignment: each class's indices, in a seeded shuffled
/// order, are dealt round-robin over the k folds, continuing where the
/// previous class stopped.
std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed);

/// L2-regularized logistic regression fitted by iteratively reweighted least
/// squares (Newton's method). The intercept is not penalized.
class LogisticModel {
public:
    static LogisticModel fit(const std::vector<std::vector<double>>& x, std::span<const int> y, double lambda = 1.0,
                             int max_iter = 100, double tol = 1e-10);
    double probability(std::span<const double> features) const;
    int predict(std::span<const double> features) const { return probability(features) > 0.5 ? 1 : 0; }

    const std::vector<double>& weights() const { return w_; }
    double intercept() const { return b_; }

private:
    std::vector<double> w_;
    double b_ = 0;
};

/// Mean per-fold accuracy of LogisticModel under stratified_folds.
/// Throws ValidationError when k < 2 or k exceeds the number of samples.
double kfold_accuracy(const std::vector<std::vector<double>>& x, std::span<const int> y, int k, std::uint64_t seed = 0,
                      double lambda = 1.0);

}  // namespace mhfa::eval
