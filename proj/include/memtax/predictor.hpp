#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "memtax/category.hpp"
#include "memtax/common.hpp"
#include "memtax/features.hpp"

namespace memtax {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation
  std::vector<bool> constant;  // passed through unchanged

  std::size_t dimension() const { return mean.size(); }
};

Normalizer fit_normalizer(const Matrix& X);
Matrix apply_normalizer(const Normalizer& n, const Matrix& X);
std::vector<double> apply_normalizer(const Normalizer& n, std::span<const double> x);

// Weighted L2-regularized logistic loss over already-normalized features:
// sum_i w_i * nll_i + lambda/2 * |w|^2, bias unregularized.
struct LogisticProblem {
  const Matrix& X;
  std::span<const int> y;
  std::span<const double> sample_weights;
  double lambda = 1.0;
};

double logistic_objective(const LogisticProblem& p, const Vector& w, double b);
// Gradient with respect to (w, b); the bias derivative is the last entry.
Vector logistic_gradient(const LogisticProblem& p, const Vector& w, double b);

struct TrainOptions {
  double lambda = 1.0;
  double tolerance = 1e-6;  // on the Euclidean norm of the full gradient
  std::size_t max_iterations = 1000;
  std::uint64_t seed = 0;  // recorded; the optimizer itself is deterministic
};

struct FitResult {
  Vector w;
  double b = 0.0;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool hit_iteration_limit = false;
  std::vector<double> objective_trace;  // value before each step and at the end
};

// Damped Newton iterations with backtracking line search.
FitResult fit_logistic(const LogisticProblem& problem, const TrainOptions& options);

struct RegressionModel {
  std::vector<std::string> features;
  std::vector<double> weights;  // normalized space
  double bias = 0.0;
  double lambda = 1.0;
  std::array<double, 2> class_weights{1.0, 1.0};  // negative, positive
  Normalizer normalizer;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool hit_iteration_limit = false;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double tolerance = 1e-6;
};

// Untrained model: zero weights, identity normalizer.
RegressionModel zero_model(const std::vector<std::string>& features);

// Balanced class weights N/(2 N_c); throws ArgumentError naming the class
// counts when either class is absent.
RegressionModel train_logreg(const Matrix& X, std::span<const int> y,
                             const std::vector<std::string>& features,
                             const TrainOptions& options = {});

double predict(const RegressionModel& model, std::span<const double> x);

struct DatasetSplits {
  std::vector<std::uint64_t> train;
  std::vector<std::uint64_t> validation;
  std::vector<std::uint64_t> test;
};

struct SplitRatios {
  double test = 0.2;        // of the representative sample
  double validation = 0.1;  // of the merged training pool
};

DatasetSplits split_datasets(std::span<const std::uint64_t> representative,
                             std::span<const std::uint64_t> memorized,
                             const SplitRatios& ratios, std::uint64_t seed);

nlohmann::ordered_json to_json(const DatasetSplits& s);
DatasetSplits splits_from_json(const nlohmann::json& j);

// Labeled feature matrix in model feature space.
struct Dataset {
  std::vector<std::string> features;
  Matrix X;
  std::vector<int> y;
  std::vector<Category> category;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return y.size(); }
};

// Records need labels and a taxonomy. With `ids`, rows follow that order and
// unknown ids raise ValidationError.
Dataset make_dataset(std::span<const FeatureRecord> records,
                     const std::vector<std::string>& features);
Dataset make_dataset(std::span<const FeatureRecord> records,
                     const std::vector<std::string>& features,
                     std::span<const std::uint64_t> ids);
Dataset subset(const Dataset& d, std::span<const std::size_t> rows);

enum class Direction { less_equal, greater };
std::string to_string(Direction d);
Direction parse_direction(std::string_view s);

struct Split {
  std::string feature;
  double percentile = 0.0;  // 25, 50 or 75; recorded for the log
  double threshold = 0.0;
  Direction direction = Direction::less_equal;

  bool holds(double value) const {
    return direction == Direction::less_equal ? value <= threshold : value > threshold;
  }
};

// Cell 0 when the first split holds, else cell 1 when the second holds, else cell 2.
struct PartitionSpec {
  std::array<Split, 2> splits;
};

std::size_t cell_of(const PartitionSpec& spec, const std::vector<std::string>& features,
                    std::span<const double> x);

// A regression for one cell, or a constant fallback when the cell could not
// be trained.
struct CellModel {
  std::string name;
  std::optional<RegressionModel> model;
  double fallback_probability = 0.5;
  std::string error;

  double predict(std::span<const double> x) const;
};

struct RoutedModel {
  std::string kind;  // "taxonomic" or "partitioned"
  std::optional<PartitionSpec> partition;
  std::array<CellModel, 3> cells;

  std::size_t route(Category category, const std::vector<std::string>& features,
                    std::span<const double> x) const;
  double predict(Category category, const std::vector<std::string>& features,
                 std::span<const double> x) const;
};

// Trains cell `c` on rows with cell index c; failing cells fall back.
std::array<CellModel, 3> train_cells(const Dataset& train, std::span<const std::size_t> cell_index,
                                     const std::array<std::string, 3>& names,
                                     const TrainOptions& options);

RoutedModel train_taxonomic(const Dataset& train, const TrainOptions& options);

struct PartitionSearchConfig {
  std::vector<std::string> candidates;
  std::vector<double> percentiles{25.0, 50.0, 75.0};
  double decision_threshold = 0.5;
};

struct PartitionSearchLog {
  std::size_t search_space = 0;  // (F * |percentiles| * 2)^2
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  double best_f1 = 0.0;
  std::vector<std::string> skip_reasons;  // first few, for the report
};

struct PartitionSearchResult {
  RoutedModel model;
  PartitionSearchLog log;
};

// Exhaustive search over ordered split pairs scored by F1 on `validation`.
// Ties keep the earliest pair in canonical order: candidate order, then
// percentile, then direction (<= before >).
PartitionSearchResult partition_search(const Dataset& train, const Dataset& validation,
                                       const PartitionSearchConfig& config,
                                       const TrainOptions& options,
                                       Execution exec = Execution::parallel);

struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, brier = 0, ece = 0;
};

// Precision (and F1) is 0 when nothing is predicted positive.
Metrics compute_metrics(std::span<const double> probability, std::span<const int> y,
                        double threshold = 0.5, std::size_t ece_bins = 10);

struct ModelSet {
  std::vector<std::string> features;
  RegressionModel baseline;
  RoutedModel taxonomic;
  std::optional<RoutedModel> partitioned;
  std::optional<PartitionSearchLog> search_log;
  TrainOptions options;
};

std::vector<double> predict_all(const ModelSet& models, const std::string& which,
                                const Dataset& data);

struct SubsetReport {
  std::string model;
  std::string subset;  // "all" or a taxonomy category
  std::size_t n = 0;
  bool present = false;
  Metrics value;
  Metrics stddev;
};

struct EvalConfig {
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 0;
  double decision_threshold = 0.5;
};

struct EvalReport {
  std::vector<SubsetReport> rows;
  const SubsetReport& find(const std::string& model, const std::string& subset) const;
};

EvalReport evaluate(const ModelSet& models, const Dataset& test, const EvalConfig& config,
                    Execution exec = Execution::parallel);

nlohmann::ordered_json to_json(const EvalReport& r);
std::string eval_csv(const EvalReport& r);

struct WeightRow {
  std::string model;
  std::string cell;
  std::vector<double> weights;
  double bias = 0.0;
};

std::vector<WeightRow> report_weights(const ModelSet& models);
std::string weights_csv(const std::vector<std::string>& features, const std::vector<WeightRow>& rows);

nlohmann::ordered_json to_json(const RegressionModel& m);
RegressionModel regression_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ModelSet& m);
ModelSet models_from_json(const nlohmann::json& j);

}  // namespace memtax
