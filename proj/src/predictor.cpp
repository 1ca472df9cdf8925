#include "memtax/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "memtax/feature_vector.hpp"
#include "memtax/rng.hpp"

namespace memtax {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

std::size_t column_of(const std::vector<std::string>& features, const std::string& name) {
  const auto it = std::find(features.begin(), features.end(), name);
  if (it == features.end()) throw ArgumentError("unknown feature '" + name + "'");
  return static_cast<std::size_t>(it - features.begin());
}

}  // namespace

Normalizer fit_normalizer(const Matrix& X) {
  if (X.rows() == 0) throw ArgumentError("normalizer needs at least one training row");
  Normalizer n;
  const auto d = static_cast<std::size_t>(X.cols());
  n.mean.resize(d);
  n.stddev.resize(d);
  n.constant.resize(d);
  const double rows = static_cast<double>(X.rows());
  for (std::size_t j = 0; j < d; ++j) {
    const auto col = X.col(static_cast<Eigen::Index>(j));
    const double mean = col.sum() / rows;
    const double var = (col.array() - mean).square().sum() / rows;
    n.mean[j] = mean;
    n.stddev[j] = std::sqrt(var);
    n.constant[j] = !(n.stddev[j] > 1e-12 * (1.0 + std::fabs(mean)));
    if (n.constant[j]) n.stddev[j] = 1.0;
  }
  return n;
}

Matrix apply_normalizer(const Normalizer& n, const Matrix& X) {
  if (static_cast<std::size_t>(X.cols()) != n.dimension())
    throw ArgumentError("normalizer expects " + std::to_string(n.dimension()) + " features, got " +
                        std::to_string(X.cols()));
  Matrix out = X;
  for (std::size_t j = 0; j < n.dimension(); ++j) {
    if (n.constant[j]) continue;
    auto col = out.col(static_cast<Eigen::Index>(j));
    col = (col.array() - n.mean[j]) / n.stddev[j];
  }
  return out;
}

std::vector<double> apply_normalizer(const Normalizer& n, std::span<const double> x) {
  if (x.size() != n.dimension())
    throw ArgumentError("normalizer expects " + std::to_string(n.dimension()) + " features, got " +
                        std::to_string(x.size()));
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t j = 0; j < out.size(); ++j)
    if (!n.constant[j]) out[j] = (out[j] - n.mean[j]) / n.stddev[j];
  return out;
}

double logistic_objective(const LogisticProblem& p, const Vector& w, double b) {
  const Vector z = (p.X * w).array() + b;
  double f = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    f += p.sample_weights[i] * (softplus(z[i]) - (p.y[i] != 0 ? z[i] : 0.0));
  return f + 0.5 * p.lambda * w.squaredNorm();
}

Vector logistic_gradient(const LogisticProblem& p, const Vector& w, double b) {
  const Vector z = (p.X * w).array() + b;
  Vector r(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    r[i] = p.sample_weights[i] * (sigmoid(z[i]) - (p.y[i] != 0 ? 1.0 : 0.0));
  Vector g(w.size() + 1);
  g.head(w.size()) = p.X.transpose() * r + p.lambda * w;
  g[w.size()] = r.sum();
  return g;
}

FitResult fit_logistic(const LogisticProblem& p, const TrainOptions& options) {
  const auto n = p.X.rows();
  const auto d = p.X.cols();
  if (static_cast<std::size_t>(n) != p.y.size() || p.y.size() != p.sample_weights.size())
    throw ArgumentError("feature rows, labels and weights differ in length");
  FitResult fit;
  fit.w = Vector::Zero(d);
  double f = logistic_objective(p, fit.w, fit.b);
  fit.objective_trace.push_back(f);
  Vector g = logistic_gradient(p, fit.w, fit.b);
  fit.gradient_norm = g.norm();

  while (fit.gradient_norm > options.tolerance) {
    if (fit.iterations >= options.max_iterations) {
      fit.hit_iteration_limit = true;
      break;
    }
    const Vector z = (p.X * fit.w).array() + fit.b;
    Vector s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double q = sigmoid(z[i]);
      s[i] = p.sample_weights[i] * q * (1.0 - q);
    }
    Matrix H(d + 1, d + 1);
    const Matrix Xs = p.X.transpose() * s.asDiagonal();
    H.topLeftCorner(d, d) = Xs * p.X;
    H.topLeftCorner(d, d).diagonal().array() += p.lambda;
    H.topRightCorner(d, 1) = Xs.rowwise().sum();
    H.bottomLeftCorner(1, d) = H.topRightCorner(d, 1).transpose();
    H(d, d) = s.sum() + 1e-12;
    Vector step = H.ldlt().solve(-g);
    if (!step.allFinite() || step.dot(g) >= 0.0) step = -g;

    const double slope = step.dot(g);
    double t = 1.0;
    bool accepted = false;
    Vector w_new;
    double b_new = 0.0, f_new = f;
    Vector g_new;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      g_new.resize(0);
      w_new = fit.w + t * step.head(d);
      b_new = fit.b + t * step[d];
      f_new = logistic_objective(p, w_new, b_new);
      if (f_new <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      // Near the optimum the decrease drops below rounding of f; accept a
      // step that still shrinks the gradient.
      if (f_new <= f + 1e-13 * std::max(1.0, std::fabs(f))) {
        g_new = logistic_gradient(p, w_new, b_new);
        if (g_new.norm() < fit.gradient_norm) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      fit.hit_iteration_limit = true;  // stalled short of the tolerance
      break;
    }
    fit.w = w_new;
    fit.b = b_new;
    f = std::min(f, f_new);
    g = g_new.size() ? g_new : logistic_gradient(p, fit.w, fit.b);
    fit.gradient_norm = g.norm();
    fit.objective_trace.push_back(f_new);
    ++fit.iterations;
  }
  return fit;
}

RegressionModel zero_model(const std::vector<std::string>& features) {
  RegressionModel m;
  m.features = features;
  m.weights.assign(features.size(), 0.0);
  m.normalizer.mean.assign(features.size(), 0.0);
  m.normalizer.stddev.assign(features.size(), 1.0);
  m.normalizer.constant.assign(features.size(), false);
  return m;
}

RegressionModel train_logreg(const Matrix& X, std::span<const int> y,
                             const std::vector<std::string>& features,
                             const TrainOptions& options) {
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw ArgumentError("feature rows and labels differ in length");
  if (static_cast<std::size_t>(X.cols()) != features.size())
    throw ArgumentError("feature names do not match matrix width");
  const auto positives = static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](int v) { return v != 0; }));
  const std::size_t negatives = y.size() - positives;
  if (positives == 0 || negatives == 0)
    throw ArgumentError("training data needs both classes: " + std::to_string(negatives) +
                        " negatives, " + std::to_string(positives) + " positives");
  RegressionModel m;
  m.features = features;
  m.lambda = options.lambda;
  m.seed = options.seed;
  m.tolerance = options.tolerance;
  const double total = static_cast<double>(y.size());
  m.class_weights = {total / (2.0 * static_cast<double>(negatives)),
                     total / (2.0 * static_cast<double>(positives))};
  m.normalizer = fit_normalizer(X);
  const Matrix Xn = apply_normalizer(m.normalizer, X);
  std::vector<double> sw(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) sw[i] = m.class_weights[y[i] != 0 ? 1 : 0];
  const auto fit = fit_logistic({Xn, y, sw, options.lambda}, options);
  m.weights.assign(fit.w.data(), fit.w.data() + fit.w.size());
  m.bias = fit.b;
  m.iterations = fit.iterations;
  m.gradient_norm = fit.gradient_norm;
  m.hit_iteration_limit = fit.hit_iteration_limit;
  m.initial_objective = fit.objective_trace.front();
  m.final_objective = fit.objective_trace.back();
  return m;
}

double predict(const RegressionModel& model, std::span<const double> x) {
  if (x.size() != model.weights.size())
    throw ArgumentError("model expects " + std::to_string(model.weights.size()) +
                        " features, got " + std::to_string(x.size()));
  double z = model.bias;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double v = model.normalizer.constant[j]
                         ? x[j]
                         : (x[j] - model.normalizer.mean[j]) / model.normalizer.stddev[j];
    z += model.weights[j] * v;
  }
  return sigmoid(z);
}

namespace {

template <class T>
void seeded_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

std::size_t ratio_count(double ratio, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
}

}  // namespace

DatasetSplits split_datasets(std::span<const std::uint64_t> representative,
                             std::span<const std::uint64_t> memorized, const SplitRatios& ratios,
                             std::uint64_t seed) {
  if (ratios.test < 0.0 || ratios.test > 1.0 || ratios.validation < 0.0 || ratios.validation > 1.0)
    throw ArgumentError("split ratios must lie in [0, 1]");
  const std::set<std::uint64_t> rep(representative.begin(), representative.end());
  std::vector<std::uint64_t> collisions;
  for (auto id : memorized)
    if (rep.count(id)) collisions.push_back(id);
  if (!collisions.empty()) {
    std::ostringstream msg;
    msg << collisions.size() << " id(s) in both representative and memorized sets:";
    for (std::size_t i = 0; i < std::min<std::size_t>(collisions.size(), 20); ++i) msg << ' ' << collisions[i];
    throw ArgumentError(msg.str());
  }
  Rng rng = make_rng(seed, 0x5b11);
  std::vector<std::uint64_t> r(representative.begin(), representative.end());
  seeded_shuffle(r, rng);
  DatasetSplits out;
  const std::size_t n_test = ratio_count(ratios.test, r.size());
  out.test.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::uint64_t> pool(r.begin() + static_cast<std::ptrdiff_t>(n_test), r.end());
  pool.insert(pool.end(), memorized.begin(), memorized.end());
  seeded_shuffle(pool, rng);
  const std::size_t n_val = ratio_count(ratios.validation, pool.size());
  out.validation.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
  return out;
}

nlohmann::ordered_json to_json(const DatasetSplits& s) {
  return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

DatasetSplits splits_from_json(const nlohmann::json& j) {
  DatasetSplits s;
  try {
    s.train = j.at("train").get<std::vector<std::uint64_t>>();
    s.validation = j.at("validation").get<std::vector<std::uint64_t>>();
    s.test = j.at("test").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed split file: ") + e.what());
  }
  return s;
}

namespace {

void fill_row(Dataset& d, Eigen::Index row, const FeatureRecord& r,
              const std::vector<std::size_t>& columns) {
  if (!r.memorized)
    throw ValidationError("sample " + std::to_string(r.sample_id) + " has no memorization label");
  if (!r.taxonomy)
    throw ValidationError("sample " + std::to_string(r.sample_id) + " has no taxonomy category");
  const auto all = model_features(r);
  for (std::size_t j = 0; j < columns.size(); ++j) d.X(row, static_cast<Eigen::Index>(j)) = all[columns[j]];
  d.y.push_back(*r.memorized ? 1 : 0);
  d.category.push_back(*r.taxonomy);
  d.ids.push_back(r.sample_id);
}

std::vector<std::size_t> feature_columns_of(const std::vector<std::string>& features) {
  std::vector<std::size_t> cols;
  for (const auto& f : features) cols.push_back(model_feature_index(f));
  return cols;
}

}  // namespace

Dataset make_dataset(std::span<const FeatureRecord> records, const std::vector<std::string>& features) {
  Dataset d;
  d.features = features;
  const auto cols = feature_columns_of(features);
  d.X.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < records.size(); ++i) fill_row(d, static_cast<Eigen::Index>(i), records[i], cols);
  return d;
}

Dataset make_dataset(std::span<const FeatureRecord> records, const std::vector<std::string>& features,
                     std::span<const std::uint64_t> ids) {
  std::unordered_map<std::uint64_t, std::size_t> pos;
  for (std::size_t i = 0; i < records.size(); ++i) pos.emplace(records[i].sample_id, i);
  Dataset d;
  d.features = features;
  const auto cols = feature_columns_of(features);
  d.X.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = pos.find(ids[i]);
    if (it == pos.end()) throw ValidationError("split references unknown sample " + std::to_string(ids[i]));
    fill_row(d, static_cast<Eigen::Index>(i), records[it->second], cols);
  }
  return d;
}

Dataset subset(const Dataset& d, std::span<const std::size_t> rows) {
  Dataset s;
  s.features = d.features;
  s.X.resize(static_cast<Eigen::Index>(rows.size()), d.X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.X.row(static_cast<Eigen::Index>(i)) = d.X.row(static_cast<Eigen::Index>(rows[i]));
    s.y.push_back(d.y[rows[i]]);
    s.category.push_back(d.category[rows[i]]);
    s.ids.push_back(d.ids[rows[i]]);
  }
  return s;
}

std::string to_string(Direction d) { return d == Direction::less_equal ? "<=" : ">"; }

Direction parse_direction(std::string_view s) {
  if (s == "<=") return Direction::less_equal;
  if (s == ">") return Direction::greater;
  throw ValidationError("unknown split direction '" + std::string(s) + "'");
}

std::size_t cell_of(const PartitionSpec& spec, const std::vector<std::string>& features,
                    std::span<const double> x) {
  if (spec.splits[0].holds(x[column_of(features, spec.splits[0].feature)])) return 0;
  if (spec.splits[1].holds(x[column_of(features, spec.splits[1].feature)])) return 1;
  return 2;
}

double CellModel::predict(std::span<const double> x) const {
  return model ? memtax::predict(*model, x) : fallback_probability;
}

std::size_t RoutedModel::route(Category category, const std::vector<std::string>& features,
                               std::span<const double> x) const {
  if (partition) return cell_of(*partition, features, x);
  return static_cast<std::size_t>(category);
}

double RoutedModel::predict(Category category, const std::vector<std::string>& features,
                            std::span<const double> x) const {
  return cells[route(category, features, x)].predict(x);
}

namespace {

std::vector<double> row_of(const Dataset& d, std::size_t i) {
  std::vector<double> x(static_cast<std::size_t>(d.X.cols()));
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return x;
}

CellModel train_cell(const Dataset& train, std::span<const std::size_t> rows, const std::string& name,
                     const TrainOptions& options) {
  CellModel cell;
  cell.name = name;
  if (rows.empty()) {
    cell.error = "empty cell";
    return cell;
  }
  std::size_t positives = 0;
  for (auto r : rows) positives += train.y[r] != 0;
  cell.fallback_probability = static_cast<double>(positives) / static_cast<double>(rows.size());
  if (positives == 0 || positives == rows.size()) {
    cell.error = "single-class cell: " + std::to_string(rows.size() - positives) + " negatives, " +
                 std::to_string(positives) + " positives";
    return cell;
  }
  const Dataset s = subset(train, rows);
  cell.model = train_logreg(s.X, s.y, s.features, options);
  return cell;
}

}  // namespace

std::array<CellModel, 3> train_cells(const Dataset& train, std::span<const std::size_t> cell_index,
                                     const std::array<std::string, 3>& names,
                                     const TrainOptions& options) {
  std::array<std::vector<std::size_t>, 3> rows;
  for (std::size_t i = 0; i < cell_index.size(); ++i) rows[cell_index[i]].push_back(i);
  std::array<CellModel, 3> cells;
  for (std::size_t c = 0; c < 3; ++c) cells[c] = train_cell(train, rows[c], names[c], options);
  return cells;
}

RoutedModel train_taxonomic(const Dataset& train, const TrainOptions& options) {
  RoutedModel m;
  m.kind = "taxonomic";
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::size_t>(train.category[i]);
  m.cells = train_cells(train, idx,
                        {to_string(Category::recitation), to_string(Category::reconstruction),
                         to_string(Category::recollection)},
                        options);
  return m;
}

Metrics compute_metrics(std::span<const double> probability, std::span<const int> y, double threshold,
                        std::size_t ece_bins) {
  if (probability.size() != y.size() || y.empty())
    throw ArgumentError("metrics need equal nonempty prediction and label vectors");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double brier = 0.0;
  std::vector<double> bin_p(ece_bins, 0.0), bin_y(ece_bins, 0.0), bin_n(ece_bins, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool pred = probability[i] >= threshold;
    const bool pos = y[i] != 0;
    tp += pred && pos;
    fp += pred && !pos;
    fn += !pred && pos;
    tn += !pred && !pos;
    const double label = pos ? 1.0 : 0.0;
    brier += (probability[i] - label) * (probability[i] - label);
    const auto b = std::min(static_cast<std::size_t>(probability[i] * static_cast<double>(ece_bins)), ece_bins - 1);
    bin_p[b] += probability[i];
    bin_y[b] += label;
    bin_n[b] += 1.0;
  }
  const double n = static_cast<double>(y.size());
  Metrics m;
  m.accuracy = static_cast<double>(tp + tn) / n;
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = tp ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
  m.brier = brier / n;
  for (std::size_t b = 0; b < ece_bins; ++b)
    if (bin_n[b] > 0) m.ece += std::fabs(bin_p[b] - bin_y[b]) / n;
  return m;
}

PartitionSearchResult partition_search(const Dataset& train, const Dataset& validation,
                                       const PartitionSearchConfig& config,
                                       const TrainOptions& options, Execution exec) {
  if (config.candidates.size() < 2) throw ArgumentError("partition search needs at least two candidate features");
  if (validation.size() == 0) throw ArgumentError("partition search needs a nonempty validation split");
  std::vector<Split> choices;
  std::vector<std::size_t> choice_col;
  for (const auto& f : config.candidates) {
    const std::size_t col = column_of(train.features, f);
    std::vector<double> values(train.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = train.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col));
    std::sort(values.begin(), values.end());
    for (double q : config.percentiles) {
      const double threshold = percentile_sorted(values, q / 100.0);
      for (auto dir : {Direction::less_equal, Direction::greater}) {
        choices.push_back({f, q, threshold, dir});
        choice_col.push_back(col);
      }
    }
  }
  const std::size_t k = choices.size();
  const auto holds = [&](const Dataset& d, std::size_t row, std::size_t c) {
    return choices[c].holds(d.X(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(choice_col[c])));
  };
  std::vector<std::vector<double>> val_rows(validation.size());
  for (std::size_t i = 0; i < validation.size(); ++i) val_rows[i] = row_of(validation, i);

  struct Local {
    double f1 = -1.0;
    std::size_t second = 0;
    std::array<CellModel, 3> cells;
    std::size_t evaluated = 0, skipped = 0;
    std::vector<std::string> reasons;
  };
  std::vector<Local> locals(k);

  const auto search_first = [&](std::size_t a) {
    Local& L = locals[a];
    std::vector<std::size_t> cell_a, rest;
    for (std::size_t i = 0; i < train.size(); ++i) (holds(train, i, a) ? cell_a : rest).push_back(i);
    const auto skip = [&](std::size_t count, std::string why) {
      L.skipped += count;
      if (L.reasons.size() < 4) L.reasons.push_back(std::move(why));
    };
    const CellModel model_a = train_cell(train, cell_a, "cell_a", options);
    if (!model_a.model) {
      skip(k, "first split " + choices[a].feature + " " + to_string(choices[a].direction) + " p" +
                  format_double(choices[a].percentile) + ": " + model_a.error);
      return;
    }
    std::vector<double> prob(validation.size());
    std::vector<bool> in_a(validation.size());
    for (std::size_t i = 0; i < validation.size(); ++i) {
      in_a[i] = holds(validation, i, a);
      if (in_a[i]) prob[i] = model_a.predict(val_rows[i]);
    }
    for (std::size_t b = 0; b < k; ++b) {
      std::vector<std::size_t> cell_b, cell_c;
      for (auto i : rest) (holds(train, i, b) ? cell_b : cell_c).push_back(i);
      const CellModel model_b = train_cell(train, cell_b, "cell_b", options);
      const CellModel model_c = model_b.model ? train_cell(train, cell_c, "cell_c", options) : CellModel{};
      if (!model_b.model || !model_c.model) {
        skip(1, "pair (" + std::to_string(a) + ", " + std::to_string(b) + "): " +
                    (model_b.model ? model_c.error : model_b.error));
        continue;
      }
      ++L.evaluated;
      for (std::size_t i = 0; i < validation.size(); ++i)
        if (!in_a[i]) prob[i] = holds(validation, i, b) ? model_b.predict(val_rows[i]) : model_c.predict(val_rows[i]);
      const double f1 = compute_metrics(prob, validation.y, config.decision_threshold).f1;
      if (f1 > L.f1) {
        L.f1 = f1;
        L.second = b;
        L.cells = {model_a, model_b, model_c};
      }
    }
  };
  const auto n = static_cast<std::ptrdiff_t>(k);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t a = 0; a < n; ++a) search_first(static_cast<std::size_t>(a));
  } else {
    for (std::ptrdiff_t a = 0; a < n; ++a) search_first(static_cast<std::size_t>(a));
  }

  PartitionSearchResult result;
  result.log.search_space = k * k;
  std::optional<std::size_t> best;
  for (std::size_t a = 0; a < k; ++a) {
    result.log.evaluated += locals[a].evaluated;
    result.log.skipped += locals[a].skipped;
    for (auto& r : locals[a].reasons)
      if (result.log.skip_reasons.size() < 20) result.log.skip_reasons.push_back(r);
    if (locals[a].evaluated && (!best || locals[a].f1 > locals[*best].f1)) best = a;
  }
  if (!best) throw ArgumentError("partition search found no trainable partition");
  result.log.best_f1 = locals[*best].f1;
  result.model.kind = "partitioned";
  result.model.partition = PartitionSpec{{choices[*best], choices[locals[*best].second]}};
  result.model.cells = std::move(locals[*best].cells);
  return result;
}

std::vector<double> predict_all(const ModelSet& models, const std::string& which, const Dataset& data) {
  std::vector<double> p(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = row_of(data, i);
    if (which == "baseline") p[i] = predict(models.baseline, x);
    else if (which == "taxonomic") p[i] = models.taxonomic.predict(data.category[i], data.features, x);
    else if (which == "partitioned" && models.partitioned)
      p[i] = models.partitioned->predict(data.category[i], data.features, x);
    else throw ArgumentError("no model named '" + which + "'");
  }
  return p;
}

const SubsetReport& EvalReport::find(const std::string& model, const std::string& subset) const {
  for (const auto& r : rows)
    if (r.model == model && r.subset == subset) return r;
  throw ArgumentError("no evaluation row for " + model + "/" + subset);
}

EvalReport evaluate(const ModelSet& models, const Dataset& test, const EvalConfig& config,
                    Execution exec) {
  std::vector<std::string> names = {"baseline", "taxonomic"};
  if (models.partitioned) names.push_back("partitioned");
  std::vector<std::string> subsets = {"all"};
  for (auto c : kCategories) subsets.push_back(to_string(c));

  EvalReport report;
  for (std::size_t m = 0; m < names.size(); ++m) {
    const auto prob = predict_all(models, names[m], test);
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      SubsetReport row;
      row.model = names[m];
      row.subset = subsets[s];
      std::vector<double> p;
      std::vector<int> y;
      for (std::size_t i = 0; i < test.size(); ++i)
        if (s == 0 || test.category[i] == kCategories[s - 1]) {
          p.push_back(prob[i]);
          y.push_back(test.y[i]);
        }
      row.n = p.size();
      row.present = !p.empty();
      if (row.present) {
        row.value = compute_metrics(p, y, config.decision_threshold);
        if (config.bootstrap > 1) {
          std::vector<Metrics> reps(config.bootstrap);
          const std::uint64_t cell_seed = derive_seed(config.seed, m * subsets.size() + s);
          const auto run = [&](std::size_t r) {
            Rng rng = make_rng(cell_seed, r);
            std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
            std::vector<double> bp(p.size());
            std::vector<int> by(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) {
              const auto j = pick(rng);
              bp[i] = p[j];
              by[i] = y[j];
            }
            reps[r] = compute_metrics(bp, by, config.decision_threshold);
          };
          const auto count = static_cast<std::ptrdiff_t>(reps.size());
          if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t r = 0; r < count; ++r) run(static_cast<std::size_t>(r));
          } else {
            for (std::ptrdiff_t r = 0; r < count; ++r) run(static_cast<std::size_t>(r));
          }
          const auto sd = [&](double Metrics::*field) {
            double mean = 0.0;
            for (const auto& r : reps) mean += r.*field;
            mean /= static_cast<double>(reps.size());
            double ss = 0.0;
            for (const auto& r : reps) ss += (r.*field - mean) * (r.*field - mean);
            return std::sqrt(ss / static_cast<double>(reps.size() - 1));
          };
          row.stddev = {sd(&Metrics::accuracy), sd(&Metrics::precision), sd(&Metrics::recall),
                        sd(&Metrics::f1),       sd(&Metrics::brier),     sd(&Metrics::ece)};
        }
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

namespace {

const std::array<std::pair<const char*, double Metrics::*>, 6> kMetricFields = {{
    {"accuracy", &Metrics::accuracy},
    {"precision", &Metrics::precision},
    {"recall", &Metrics::recall},
    {"f1", &Metrics::f1},
    {"brier", &Metrics::brier},
    {"ece", &Metrics::ece},
}};

}  // namespace

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json j = {{"model", row.model}, {"subset", row.subset}, {"n", row.n},
                                {"present", row.present}};
    if (row.present) {
      nlohmann::ordered_json metrics;
      for (const auto& [name, field] : kMetricFields)
        metrics[name] = {{"value", row.value.*field}, {"stddev", row.stddev.*field}};
      j["metrics"] = metrics;
    } else {
      j["metrics"] = nullptr;
    }
    rows.push_back(std::move(j));
  }
  return rows;
}

std::string eval_csv(const EvalReport& r) {
  std::string out = "model,subset,n,metric,value,stddev\n";
  for (const auto& row : r.rows)
    for (const auto& [name, field] : kMetricFields) {
      out += row.model + "," + row.subset + "," + std::to_string(row.n) + "," + name + ",";
      if (row.present) out += format_double(row.value.*field) + "," + format_double(row.stddev.*field);
      else out += ",";
      out += "\n";
    }
  return out;
}

std::vector<WeightRow> report_weights(const ModelSet& models) {
  std::vector<WeightRow> rows;
  rows.push_back({"baseline", "all", models.baseline.weights, models.baseline.bias});
  const auto add = [&](const RoutedModel& m) {
    for (const auto& cell : m.cells) {
      if (cell.model) {
        rows.push_back({m.kind, cell.name, cell.model->weights, cell.model->bias});
      } else {
        const double p = std::clamp(cell.fallback_probability, 1e-12, 1.0 - 1e-12);
        rows.push_back({m.kind, cell.name, std::vector<double>(models.features.size(), 0.0),
                        std::log(p / (1.0 - p))});
      }
    }
  };
  add(models.taxonomic);
  if (models.partitioned) add(*models.partitioned);
  return rows;
}

std::string weights_csv(const std::vector<std::string>& features, const std::vector<WeightRow>& rows) {
  std::string out = "model,cell";
  for (const auto& f : features) out += "," + f;
  out += ",bias\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.cell;
    for (double w : r.weights) out += "," + format_double(w);
    out += "," + format_double(r.bias) + "\n";
  }
  return out;
}

nlohmann::ordered_json to_json(const RegressionModel& m) {
  std::vector<int> constant(m.normalizer.constant.begin(), m.normalizer.constant.end());
  return {{"features", m.features},
          {"weights", m.weights},
          {"bias", m.bias},
          {"lambda", m.lambda},
          {"class_weights", {{"negative", m.class_weights[0]}, {"positive", m.class_weights[1]}}},
          {"normalizer", {{"mean", m.normalizer.mean}, {"stddev", m.normalizer.stddev}, {"constant", constant}}},
          {"seed", m.seed},
          {"optimizer",
           {{"method", "newton_backtracking"},
            {"tolerance", m.tolerance},
            {"iterations", m.iterations},
            {"gradient_norm", m.gradient_norm},
            {"hit_iteration_limit", m.hit_iteration_limit},
            {"initial_objective", m.initial_objective},
            {"final_objective", m.final_objective}}}};
}

RegressionModel regression_from_json(const nlohmann::json& j) {
  RegressionModel m;
  try {
    m.features = j.at("features").get<std::vector<std::string>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.class_weights = {j.at("class_weights").at("negative").get<double>(),
                       j.at("class_weights").at("positive").get<double>()};
    const auto& n = j.at("normalizer");
    m.normalizer.mean = n.at("mean").get<std::vector<double>>();
    m.normalizer.stddev = n.at("stddev").get<std::vector<double>>();
    for (int c : n.at("constant").get<std::vector<int>>()) m.normalizer.constant.push_back(c != 0);
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& o = j.at("optimizer");
    m.tolerance = o.at("tolerance").get<double>();
    m.iterations = o.at("iterations").get<std::size_t>();
    m.gradient_norm = o.at("gradient_norm").get<double>();
    m.hit_iteration_limit = o.at("hit_iteration_limit").get<bool>();
    m.initial_objective = o.at("initial_objective").get<double>();
    m.final_objective = o.at("final_objective").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
  const std::size_t d = m.features.size();
  if (m.weights.size() != d || m.normalizer.mean.size() != d || m.normalizer.stddev.size() != d ||
      m.normalizer.constant.size() != d)
    throw ValidationError("model arrays disagree with its feature list");
  return m;
}

namespace {

nlohmann::ordered_json routed_to_json(const RoutedModel& m) {
  nlohmann::ordered_json j = {{"kind", m.kind}};
  if (m.partition) {
    nlohmann::ordered_json splits = nlohmann::ordered_json::array();
    for (const auto& s : m.partition->splits)
      splits.push_back({{"feature", s.feature}, {"percentile", s.percentile}, {"threshold", s.threshold},
                        {"direction", to_string(s.direction)}});
    j["partition"] = splits;
  } else {
    j["partition"] = nullptr;
  }
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : m.cells) {
    nlohmann::ordered_json cj = {{"name", c.name}};
    cj["model"] = c.model ? to_json(*c.model) : nlohmann::ordered_json(nullptr);
    cj["fallback_probability"] = c.fallback_probability;
    cj["error"] = c.error;
    cells.push_back(std::move(cj));
  }
  j["cells"] = cells;
  return j;
}

RoutedModel routed_from_json(const nlohmann::json& j) {
  RoutedModel m;
  try {
    m.kind = j.at("kind").get<std::string>();
    if (!j.at("partition").is_null()) {
      PartitionSpec spec;
      for (std::size_t i = 0; i < 2; ++i) {
        const auto& s = j.at("partition").at(i);
        spec.splits[i] = {s.at("feature").get<std::string>(), s.at("percentile").get<double>(),
                          s.at("threshold").get<double>(),
                          parse_direction(s.at("direction").get<std::string>())};
      }
      m.partition = spec;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& c = j.at("cells").at(i);
      m.cells[i].name = c.at("name").get<std::string>();
      if (!c.at("model").is_null()) m.cells[i].model = regression_from_json(c.at("model"));
      m.cells[i].fallback_probability = c.at("fallback_probability").get<double>();
      m.cells[i].error = c.at("error").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed routed model: ") + e.what());
  }
  return m;
}

}  // namespace

nlohmann::ordered_json to_json(const ModelSet& m) {
  nlohmann::ordered_json j = {
      {"features", m.features},
      {"options",
       {{"lambda", m.options.lambda}, {"tolerance", m.options.tolerance},
        {"max_iterations", m.options.max_iterations}, {"seed", m.options.seed}}},
      {"baseline", to_json(m.baseline)},
      {"taxonomic", routed_to_json(m.taxonomic)}};
  j["partitioned"] = m.partitioned ? routed_to_json(*m.partitioned) : nlohmann::ordered_json(nullptr);
  if (m.search_log) {
    j["partition_search"] = {{"search_space", m.search_log->search_space},
                             {"evaluated", m.search_log->evaluated},
                             {"skipped", m.search_log->skipped},
                             {"best_f1", m.search_log->best_f1},
                             {"skip_examples", m.search_log->skip_reasons}};
  } else {
    j["partition_search"] = nullptr;
  }
  return j;
}

ModelSet models_from_json(const nlohmann::json& j) {
  ModelSet m;
  try {
    m.features = j.at("features").get<std::vector<std::string>>();
    const auto& o = j.at("options");
    m.options.lambda = o.at("lambda").get<double>();
    m.options.tolerance = o.at("tolerance").get<double>();
    m.options.max_iterations = o.at("max_iterations").get<std::size_t>();
    m.options.seed = o.at("seed").get<std::uint64_t>();
    m.baseline = regression_from_json(j.at("baseline"));
    m.taxonomic = routed_from_json(j.at("taxonomic"));
    if (!j.at("partitioned").is_null()) m.partitioned = routed_from_json(j.at("partitioned"));
    if (!j.at("partition_search").is_null()) {
      const auto& s = j.at("partition_search");
      PartitionSearchLog log;
      log.search_space = s.at("search_space").get<std::size_t>();
      log.evaluated = s.at("evaluated").get<std::size_t>();
      log.skipped = s.at("skipped").get<std::size_t>();
      log.best_f1 = s.at("best_f1").get<double>();
      log.skip_reasons = s.at("skip_examples").get<std::vector<std::string>>();
      m.search_log = log;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
  return m;
}

}  // namespace memtax
