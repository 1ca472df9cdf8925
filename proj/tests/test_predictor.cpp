#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "memtax/feature_vector.hpp"
#include "memtax/predictor.hpp"
#include "memtax/synthgen.hpp"

using namespace memtax;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Labels drawn from a logistic model with known coefficients over N(0,1) features.
Dataset planted(std::uint64_t seed, std::size_t n, const std::vector<double>& w, double b,
                std::vector<std::string> names = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0, 1);
  Dataset d;
  if (names.empty())
    for (std::size_t j = 0; j < w.size(); ++j) names.push_back("f" + std::to_string(j));
  d.features = names;
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < n; ++i) {
    double s = b;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double v = z(rng);
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      s += w[j] * v;
    }
    d.y.push_back(std::uniform_real_distribution<double>(0, 1)(rng) < sigmoid(s) ? 1 : 0);
    d.category.push_back(static_cast<Category>(rng() % 3));
    d.ids.push_back(i);
  }
  return d;
}

std::vector<std::size_t> iota_rows(std::size_t from, std::size_t to) {
  std::vector<std::size_t> r;
  for (std::size_t i = from; i < to; ++i) r.push_back(i);
  return r;
}

}  // namespace

TEST_CASE("normalizer") {
  Matrix X(2, 2);
  X << 1, 5, 3, 5;
  const auto n = fit_normalizer(X);
  const Matrix Z = apply_normalizer(n, X);
  CHECK(Z(0, 0) == doctest::Approx(-1.0));
  CHECK(Z(1, 0) == doctest::Approx(1.0));
  CHECK(n.constant[1]);
  CHECK(Z(0, 1) == 5.0);

  std::mt19937_64 rng(1);
  Matrix R(200, 3);
  for (Eigen::Index i = 0; i < R.rows(); ++i)
    for (Eigen::Index j = 0; j < 3; ++j) R(i, j) = std::normal_distribution<double>(j * 3.0, 1.0 + j)(rng);
  const Matrix S = apply_normalizer(fit_normalizer(R), R);
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(std::fabs(S.col(j).mean()) < 1e-9);
    CHECK(std::fabs((S.col(j).array() - S.col(j).mean()).square().mean() - 1.0) < 1e-9);
  }
  const Matrix S2 = apply_normalizer(fit_normalizer(S), S);
  CHECK((S2 - S).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(apply_normalizer(n, R), ArgumentError);
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0, 1);
  for (int point = 0; point < 20; ++point) {
    const Eigen::Index n = 30, d = 4;
    Matrix X(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) X(i, j) = z(rng);
    std::vector<int> y(n);
    std::vector<double> sw(n);
    for (auto& v : y) v = static_cast<int>(rng() % 2);
    for (auto& v : sw) v = 0.5 + std::uniform_real_distribution<double>(0, 2)(rng);
    const LogisticProblem p{X, y, sw, 0.3 + point * 0.1};
    Vector w(d);
    for (Eigen::Index j = 0; j < d; ++j) w(j) = z(rng);
    const double b = z(rng);
    const Vector g = logistic_gradient(p, w, b);
    Vector fd(d + 1);
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < d; ++j) {
      Vector wp = w, wm = w;
      wp(j) += h;
      wm(j) -= h;
      fd(j) = (logistic_objective(p, wp, b) - logistic_objective(p, wm, b)) / (2 * h);
    }
    fd(d) = (logistic_objective(p, w, b + h) - logistic_objective(p, w, b - h)) / (2 * h);
    CHECK((g - fd).norm() / std::max(1.0, fd.norm()) <= 1e-5);
  }
}

TEST_CASE("zero model and prediction link") {
  const auto m = zero_model({"a", "b"});
  CHECK(predict(m, std::vector<double>{3.0, -8.0}) == 0.5);
  auto m2 = m;
  m2.weights = {1.0, 0.0};
  m2.bias = std::log(3.0) - 2.0;
  CHECK(predict(m2, std::vector<double>{2.0, 0.0}) == doctest::Approx(0.75));
  CHECK(predict(m2, std::vector<double>{2.5, 0.0}) > predict(m2, std::vector<double>{2.0, 0.0}));
  CHECK_THROWS_AS(predict(m2, std::vector<double>{1.0}), ArgumentError);
}

TEST_CASE("separable toy reaches full training accuracy") {
  Matrix X(8, 1);
  X << -1, -1.2, -0.8, -1.1, 1, 1.2, 0.9, 1.1;
  const std::vector<int> y = {0, 0, 0, 0, 1, 1, 1, 1};
  const auto m = train_logreg(X, y, {"x"});
  CHECK(m.weights[0] > 0);
  for (Eigen::Index i = 0; i < 8; ++i)
    CHECK((predict(m, std::vector<double>{X(i, 0)}) >= 0.5) == (y[static_cast<std::size_t>(i)] == 1));
  CHECK(m.gradient_norm <= m.tolerance);
  CHECK(!m.hit_iteration_limit);
  CHECK_THROWS_WITH_AS(train_logreg(X, std::vector<int>(8, 1), {"x"}), doctest::Contains("0 negatives, 8 positives"),
                       ArgumentError);
}

TEST_CASE("planted coefficients are recovered") {
  const std::vector<double> truth = {1.5, -1.0, 0.5, -2.0};
  const auto d = planted(3, 10000, truth, 0.0);
  const auto m = train_logreg(d.X, d.y, d.features);
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const double raw = m.weights[j] / m.normalizer.stddev[j];
    CHECK(raw * truth[j] > 0);
    CHECK(std::fabs(raw - truth[j]) <= 0.2 * std::fabs(truth[j]));
  }
}

TEST_CASE("objective trace decreases and heavy regularization zeroes the weights") {
  const auto d = planted(4, 2000, {1.0, -1.0}, 0.7);
  const Matrix Xn = apply_normalizer(fit_normalizer(d.X), d.X);
  const std::vector<double> sw(d.size(), 1.0);
  const auto fit = fit_logistic({Xn, d.y, sw, 1.0}, {});
  REQUIRE(fit.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    CHECK(fit.objective_trace[i] <= fit.objective_trace[i - 1]);

  TrainOptions heavy;
  heavy.lambda = 1e9;
  const auto big = fit_logistic({Xn, d.y, sw, heavy.lambda}, heavy);
  CHECK(big.w.cwiseAbs().maxCoeff() < 1e-5);
  const double rate = static_cast<double>(std::count(d.y.begin(), d.y.end(), 1)) / static_cast<double>(d.size());
  CHECK(sigmoid(big.b) == doctest::Approx(rate).epsilon(1e-4));
}

TEST_CASE("balanced weights equal duplicating the minority class") {
  auto d = planted(5, 1200, {1.0, 0.5}, -1.5);
  // Trim so the majority is an exact multiple of the minority.
  std::size_t pos = static_cast<std::size_t>(std::count(d.y.begin(), d.y.end(), 1));
  std::size_t neg = d.size() - pos;
  REQUIRE(pos < neg);
  const std::size_t k = neg / pos;
  std::vector<std::size_t> keep;
  std::size_t kept_neg = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.y[i] == 1 || kept_neg < k * pos) {
      keep.push_back(i);
      kept_neg += d.y[i] == 0;
    }
  d = subset(d, keep);
  pos = static_cast<std::size_t>(std::count(d.y.begin(), d.y.end(), 1));
  neg = d.size() - pos;
  REQUIRE(neg == k * pos);

  const Matrix Xn = apply_normalizer(fit_normalizer(d.X), d.X);
  TrainOptions opt;
  opt.tolerance = 1e-10;
  const auto m = train_logreg(Xn, d.y, d.features, opt);
  CHECK(m.class_weights[0] == doctest::Approx(static_cast<double>(d.size()) / (2.0 * neg)));
  CHECK(m.class_weights[1] == doctest::Approx(static_cast<double>(d.size()) / (2.0 * pos)));

  Matrix Xd(static_cast<Eigen::Index>(neg + k * pos), Xn.cols());
  std::vector<int> yd;
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t rep = 0; rep < (d.y[i] ? k : 1); ++rep) {
      Xd.row(row++) = Xn.row(static_cast<Eigen::Index>(i));
      yd.push_back(d.y[i]);
    }
  // Uniform weights carry 2*neg/N times the balanced class mass, so lambda scales alike.
  const double scale = 2.0 * static_cast<double>(neg) / static_cast<double>(d.size());
  const std::vector<double> ones(yd.size(), 1.0);
  const auto dup = fit_logistic({Xd, yd, ones, opt.lambda * scale}, opt);
  for (std::size_t j = 0; j < m.weights.size(); ++j)
    CHECK(std::fabs(dup.w(static_cast<Eigen::Index>(j)) - m.weights[j]) < 1e-4);
  CHECK(std::fabs(dup.b - m.bias) < 1e-4);
}

TEST_CASE("dataset splits") {
  std::vector<std::uint64_t> rep(1000), mem(500);
  for (std::uint64_t i = 0; i < 1000; ++i) rep[i] = i;
  for (std::uint64_t i = 0; i < 500; ++i) mem[i] = 5000 + i;
  const auto s = split_datasets(rep, mem, {}, 42);
  CHECK(s.test.size() == 200);
  CHECK(s.validation.size() == 130);
  CHECK(s.train.size() == 1170);
  std::set<std::uint64_t> all;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (auto id : *part) CHECK(all.insert(id).second);
  CHECK(all.size() == 1500);
  for (auto id : s.test) CHECK(id < 1000);
  CHECK(to_json(split_datasets(rep, mem, {}, 42)).dump() == to_json(s).dump());
  CHECK(to_json(splits_from_json(nlohmann::json(to_json(s)))).dump() == to_json(s).dump());
  CHECK(to_json(split_datasets(rep, mem, {}, 43)).dump() != to_json(s).dump());
  mem.push_back(3);
  mem.push_back(7);
  CHECK_THROWS_WITH_AS(split_datasets(rep, mem, {}, 1), doctest::Contains("3 7"), ArgumentError);
}

TEST_CASE("metric fixtures") {
  const std::vector<int> y = {1, 0, 1, 0};
  const auto perfect = compute_metrics(std::vector<double>{1, 0, 1, 0}, y);
  CHECK(perfect.accuracy == 1);
  CHECK(perfect.precision == 1);
  CHECK(perfect.recall == 1);
  CHECK(perfect.f1 == 1);
  CHECK(perfect.brier == 0);
  CHECK(perfect.ece == 0);
  const auto always = compute_metrics(std::vector<double>{0.9, 0.9, 0.9, 0.9}, y);
  CHECK(always.precision == doctest::Approx(0.5));
  CHECK(always.recall == 1);
  CHECK(always.f1 == doctest::Approx(2.0 / 3));
  const auto half = compute_metrics(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y);
  CHECK(half.brier == doctest::Approx(0.25));
  CHECK(half.ece == doctest::Approx(0.0));
  const auto never = compute_metrics(std::vector<double>{0.1, 0.1, 0.1, 0.1}, y);
  CHECK(never.precision == 0);
  CHECK(never.f1 == 0);
}

TEST_CASE("taxonomic model recovers opposite per-category signs") {
  RecordSpec spec;
  spec.n = 9000;
  spec.seed = 6;
  spec.coefficients = simpson_coefficients();
  const auto recs = generate_records(spec);
  const auto names = model_feature_names();
  const auto d = make_dataset(recs, names);
  const auto tax = train_taxonomic(d, {});
  const std::size_t h = model_feature_index("huffman_bits");
  REQUIRE(tax.cells[0].model);
  REQUIRE(tax.cells[1].model);
  CHECK(tax.cells[0].model->weights[h] < 0);
  CHECK(tax.cells[1].model->weights[h] > 0);
  // Every sample is routed by its own category.
  for (std::size_t i = 0; i < 30; ++i)
    CHECK(tax.route(d.category[i], d.features, std::vector<double>(names.size(), 0.0)) ==
          static_cast<std::size_t>(d.category[i]));
}

TEST_CASE("homogeneous categories give matching weights") {
  const auto d = planted(7, 12000, {1.0, -0.8, 0.4}, 0.2);
  const auto agg = train_logreg(d.X, d.y, d.features);
  const auto tax = train_taxonomic(d, {});
  for (const auto& cell : tax.cells) {
    REQUIRE(cell.model);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(cell.model->weights[j] - agg.weights[j]) < 0.15);
  }
}

TEST_CASE("partition cells are total") {
  PartitionSpec spec{{Split{"a", 50, 0.0, Direction::less_equal}, Split{"b", 25, 1.0, Direction::greater}}};
  const std::vector<std::string> f = {"a", "b"};
  CHECK(cell_of(spec, f, std::vector<double>{-1, 5}) == 0);
  CHECK(cell_of(spec, f, std::vector<double>{1, 5}) == 1);
  CHECK(cell_of(spec, f, std::vector<double>{1, 1}) == 2);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> x = {std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng)};
    CHECK(cell_of(spec, f, x) < 3);
  }
}

TEST_CASE("partition search finds planted regimes") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0, 1);
  Dataset d;
  d.features = {"f1", "f0", "f2"};
  const std::size_t n = 4000;
  d.X.resize(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double f0 = std::uniform_real_distribution<double>(0, 100)(rng), f1 = z(rng), f2 = z(rng);
    const auto r = static_cast<Eigen::Index>(i);
    d.X(r, 0) = f1;
    d.X(r, 1) = f0;
    d.X(r, 2) = f2;
    const double s = f0 <= 25 ? 4 * f1 : f0 > 75 ? -4 * f1 : 4 * f2;
    d.y.push_back(std::uniform_real_distribution<double>(0, 1)(rng) < sigmoid(s) ? 1 : 0);
    d.category.push_back(Category::recollection);
    d.ids.push_back(i);
  }
  const auto train = subset(d, iota_rows(0, 3000));
  const auto val = subset(d, iota_rows(3000, n));
  PartitionSearchConfig cfg;
  cfg.candidates = d.features;
  const auto res = partition_search(train, val, cfg, {});
  REQUIRE(res.model.partition);
  CHECK(res.model.partition->splits[0].feature == "f0");
  CHECK(res.model.partition->splits[1].feature == "f0");
  CHECK(res.log.search_space == 18 * 18);
  CHECK(res.log.evaluated + res.log.skipped == res.log.search_space);

  const auto serial = partition_search(train, val, cfg, {}, Execution::serial);
  CHECK(serial.log.best_f1 == res.log.best_f1);
  CHECK(serial.model.partition->splits[0].threshold == res.model.partition->splits[0].threshold);
  CHECK(serial.model.partition->splits[1].direction == res.model.partition->splits[1].direction);
}

TEST_CASE("partition search tie rule prefers canonical order") {
  auto d = planted(10, 2000, {1.0, 0.0}, 0.0, {"a", "b"});
  d.X.col(1) = d.X.col(0);
  const auto train = subset(d, iota_rows(0, 1500));
  const auto val = subset(d, iota_rows(1500, 2000));
  PartitionSearchConfig cfg;
  cfg.candidates = {"a", "b"};
  const auto res = partition_search(train, val, cfg, {});
  CHECK(res.model.partition->splits[0].feature == "a");
  CHECK(res.model.partition->splits[1].feature == "a");
  CHECK(res.log.search_space == 12 * 12);
  CHECK_THROWS_AS(partition_search(train, val, PartitionSearchConfig{{"a"}}, {}), ArgumentError);
}

TEST_CASE("evaluation, weights and model files are deterministic and round-trip") {
  RecordSpec spec;
  spec.n = 3000;
  spec.seed = 11;
  spec.coefficients = simpson_coefficients();
  const auto recs = generate_records(spec);
  const auto names = model_feature_names();
  const auto d = make_dataset(recs, names);
  const auto train = subset(d, iota_rows(0, 2000));
  const auto val = subset(d, iota_rows(2000, 2500));
  const auto test = subset(d, iota_rows(2500, 3000));
  ModelSet ms;
  ms.features = names;
  ms.baseline = train_logreg(train.X, train.y, names);
  ms.taxonomic = train_taxonomic(train, {});
  PartitionSearchConfig cfg;
  cfg.candidates = {"duplicate_count", "huffman_bits"};
  auto ps = partition_search(train, val, cfg, {});
  ms.partitioned = ps.model;
  ms.search_log = ps.log;

  EvalConfig ec;
  ec.bootstrap = 100;
  ec.seed = 3;
  const auto r1 = evaluate(ms, test, ec), r2 = evaluate(ms, test, ec, Execution::serial);
  CHECK(to_json(r1).dump() == to_json(r2).dump());
  CHECK(eval_csv(r1) == eval_csv(r2));
  CHECK(r1.rows.size() == 3 * 4);
  for (const auto& row : r1.rows) {
    if (!row.present) continue;
    for (double v : {row.value.accuracy, row.value.precision, row.value.recall, row.value.f1, row.value.brier, row.value.ece}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(r1.find("baseline", "all").n == 500);

  const auto text = to_json(ms).dump();
  const auto back = models_from_json(nlohmann::json::parse(text));
  CHECK(to_json(back).dump() == text);
  const auto p1 = predict_all(ms, "partitioned", test), p2 = predict_all(back, "partitioned", test);
  CHECK(p1 == p2);
  CHECK(weights_csv(names, report_weights(ms)) == weights_csv(names, report_weights(back)));
  CHECK(regression_from_json(nlohmann::json(to_json(ms.baseline))).weights == ms.baseline.weights);

  ModelSet zero;
  zero.features = {"x"};
  zero.baseline = zero_model({"x"});
  const auto rows = report_weights(zero);
  CHECK(rows.at(0).weights == std::vector<double>{0.0});
}

TEST_CASE("planted positive coefficient has a positive reported weight") {
  const auto d = planted(12, 3000, {0.0, 2.0}, 0.0);
  ModelSet ms;
  ms.features = d.features;
  ms.baseline = train_logreg(d.X, d.y, d.features);
  ms.taxonomic = train_taxonomic(d, {});
  for (const auto& row : report_weights(ms)) CHECK(row.weights[1] > 0);
}
