// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "memtax/dupindex.hpp"
#include "memtax/feature_vector.hpp"
#include "memtax/huffman.hpp"
#include "memtax/io_util.hpp"
#include "memtax/pipeline.hpp"
#include "memtax/predictor.hpp"
#include "memtax/stats.hpp"
#include "memtax/synthgen.hpp"
#include "memtax/taxonomy.hpp"
#include "memtax/template_detect.hpp"
#include "oracles.hpp"

using namespace memtax;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failed checks for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok) ++failed;
  }
  std::size_t failed = 0;
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------- 1
void duplicate_index_exactness(Check& c) {
  double worst = 0.0;
  std::size_t queries = 0, max_windows = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SynthSpec spec;
    spec.seed = 1000 + seed;
    spec.vocabulary_size = 1200 + static_cast<std::uint32_t>(seed % 5) * 300;
    spec.documents = 150;
    spec.document_length = 512;
    spec.zipf_exponent = 1.0 + 0.1 * static_cast<double>(seed % 4);
    spec.plants = {{PlantKind::random, 1 + seed % 9, 6},
                   {PlantKind::random, 2, 6},
                   {PlantKind::repeating, 1 + seed % 2, 5},
                   {PlantKind::incrementing, 1, 5}};
    const auto sc = generate_corpus(spec);
    const auto& corpus = sc.corpus;
    std::size_t windows = 0;
    for (const auto& d : corpus.documents) windows += d.tokens.size() >= 32 ? d.tokens.size() - 31 : 0;
    max_windows = std::max(max_windows, windows);

    std::vector<std::vector<TokenId>> qs;
    for (const auto& p : sc.manifest.plants) {
      qs.emplace_back(p.tokens.begin() + 32, p.tokens.end());
      qs.emplace_back(p.tokens.begin(), p.tokens.begin() + 32);
    }
    Rng rng(seed);
    for (const auto& p : sc.manifest.plants) {
      // One substituted token: a near miss that must not count as a copy.
      std::vector<TokenId> w(p.tokens.begin() + 32, p.tokens.end());
      w[rng() % w.size()] = static_cast<TokenId>(rng() % spec.vocabulary_size);
      qs.push_back(w);
    }
    for (int q = 0; q < 150; ++q) {
      const auto& doc = corpus.documents[rng() % corpus.documents.size()];
      const std::size_t off = rng() % (doc.tokens.size() - 31);
      qs.emplace_back(doc.tokens.begin() + static_cast<std::ptrdiff_t>(off),
                      doc.tokens.begin() + static_cast<std::ptrdiff_t>(off + 32));
    }
    for (int q = 0; q < 50; ++q) {
      std::vector<TokenId> w(32);
      for (auto& t : w) t = static_cast<TokenId>(rng() % spec.vocabulary_size);
      qs.push_back(w);
    }

    const auto t0 = Clock::now();
    const auto index = build_index(corpus);
    std::vector<std::uint64_t> got(qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) got[i] = index.duplicate_count(qs[i]);
    const double elapsed = seconds_since(t0);
    worst = std::max(worst, elapsed);
    c.expect(elapsed < 10.0, "corpus " + std::to_string(seed) + " took " + std::to_string(elapsed) + " s");
    c.expect(windows <= 100000, "corpus " + std::to_string(seed) + " has " + std::to_string(windows) + " windows");
    for (std::size_t i = 0; i < qs.size(); ++i) {
      const auto want = oracle::duplicate_count(corpus, qs[i]);
      c.expect(got[i] == want, "corpus " + std::to_string(seed) + " query " + std::to_string(i) + ": " +
                                   std::to_string(got[i]) + " vs oracle " + std::to_string(want));
      ++queries;
    }
  }
  c.detail << queries << " queries over 50 corpora (max " << max_windows << " windows), slowest build+query "
           << worst << " s";
}

// ---------------------------------------------------------------- 2
void hash_fidelity(Check& c) {
  constexpr std::uint64_t P = 60013, MOD = 1'000'000'000'000'000'003ULL;
  struct Fixture {
    std::vector<TokenId> tokens;
    std::uint64_t p, mod, want;
  };
  const std::vector<Fixture> fixtures = {
      {{1, 2}, P, MOD, 120027},
      {{1}, P, MOD, 1},
      {std::vector<TokenId>(32, 0), P, MOD, 0},
      {{2, 3}, P, MOD, 2 + 3 * 60013},
      {{1, 1, 1}, P, MOD, 1 + 60013 + 60013ULL * 60013ULL},
      {{3, 0, 5}, 10, 1000, 503},
      {{3, 0, 5}, 10, 97, 503 % 97},
  };
  for (const auto& f : fixtures)
    c.expect(window_hash(f.tokens, f.p, f.mod) == f.want, "fixture expected " + std::to_string(f.want));

  Rng rng(77);
  std::vector<TokenId> tokens(10000 + 31);
  for (auto& t : tokens) t = static_cast<TokenId>(rng() % 200000);
  const auto rolled = rolling_hashes(tokens, HashParams{});
  c.expect(rolled.size() == 10000, "expected 10000 rolled windows");
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < rolled.size(); ++i)
    mismatches += rolled[i] != window_hash(std::span<const TokenId>(tokens).subspan(i, 32), P, MOD);
  c.expect(mismatches == 0, std::to_string(mismatches) + " rolling mismatches");
  c.detail << fixtures.size() << " fixtures, " << rolled.size() << " rolled windows, " << mismatches << " mismatches";
}

// ---------------------------------------------------------------- 3
std::string render(long long v, int base) {
  if (base == 10) return std::to_string(v);
  std::string digits;
  do {
    digits.insert(digits.begin(), "0123456789abcdef"[v % base]);
    v /= base;
  } while (v > 0);
  return std::string(base == 16 ? "0x" : base == 2 ? "0b" : "0o") + digits;
}

void template_fixtures(Check& c) {
  c.expect(detect_template("Go Go Go Go Go Go").kind == TemplateKind::repeating, "Go Go Go");
  c.expect(detect_template("23: 0xf1, 24: 0xf2, 25: 0xf3").kind == TemplateKind::incrementing, "hex example");
  c.expect(detect_template("5 5 5 5").kind == TemplateKind::repeating, "zero-difference progression");
  c.expect(detect_template("the quick brown fox jumps").kind == TemplateKind::none, "plain text");

  Rng rng(2024);
  std::size_t cases = 0, wrong = 0;
  const auto tally = [&](bool ok, const std::string& text) {
    ++cases;
    if (!ok) {
      ++wrong;
      c.expect(false, "misclassified: " + text);
    }
  };
  for (std::size_t k = 3; k <= 32; ++k) {
    std::string s;
    for (std::size_t i = 0; i < k; ++i) s += "x ";
    tally(detect_template(s).kind == TemplateKind::repeating, s);
  }
  const std::vector<std::string> seps = {" ", ", ", "; ", " | "};
  const int bases[] = {10, 16, 2};
  while (cases < 700) {
    const long long a = static_cast<long long>(rng() % 500);
    const long long d = 1 + static_cast<long long>(rng() % 40);
    const std::size_t terms = 3 + rng() % 10;
    const int base = bases[cases % 3];
    const auto& sep = seps[rng() % seps.size()];
    std::string s;
    for (std::size_t i = 0; i < terms; ++i) s += (i ? sep : "") + render(a + d * static_cast<long long>(i), base);
    tally(detect_template(s).kind == TemplateKind::incrementing, s);
  }
  const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  while (cases < 1000) {
    std::string s;
    const std::size_t words = 4 + rng() % 12;
    for (std::size_t w = 0; w < words; ++w) {
      if (w) s += rng() % 5 == 0 ? ", " : " ";
      const std::size_t len = 2 + rng() % 7;
      for (std::size_t i = 0; i < len; ++i) s += letters[rng() % letters.size()];
    }
    if (rng() % 2) s += " " + std::to_string(rng() % 1000);
    tally(detect_template(s).kind == TemplateKind::none, s);
  }
  c.detail << "4 fixtures, " << cases << " property cases, " << wrong << " misclassified";
}

// ---------------------------------------------------------------- 4
void huffman_optimality(Check& c) {
  std::size_t enumerated = 0;
  // Every multiset over k <= 4 symbols with total length <= 12: each symbol
  // frequency at least 1, frequencies summing to at most 12.
  for (std::size_t k = 1; k <= 4; ++k) {
    std::vector<std::uint64_t> f(k, 1);
    for (;;) {
      const auto total = std::accumulate(f.begin(), f.end(), std::uint64_t{0});
      if (total <= 12) {
        std::vector<TokenId> seq;
        for (std::size_t s = 0; s < k; ++s) seq.insert(seq.end(), f[s], static_cast<TokenId>(s));
        const auto got = huffman_length(seq);
        const auto want = oracle::optimal_code_length(f);
        c.expect(got == want, "frequencies sum " + std::to_string(total) + ": " + std::to_string(got) +
                                  " vs " + std::to_string(want));
        ++enumerated;
      }
      std::size_t i = 0;
      while (i < k && ++f[i] > 12) f[i++] = 1;
      if (i == k) break;
    }
  }
  Rng rng(4);
  std::size_t sandwich = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<TokenId> seq(2 + rng() % 200);
    const auto alphabet = 2 + rng() % 40;
    for (auto& s : seq) s = static_cast<TokenId>(rng() % alphabet);
    seq[0] = 0;
    seq[1] = 1;
    std::map<TokenId, double> freq;
    for (auto s : seq) freq[s] += 1;
    const double n = static_cast<double>(seq.size());
    double h = 0;
    for (const auto& [_, f] : freq) h -= f / n * std::log2(f / n);
    const auto bits = static_cast<double>(huffman_length(seq));
    const bool ok = n * h <= bits + 1e-9 && bits < n * (h + 1);
    c.expect(ok, "entropy bound violated on trial " + std::to_string(t));
    sandwich += ok;
  }
  c.detail << enumerated << " enumerated multisets optimal, " << sandwich << "/1000 entropy sandwiches";
}

// ---------------------------------------------------------------- 5
void logistic_correctness(Check& c) {
  Rng rng(5);
  std::normal_distribution<double> z(0, 1);
  double worst_rel = 0;
  for (int point = 0; point < 20; ++point) {
    const Eigen::Index n = 40, d = 5;
    Matrix X(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) X(i, j) = z(rng);
    std::vector<int> y(n);
    std::vector<double> sw(n);
    for (auto& v : y) v = static_cast<int>(rng() % 2);
    for (auto& v : sw) v = 0.5 + uniform01(rng);
    const LogisticProblem prob{X, y, sw, 0.1 + uniform01(rng)};
    Vector w(d);
    for (Eigen::Index j = 0; j < d; ++j) w(j) = z(rng);
    const double b = z(rng);
    const Vector g = logistic_gradient(prob, w, b);
    Vector fd(d + 1);
    const double h = 1e-5;
    for (Eigen::Index j = 0; j <= d; ++j) {
      Vector wp = w, wm = w;
      double bp = b, bm = b;
      if (j < d) wp(j) += h, wm(j) -= h;
      else bp += h, bm -= h;
      fd(j) = (logistic_objective(prob, wp, bp) - logistic_objective(prob, wm, bm)) / (2 * h);
    }
    const double rel = (g - fd).norm() / std::max(fd.norm(), 1e-12);
    worst_rel = std::max(worst_rel, rel);
    c.expect(rel <= 1e-5, "finite-difference relative error " + std::to_string(rel));
  }

  Matrix X1(10, 1);
  std::vector<int> y1;
  for (Eigen::Index i = 0; i < 10; ++i) {
    X1(i, 0) = i < 5 ? -1.0 - 0.1 * static_cast<double>(i) : 1.0 + 0.1 * static_cast<double>(i);
    y1.push_back(i < 5 ? 0 : 1);
  }
  const auto toy = train_logreg(X1, y1, {"x"});
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < 10; ++i)
    correct += (predict(toy, std::vector<double>{X1(i, 0)}) >= 0.5) == (y1[static_cast<std::size_t>(i)] == 1);
  c.expect(correct == 10, "separable toy accuracy " + std::to_string(correct) + "/10");
  c.expect(toy.weights[0] > 0, "separable toy weight sign");

  const std::vector<double> truth = {1.2, -0.8, 0.5, -1.5, 0.3};
  const std::size_t n = 10000;
  Matrix X(n, truth.size());
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = -0.3;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const double v = z(rng);
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      s += truth[j] * v;
    }
    y[i] = uniform01(rng) < sigmoid(s);
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < truth.size(); ++j) names.push_back("x" + std::to_string(j));
  const auto m = train_logreg(X, y, names);
  double worst_err = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const double raw = m.weights[j] / m.normalizer.stddev[j];
    const double err = std::fabs(raw - truth[j]) / std::fabs(truth[j]);
    worst_err = std::max(worst_err, err);
    c.expect(raw * truth[j] > 0, "weight " + std::to_string(j) + " has the wrong sign");
    c.expect(err <= 0.2, "weight " + std::to_string(j) + " off by " + std::to_string(100 * err) + "%");
  }
  c.detail << "max gradient rel. error " << worst_rel << ", toy accuracy " << correct << "/10, worst weight error "
           << 100 * worst_err << "%";
}

// ---------------------------------------------------------------- 6
void taxonomy_partition(Check& c) {
  Rng rng(6);
  std::array<std::size_t, 3> seen{};
  for (int i = 0; i < 100000; ++i) {
    FeatureRecord r;
    r.duplicate_count = rng() % 2 ? rng() % 16 : rng();
    r.template_verdict.kind = static_cast<TemplateKind>(rng() % 3);
    if (r.template_verdict.kind != TemplateKind::none) r.template_verdict.stride = 1 + rng() % 8;
    const auto cat = assign_category(r);
    const bool recites = r.duplicate_count >= 6, templated = r.template_verdict.kind != TemplateKind::none;
    const int members = (cat == Category::recitation) + (cat == Category::reconstruction) + (cat == Category::recollection);
    const bool ok = members == 1 &&
                    (cat == Category::recitation ? recites
                     : cat == Category::reconstruction ? (!recites && templated)
                                                       : (!recites && !templated));
    c.expect(ok, "record " + std::to_string(i) + " misassigned");
    ++seen[static_cast<std::size_t>(cat)];
  }
  FeatureRecord five, six;
  five.duplicate_count = 5;
  six.duplicate_count = 6;
  c.expect(assign_category(six) == Category::recitation, "6 duplicates must recite");
  c.expect(assign_category(five) == Category::recollection, "5 duplicates without a template must recollect");
  five.template_verdict = {TemplateKind::repeating, 2};
  c.expect(assign_category(five) == Category::reconstruction, "5 duplicates with a template must reconstruct");
  c.detail << "100000 records: " << seen[0] << " recitation, " << seen[1] << " reconstruction, " << seen[2]
           << " recollection; boundary 5/6 checked";
}

// ---------------------------------------------------------------- 7
void taxonomic_beats_aggregate(Check& c) {
  const auto t0 = Clock::now();
  RecordSpec spec;
  spec.n = 30000;
  spec.seed = 7;
  spec.coefficients = simpson_coefficients();
  const auto records = generate_records(spec);
  const auto& names = model_feature_names();

  std::vector<std::uint64_t> ids(records.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto splits = split_datasets(ids, {}, {}, derive_seed(spec.seed, 6));
  const auto train = make_dataset(records, names, splits.train);
  const auto val = make_dataset(records, names, splits.validation);
  const auto test = make_dataset(records, names, splits.test);

  ModelSet ms;
  ms.features = names;
  ms.baseline = train_logreg(train.X, train.y, names);
  ms.taxonomic = train_taxonomic(train, {});
  PartitionSearchConfig pcfg;
  pcfg.candidates = {"duplicate_count", "huffman_bits", "semantic_match_count", "continuation_perplexity"};
  const auto search = partition_search(train, val, pcfg, {});
  ms.partitioned = search.model;

  EvalConfig ec;
  ec.bootstrap = 200;
  ec.seed = 8;
  const auto report = evaluate(ms, test, ec);
  const double base = report.find("baseline", "all").value.f1;
  const double tax = report.find("taxonomic", "all").value.f1;
  const double part = report.find("partitioned", "all").value.f1;
  const auto& ps = *search.model.partition;
  c.expect(tax - base >= 0.05, "taxonomic F1 " + std::to_string(tax) + " vs baseline " + std::to_string(base));
  c.expect(part >= base, "partitioned F1 " + std::to_string(part) + " below baseline " + std::to_string(base));
  c.expect(search.log.search_space == 24 * 24, "search space " + std::to_string(search.log.search_space));
  c.expect(search.log.evaluated + search.log.skipped == search.log.search_space, "search accounting");
  bool valid = true;
  for (const auto& s : ps.splits) valid = valid && std::find(names.begin(), names.end(), s.feature) != names.end();
  std::array<std::size_t, 3> cells{};
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::vector<double> x(names.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = test.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const auto cell = cell_of(ps, names, x);
    valid = valid && cell < 3;
    if (cell < 3) ++cells[cell];
  }
  c.expect(valid, "partition spec is not a valid three-cell partition");
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 300.0, "runtime " + std::to_string(elapsed) + " s");
  c.detail << "test F1 baseline " << base << ", taxonomic " << tax << " (+" << tax - base << "), partitioned "
           << part << " [" << ps.splits[0].feature << " " << to_string(ps.splits[0].direction) << " p"
           << ps.splits[0].percentile << ", " << ps.splits[1].feature << " " << to_string(ps.splits[1].direction)
           << " p" << ps.splits[1].percentile << "], " << elapsed << " s";
}

// ---------------------------------------------------------------- 8
void statistics(Check& c) {
  const double kl = kl_divergence(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5});
  c.expect(std::fabs(kl - std::log(2.0)) <= 1e-6, "KL([1,0],[.5,.5]) = " + std::to_string(kl));
  Rng rng(8);
  double worst_self = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(1 + rng() % 60);
    for (auto& x : v) x = std::exp(std::normal_distribution<double>(0, 1)(rng));
    const auto h = build_histogram(v, 1 + rng() % 50);
    worst_self = std::max(worst_self, kl_divergence(h, h));
  }
  c.expect(worst_self <= 1e-9, "KL(p,p) = " + std::to_string(worst_self));

  const auto mean = [](std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  int covered = 0;
  std::exponential_distribution<double> gen(0.5);  // mean 2
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(100);
    for (auto& x : v) x = gen(rng);
    const auto r = bootstrap(mean, v, 1000, derive_seed(8, static_cast<std::uint64_t>(t)));
    covered += r.ci_low <= 2.0 && 2.0 <= r.ci_high;
  }
  const double coverage = covered / 200.0;
  c.expect(std::fabs(coverage - 0.95) <= 0.04, "bootstrap coverage " + std::to_string(coverage));

  DependencyConfig dc;
  dc.permutations = 999;
  std::vector<double> pvals;
  for (int t = 0; t < 500; ++t) {
    std::vector<double> f(50);
    std::vector<int> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      f[i] = std::normal_distribution<double>(0, 1)(rng);
      y[i] = static_cast<int>(rng() % 2);
    }
    dc.seed = derive_seed(80, static_cast<std::uint64_t>(t));
    pvals.push_back(dependency_test(f, y, dc).p_value);
  }
  std::sort(pvals.begin(), pvals.end());
  double ks = 0;
  const double n = static_cast<double>(pvals.size());
  for (std::size_t i = 0; i < pvals.size(); ++i)
    ks = std::max({ks, static_cast<double>(i + 1) / n - pvals[i], pvals[i] - static_cast<double>(i) / n});
  const double critical = 1.358 / std::sqrt(n);
  c.expect(ks < critical, "KS statistic " + std::to_string(ks) + " >= " + std::to_string(critical));
  c.detail << "KL " << kl << ", max KL(p,p) " << worst_self << ", coverage " << covered << "/200, KS " << ks
           << " < " << critical;
}

// ---------------------------------------------------------------- 9
void cohort_format(Check& c) {
  std::vector<FeatureRecord> recs;
  const auto add = [&](std::uint64_t id, Category cat) {
    FeatureRecord r;
    r.sample_id = id;
    r.taxonomy = cat;
    recs.push_back(r);
  };
  for (std::uint64_t i = 0; i < 6; ++i) add(i, Category::recitation);
  for (std::uint64_t i = 6; i < 9; ++i) add(i, Category::recollection);
  add(9, Category::reconstruction);
  add(10, Category::recollection);
  const auto rows = cohort_report({{"hand", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}, {"none", {}}}, recs);
  c.expect(rows[0].percent[0] == 60.0 && rows[0].percent[2] == 30.0 && rows[0].percent[1] == 10.0,
           "hand cohort percentages");
  c.expect(!rows[1].percent[0] && !rows[1].percent[1] && !rows[1].percent[2], "empty cohort must be undefined");
  const auto csv = cohort_csv(rows);
  const std::string header =
      "cohort,recitation_count,recitation_percent,reconstruction_count,reconstruction_percent,"
      "recollection_count,recollection_percent,memorized\n";
  c.expect(csv.rfind(header, 0) == 0, "table header");
  c.expect(csv.find("\nhand,6,60.00,1,10.00,3,30.00,10\n") != std::string::npos, "hand row");
  c.expect(csv.find("\nnone,0,NA,0,NA,0,NA,0\n") != std::string::npos, "empty row");

  Rng rng(9);
  std::vector<FeatureRecord> many;
  for (std::uint64_t i = 0; i < 5000; ++i) {
    FeatureRecord r;
    r.sample_id = i;
    r.taxonomy = static_cast<Category>(rng() % 3);
    many.push_back(r);
  }
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    std::set<std::uint64_t> pick;
    const std::size_t k = 1 + rng() % 3000;
    while (pick.size() < k) pick.insert(rng() % 5000);
    const auto r = cohort_report({{"c", {pick.begin(), pick.end()}}}, many);
    double sum = 0;
    for (const auto& p : r[0].percent) sum += *p;
    worst = std::max(worst, std::fabs(sum - 100.0));
  }
  c.expect(worst <= 0.01, "percentages sum off by " + std::to_string(worst));
  c.detail << "hand cohort 60/10/30 (recitation/reconstruction/recollection), worst |sum-100| " << worst;
}

// ---------------------------------------------------------------- 10
int run_cli(const std::string& args) {
  const std::string cmd = std::string(MEMTAX_BIN) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = io::read_file(e.path());
  return out;
}

void end_to_end(Check& c) {
  const auto dir = oracle::temp_dir("acceptance_e2e");
  const std::string config = R"({
  "seed": 11,
  "paths": {"output": "out"},
  "synth": {"documents": 5000, "document_length": 512}
})";
  io::write_file(dir / "config.json", config);
  const std::vector<std::string> stages = {"synth", "index", "featurize", "taxonomy", "train", "evaluate", "stats"};
  std::array<double, 2> elapsed{};
  std::array<std::map<std::string, std::string>, 2> files;
  for (int run = 0; run < 2; ++run) {
    const auto out = dir / ("run" + std::to_string(run));
    const auto t0 = Clock::now();
    for (const auto& s : stages) {
      const int code = run_cli(s + " --config " + (dir / "config.json").string() + " --out " + out.string());
      c.expect(code == 0, "run " + std::to_string(run) + " stage " + s + " exited " + std::to_string(code));
    }
    elapsed[static_cast<std::size_t>(run)] = seconds_since(t0);
    c.expect(elapsed[static_cast<std::size_t>(run)] < 60.0,
             "run " + std::to_string(run) + " took " + std::to_string(elapsed[static_cast<std::size_t>(run)]) + " s");
    files[static_cast<std::size_t>(run)] = artifacts(out);
  }
  std::size_t bytes = 0;
  const auto corpus = files[0].find("corpus.bin");
  c.expect(corpus != files[0].end(), "corpus missing");
  if (corpus != files[0].end()) bytes = corpus->second.size();
  c.expect(bytes >= 9'000'000, "corpus is only " + std::to_string(bytes) + " bytes");
  c.expect(files[0].size() == files[1].size(), "artifact sets differ");
  std::size_t identical = 0;
  for (const auto& [name, content] : files[0]) {
    const auto other = files[1].find(name);
    const bool same = other != files[1].end() && other->second == content;
    c.expect(same, name + " differs between runs");
    identical += same;
  }
  c.detail << identical << "/" << files[0].size() << " artifacts byte-identical, corpus " << bytes / 1e6
           << " MB, runs " << elapsed[0] << " s and " << elapsed[1] << " s";
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> criteria = {
      {"duplicate-index exactness", duplicate_index_exactness},
      {"hash fidelity", hash_fidelity},
      {"template fixtures and properties", template_fixtures},
      {"huffman optimality", huffman_optimality},
      {"logistic regression correctness", logistic_correctness},
      {"taxonomy partition", taxonomy_partition},
      {"taxonomic beats aggregate", taxonomic_beats_aggregate},
      {"statistics", statistics},
      {"cohort report format", cohort_format},
      {"end-to-end determinism", end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    const auto t0 = Clock::now();
    try {
      criteria[i].run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const bool ok = c.failed == 0;
    failed += !ok;
    std::printf("%s %2zu. %s (%.1f s): %s\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].name, seconds_since(t0),
                c.detail.str().c_str());
    for (const auto& f : c.failures) std::printf("       - %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
