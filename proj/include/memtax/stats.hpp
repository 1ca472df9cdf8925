#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memtax/category.hpp"
#include "memtax/common.hpp"
#include "memtax/features.hpp"
#include "memtax/rng.hpp"

namespace memtax {

enum class BinScale { linear, log };

struct Histogram {
  std::vector<double> edges;   // B+1, strictly increasing
  std::vector<double> masses;  // B, sum to 1
  std::size_t count = 0;       // underlying sample size
  std::size_t clamped = 0;     // values outside [edges.front(), edges.back()]
};

// `bins` equal-width (or log-spaced) bins over [min, max] of the values.
std::vector<double> make_edges(double lo, double hi, std::size_t bins, BinScale scale);

Histogram build_histogram(std::span<const double> values, std::size_t bins,
                          BinScale scale = BinScale::linear);
// Out-of-range values are clamped into the end bins and counted.
Histogram build_histogram(std::span<const double> values, std::vector<double> edges,
                          BinScale scale = BinScale::linear);

// Bin of `v` under `edges`, clamping to the end bins.
std::size_t bin_of(std::span<const double> edges, double v);

struct UnmemorizedEstimate {
  Histogram histogram;
  double clipped_mass = 0.0;  // negative mass floored to zero, as a fraction of N_total-N_mem
};

// Removes the memorized distribution from the representative one:
// max(0, N_total*rep - N_mem*mem) / (N_total - N_mem), renormalized.
UnmemorizedEstimate estimate_unmemorized(const Histogram& rep, const Histogram& mem,
                                         std::uint64_t n_total, std::uint64_t n_mem);

inline constexpr double kDefaultKlEpsilon = 1e-10;

// KL(p || q) in nats over epsilon-smoothed, renormalized masses.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double epsilon = kDefaultKlEpsilon);
double kl_divergence(const Histogram& p, const Histogram& q, double epsilon = kDefaultKlEpsilon);

struct BootstrapResult {
  double mean = 0.0;
  double stddev = 0.0;
  double ci_low = 0.0;   // 2.5th percentile
  double ci_high = 0.0;  // 97.5th percentile
};

BootstrapResult summarize_replicates(std::vector<double> replicates);

// Replicate r draws n indices with replacement from a stream derived from
// (seed, r), so the result does not depend on the thread count.
template <class Statistic>
BootstrapResult bootstrap_indices(std::size_t n, Statistic&& statistic, std::size_t replicates,
                                  std::uint64_t seed, Execution exec = Execution::parallel) {
  if (n == 0) throw ArgumentError("bootstrap of an empty sample");
  if (replicates == 0) throw ArgumentError("bootstrap needs at least one replicate");
  std::vector<double> values(replicates);
  const auto run = [&](std::size_t r) {
    Rng rng = make_rng(seed, r);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    values[r] = statistic(std::span<const std::size_t>(idx));
  };
  const auto count = static_cast<std::ptrdiff_t>(replicates);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < count; ++r) run(static_cast<std::size_t>(r));
  } else {
    for (std::ptrdiff_t r = 0; r < count; ++r) run(static_cast<std::size_t>(r));
  }
  return summarize_replicates(std::move(values));
}

BootstrapResult bootstrap(const std::function<double(std::span<const double>)>& statistic,
                          std::span<const double> data, std::size_t replicates = 1000,
                          std::uint64_t seed = 0, Execution exec = Execution::parallel);

struct DuplicateBin {
  std::uint64_t lo = 0;  // inclusive
  std::uint64_t hi = 0;  // inclusive
};

// Integer bins 1..integer_bins, then doubling bins up to max_count.
std::vector<DuplicateBin> duplicate_bins(std::uint64_t max_count, std::size_t integer_bins = 10);

struct KLConfig {
  std::size_t perplexity_bins = 50;
  double epsilon = kDefaultKlEpsilon;
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 0;
  std::size_t min_per_class = 5;
  std::size_t integer_bins = 10;
};

struct KLBin {
  DuplicateBin bin;
  std::size_t memorized = 0;
  std::size_t unmemorized = 0;
  double kl_plugin = 0.0;  // point estimate on the full bin
  double kl = 0.0;         // bootstrap mean
  double stddev = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct KLCurve {
  std::vector<double> perplexity_edges;  // shared log-spaced edges
  std::vector<KLBin> bins;
  std::vector<DuplicateBin> skipped;  // too few memorized or unmemorized samples
  std::size_t unusable_records = 0;   // unlabeled, no perplexity, or zero duplicates
};

// KL(memorized || unmemorized) of continuation perplexity per duplicate bin.
KLCurve kl_vs_duplicates(std::span<const FeatureRecord> records, const KLConfig& config,
                         Execution exec = Execution::parallel);

struct DependencyConfig {
  std::size_t permutations = 10000;
  std::uint64_t seed = 0;
  std::size_t min_samples = 10;
};

struct DependencyResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool degenerate = false;
  std::string note;
};

// Average ranks (1-based), ties share their mean rank.
std::vector<double> average_ranks(std::span<const double> values);

double spearman(std::span<const double> x, std::span<const double> y);

// Spearman correlation between a feature and the binary label, two-sided
// permutation p-value (count+1)/(permutations+1).
DependencyResult dependency_test(std::span<const double> feature, std::span<const int> label,
                                 const DependencyConfig& config = {});

// Restricts to labelled records of one category (nullopt = all categories).
DependencyResult dependency_test(std::span<const FeatureRecord> records,
                                 std::optional<Category> category, const std::string& feature,
                                 const DependencyConfig& config = {});

struct DependencyEntry {
  std::string group;     // "all" or a modality label
  std::string category;  // "all" or a taxonomy category
  std::string feature;
  DependencyResult result;
};

// Every (modality group, category, feature) cell; tests run in parallel with
// per-cell derived seeds.
std::vector<DependencyEntry> dependency_report(std::span<const FeatureRecord> records,
                                               const std::vector<std::string>& features,
                                               const DependencyConfig& config,
                                               Execution exec = Execution::parallel);

nlohmann::ordered_json to_json(const Histogram& h);
nlohmann::ordered_json to_json(const KLCurve& curve);
nlohmann::ordered_json to_json(const std::vector<DependencyEntry>& report);

}  // namespace memtax
