#include "memtax/stats.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "memtax/feature_vector.hpp"

namespace memtax {

std::vector<double> make_edges(double lo, double hi, std::size_t bins, BinScale scale) {
  if (bins == 0) throw ArgumentError("histogram needs at least one bin");
  if (scale == BinScale::log && lo <= 0.0) throw ArgumentError("log-scale edges need a positive lower bound");
  if (!(hi > lo)) {
    // Degenerate range: widen around the single value.
    if (scale == BinScale::log) lo /= 2.0, hi = lo * 4.0;
    else lo -= 0.5, hi = lo + 1.0;
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(bins);
    edges[i] = scale == BinScale::log ? std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)))
                                      : lo + f * (hi - lo);
  }
  edges.front() = lo;
  edges.back() = hi;
  return edges;
}

namespace {

void require_positive(std::span<const double> values) {
  std::vector<double> bad;
  for (double v : values)
    if (!(v > 0.0)) bad.push_back(v);
  if (bad.empty()) return;
  std::ostringstream msg;
  msg << bad.size() << " nonpositive value(s) under log scale:";
  for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 8); ++i) msg << ' ' << bad[i];
  if (bad.size() > 8) msg << " ...";
  throw ArgumentError(msg.str());
}

}  // namespace

std::size_t bin_of(std::span<const double> edges, double v) {
  const std::size_t bins = edges.size() - 1;
  if (v < edges.front()) return 0;
  if (v >= edges.back()) return bins - 1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  return std::min(static_cast<std::size_t>(it - edges.begin()) - 1, bins - 1);
}

Histogram build_histogram(std::span<const double> values, std::size_t bins, BinScale scale) {
  if (values.empty()) throw ArgumentError("histogram of an empty sample");
  if (scale == BinScale::log) require_positive(values);
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  return build_histogram(values, make_edges(*mn, *mx, bins, scale), scale);
}

Histogram build_histogram(std::span<const double> values, std::vector<double> edges,
                          BinScale scale) {
  if (values.empty()) throw ArgumentError("histogram of an empty sample");
  if (edges.size() < 2) throw ArgumentError("histogram needs at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw ArgumentError("histogram edges must be strictly increasing");
  if (scale == BinScale::log) require_positive(values);
  Histogram h;
  h.edges = std::move(edges);
  h.masses.assign(h.edges.size() - 1, 0.0);
  h.count = values.size();
  for (double v : values) {
    if (v < h.edges.front() || v > h.edges.back()) ++h.clamped;
    h.masses[bin_of(h.edges, v)] += 1.0;
  }
  for (auto& m : h.masses) m /= static_cast<double>(values.size());
  return h;
}

UnmemorizedEstimate estimate_unmemorized(const Histogram& rep, const Histogram& mem,
                                         std::uint64_t n_total, std::uint64_t n_mem) {
  if (n_mem >= n_total)
    throw ArgumentError("memorized count " + std::to_string(n_mem) + " must be below total " +
                        std::to_string(n_total));
  if (rep.edges != mem.edges) throw ArgumentError("histograms have different edges");
  const double rest = static_cast<double>(n_total - n_mem);
  UnmemorizedEstimate out;
  out.histogram.edges = rep.edges;
  out.histogram.masses.resize(rep.masses.size());
  out.histogram.count = n_total - n_mem;
  double positive = 0.0;
  for (std::size_t i = 0; i < rep.masses.size(); ++i) {
    const double raw = static_cast<double>(n_total) * rep.masses[i] -
                       static_cast<double>(n_mem) * mem.masses[i];
    if (raw < 0.0) out.clipped_mass += -raw / rest;
    out.histogram.masses[i] = std::max(0.0, raw);
    positive += out.histogram.masses[i];
  }
  if (positive <= 0.0) throw ArgumentError("estimated unmemorized distribution has no mass");
  for (auto& m : out.histogram.masses) m /= positive;
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q, double epsilon) {
  if (p.size() != q.size() || p.empty()) throw ArgumentError("KL divergence needs equal-length mass vectors");
  const double zp = std::accumulate(p.begin(), p.end(), 0.0) + epsilon * static_cast<double>(p.size());
  const double zq = std::accumulate(q.begin(), q.end(), 0.0) + epsilon * static_cast<double>(q.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] + epsilon) / zp;
    const double qi = (q[i] + epsilon) / zq;
    kl += pi * std::log(pi / qi);
  }
  return std::max(0.0, kl);
}

double kl_divergence(const Histogram& p, const Histogram& q, double epsilon) {
  if (p.edges != q.edges) throw ArgumentError("KL divergence of histograms with different edges");
  return kl_divergence(p.masses, q.masses, epsilon);
}

BootstrapResult summarize_replicates(std::vector<double> values) {
  BootstrapResult r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.stddev = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(values.begin(), values.end());
  r.ci_low = percentile_sorted(values, 0.025);
  r.ci_high = percentile_sorted(values, 0.975);
  return r;
}

BootstrapResult bootstrap(const std::function<double(std::span<const double>)>& statistic,
                          std::span<const double> data, std::size_t replicates, std::uint64_t seed,
                          Execution exec) {
  return bootstrap_indices(
      data.size(),
      [&](std::span<const std::size_t> idx) {
        std::vector<double> resample(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) resample[i] = data[idx[i]];
        return statistic(resample);
      },
      replicates, seed, exec);
}

std::vector<DuplicateBin> duplicate_bins(std::uint64_t max_count, std::size_t integer_bins) {
  std::vector<DuplicateBin> bins;
  for (std::uint64_t c = 1; c <= integer_bins && c <= max_count; ++c) bins.push_back({c, c});
  std::uint64_t lo = integer_bins + 1;
  std::uint64_t width = std::max<std::uint64_t>(integer_bins, 1);
  while (lo <= max_count) {
    bins.push_back({lo, lo + width - 1});
    lo += width;
    width *= 2;
  }
  return bins;
}

KLCurve kl_vs_duplicates(std::span<const FeatureRecord> records, const KLConfig& config,
                         Execution exec) {
  KLCurve curve;
  std::vector<const FeatureRecord*> usable;
  std::uint64_t max_dup = 0;
  for (const auto& r : records) {
    if (!r.memorized || !r.continuation_perplexity || r.duplicate_count == 0 ||
        !(*r.continuation_perplexity > 0.0)) {
      ++curve.unusable_records;
      continue;
    }
    usable.push_back(&r);
    max_dup = std::max(max_dup, r.duplicate_count);
  }
  if (usable.empty()) return curve;
  double lo = *usable.front()->continuation_perplexity, hi = lo;
  for (const auto* r : usable) {
    lo = std::min(lo, *r->continuation_perplexity);
    hi = std::max(hi, *r->continuation_perplexity);
  }
  curve.perplexity_edges = make_edges(lo, hi, config.perplexity_bins, BinScale::log);
  const std::size_t nbins = config.perplexity_bins;

  const auto bins = duplicate_bins(max_dup, config.integer_bins);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    std::vector<std::size_t> mem, unmem;  // perplexity bin of each sample
    for (const auto* r : usable) {
      if (r->duplicate_count < bins[b].lo || r->duplicate_count > bins[b].hi) continue;
      (*r->memorized ? mem : unmem).push_back(bin_of(curve.perplexity_edges, *r->continuation_perplexity));
    }
    if (mem.size() < config.min_per_class || unmem.size() < config.min_per_class) {
      curve.skipped.push_back(bins[b]);
      continue;
    }
    const auto masses = [nbins](std::span<const std::size_t> cells) {
      std::vector<double> m(nbins, 0.0);
      for (auto c : cells) m[c] += 1.0;
      for (auto& v : m) v /= static_cast<double>(cells.size());
      return m;
    };
    KLBin out;
    out.bin = bins[b];
    out.memorized = mem.size();
    out.unmemorized = unmem.size();
    out.kl_plugin = kl_divergence(masses(mem), masses(unmem), config.epsilon);

    std::vector<double> reps(config.bootstrap);
    const std::uint64_t bin_seed = derive_seed(config.seed, b);
    const auto run = [&](std::size_t r) {
      Rng rng = make_rng(bin_seed, r);
      std::uniform_int_distribution<std::size_t> pm(0, mem.size() - 1), pu(0, unmem.size() - 1);
      std::vector<std::size_t> rm(mem.size()), ru(unmem.size());
      for (auto& v : rm) v = mem[pm(rng)];
      for (auto& v : ru) v = unmem[pu(rng)];
      reps[r] = kl_divergence(masses(rm), masses(ru), config.epsilon);
    };
    const auto count = static_cast<std::ptrdiff_t>(reps.size());
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t r = 0; r < count; ++r) run(static_cast<std::size_t>(r));
    } else {
      for (std::ptrdiff_t r = 0; r < count; ++r) run(static_cast<std::size_t>(r));
    }
    if (!reps.empty()) {
      const auto s = summarize_replicates(std::move(reps));
      out.kl = s.mean;
      out.stddev = s.stddev;
      // Reported bounds always bracket the reported value.
      out.ci_low = std::min(s.ci_low, s.mean);
      out.ci_high = std::max(s.ci_high, s.mean);
    } else {
      out.kl = out.ci_low = out.ci_high = out.kl_plugin;
    }
    curve.bins.push_back(out);
  }
  return curve;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw ArgumentError("spearman needs equal nonempty inputs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

DependencyResult dependency_test(std::span<const double> feature, std::span<const int> label,
                                 const DependencyConfig& config) {
  if (feature.size() != label.size()) throw ArgumentError("feature and label lengths differ");
  DependencyResult res;
  res.n = feature.size();
  const auto positives = static_cast<std::size_t>(std::count_if(label.begin(), label.end(), [](int v) { return v != 0; }));
  if (res.n < config.min_samples) {
    res.degenerate = true;
    res.note = "fewer than " + std::to_string(config.min_samples) + " samples";
    return res;
  }
  if (positives == 0 || positives == res.n) {
    res.degenerate = true;
    res.note = "single-class label";
    return res;
  }
  const auto rx = average_ranks(feature);
  if (std::all_of(rx.begin(), rx.end(), [&](double r) { return r == rx.front(); })) {
    res.degenerate = true;
    res.note = "constant feature";
    return res;
  }
  std::vector<double> ly(label.size());
  for (std::size_t i = 0; i < label.size(); ++i) ly[i] = label[i] != 0 ? 1.0 : 0.0;
  res.rho = pearson(rx, average_ranks(ly));

  // rho is proportional to the sum of centered feature ranks over positives,
  // so permutations only need that sum.
  const double mean_rank = (static_cast<double>(res.n) + 1.0) / 2.0;
  std::vector<double> centered(rx.size());
  for (std::size_t i = 0; i < rx.size(); ++i) centered[i] = rx[i] - mean_rank;
  double observed = 0.0;
  for (std::size_t i = 0; i < label.size(); ++i)
    if (label[i] != 0) observed += centered[i];
  const double target = std::fabs(observed) - 1e-9 * (1.0 + std::fabs(observed));

  Rng rng(derive_seed(config.seed, 0));
  std::vector<std::size_t> idx(res.n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::size_t extreme = 0;
  for (std::size_t p = 0; p < config.permutations; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < positives; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, res.n - 1);
      std::swap(idx[k], idx[pick(rng)]);
      s += centered[idx[k]];
    }
    if (std::fabs(s) >= target) ++extreme;
  }
  res.p_value = static_cast<double>(extreme + 1) / static_cast<double>(config.permutations + 1);
  return res;
}

DependencyResult dependency_test(std::span<const FeatureRecord> records,
                                 std::optional<Category> category, const std::string& feature,
                                 const DependencyConfig& config) {
  const std::size_t column = model_feature_index(feature);
  std::vector<double> x;
  std::vector<int> y;
  for (const auto& r : records) {
    if (!r.memorized) continue;
    if (category && r.taxonomy != category) continue;
    x.push_back(model_features(r)[column]);
    y.push_back(*r.memorized ? 1 : 0);
  }
  return dependency_test(x, y, config);
}

std::vector<DependencyEntry> dependency_report(std::span<const FeatureRecord> records,
                                               const std::vector<std::string>& features,
                                               const DependencyConfig& config, Execution exec) {
  std::set<std::string> modalities;
  for (const auto& r : records)
    if (r.modality) modalities.insert(*r.modality);
  std::vector<std::optional<std::string>> groups = {std::nullopt};
  for (const auto& m : modalities) groups.emplace_back(m);
  std::vector<std::optional<Category>> cats = {std::nullopt};
  for (auto c : kCategories) cats.emplace_back(c);
  for (const auto& f : features) model_feature_index(f);

  std::vector<DependencyEntry> out;
  std::vector<std::pair<std::size_t, std::size_t>> cells;  // (group, category)
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t c = 0; c < cats.size(); ++c)
      for (const auto& f : features) {
        out.push_back({groups[g] ? *groups[g] : "all", cats[c] ? to_string(*cats[c]) : "all", f, {}});
        cells.emplace_back(g, c);
      }

  // Subsets are materialized once per (group, category) pair.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<FeatureRecord>> subsets;
  for (const auto& key : cells) {
    if (subsets.count(key)) continue;
    auto& sub = subsets[key];
    for (const auto& r : records)
      if (!groups[key.first] || r.modality == groups[key.first]) sub.push_back(r);
  }
  const auto n = static_cast<std::ptrdiff_t>(out.size());
  const auto run = [&](std::ptrdiff_t i) {
    DependencyConfig cfg = config;
    cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
    out[i].result = dependency_test(subsets.at(cells[i]), cats[cells[i].second], out[i].feature, cfg);
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) run(i);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) run(i);
  }
  return out;
}

nlohmann::ordered_json to_json(const Histogram& h) {
  return {{"edges", h.edges}, {"masses", h.masses}, {"count", h.count}, {"clamped", h.clamped}};
}

nlohmann::ordered_json to_json(const KLCurve& curve) {
  nlohmann::ordered_json bins = nlohmann::ordered_json::array();
  for (const auto& b : curve.bins)
    bins.push_back({{"duplicates_lo", b.bin.lo}, {"duplicates_hi", b.bin.hi},
                    {"memorized", b.memorized}, {"unmemorized", b.unmemorized},
                    {"kl", b.kl}, {"kl_plugin", b.kl_plugin}, {"stddev", b.stddev},
                    {"ci_low", b.ci_low}, {"ci_high", b.ci_high}});
  nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
  for (const auto& s : curve.skipped) skipped.push_back({s.lo, s.hi});
  return {{"perplexity_edges", curve.perplexity_edges}, {"bins", bins},
          {"skipped_bins", skipped}, {"unusable_records", curve.unusable_records}};
}

nlohmann::ordered_json to_json(const std::vector<DependencyEntry>& report) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : report) {
    nlohmann::ordered_json j = {{"group", e.group}, {"category", e.category}, {"feature", e.feature},
                                {"n", e.result.n}, {"degenerate", e.result.degenerate}};
    if (e.result.degenerate) {
      j["rho"] = nullptr;
      j["p_value"] = nullptr;
      j["note"] = e.result.note;
    } else {
      j["rho"] = e.result.rho;
      j["p_value"] = e.result.p_value;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace memtax
