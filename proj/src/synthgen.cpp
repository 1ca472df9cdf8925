#include "memtax/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "memtax/feature_vector.hpp"
#include "memtax/predictor.hpp"
#include "memtax/rng.hpp"
#include "memtax/taxonomy.hpp"

namespace memtax {

std::string to_string(PlantKind k) {
  switch (k) {
    case PlantKind::random: return "random";
    case PlantKind::repeating: return "repeating";
    case PlantKind::incrementing: return "incrementing";
  }
  return "random";
}

PlantKind parse_plant_kind(std::string_view s) {
  if (s == "random") return PlantKind::random;
  if (s == "repeating") return PlantKind::repeating;
  if (s == "incrementing") return PlantKind::incrementing;
  throw ConfigError("unknown plant kind '" + std::string(s) + "'");
}

namespace {

constexpr TokenId kComma = 1000, kColon = 1001, kSemicolon = 1002, kEquals = 1003;
constexpr std::array<TokenId, 4> kLabels = {1004, 1005, 1006, 1007};
constexpr std::array<TokenId, 4> kSeparators = {kComma, kColon, kSemicolon, kEquals};

std::string word_text(std::uint32_t k) {
  static const std::string consonants = "bcdfghjklmnprstvz";
  static const std::string vowels = "aeiou";
  const std::uint32_t base = static_cast<std::uint32_t>(consonants.size() * vowels.size());
  std::vector<std::uint32_t> digits;
  do {
    digits.push_back(k % base);
    k /= base;
  } while (k > 0);
  while (digits.size() < 2) digits.push_back(0);
  std::string s = " ";
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    s += consonants[*it / vowels.size()];
    s += vowels[*it % vowels.size()];
  }
  return s;
}

// Smallest p with s[i] == s[i % p] for all i.
std::size_t minimal_period(std::span<const TokenId> s) {
  for (std::size_t p = 1; p < s.size(); ++p) {
    bool ok = true;
    for (std::size_t i = p; i < s.size() && ok; ++i) ok = s[i] == s[i - p];
    if (ok) return p;
  }
  return s.size();
}

std::vector<TokenId> min_rotation(std::vector<TokenId> v) {
  std::vector<TokenId> best = v;
  for (std::size_t r = 1; r < v.size(); ++r) {
    std::rotate(v.begin(), v.begin() + 1, v.end());
    best = std::min(best, v);
  }
  return best;
}

class Background {
 public:
  explicit Background(const SynthSpec& spec) : cdf_(spec.vocabulary_size - kFirstWordToken) {
    double total = 0.0;
    for (std::size_t r = 0; r < cdf_.size(); ++r) {
      total += spec.uniform_background ? 1.0 : 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_exponent);
      cdf_[r] = total;
    }
    for (auto& c : cdf_) c /= total;
  }
  // Inverse-CDF draw: word rank r has weight (r+1)^-s.
  TokenId draw(Rng& rng) const {
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), uniform01(rng));
    const auto r = std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    return kFirstWordToken + static_cast<TokenId>(r);
  }
  TokenId uniform_word(Rng& rng) const {
    return kFirstWordToken + static_cast<TokenId>(std::uniform_int_distribution<std::size_t>(0, cdf_.size() - 1)(rng));
  }

 private:
  std::vector<double> cdf_;
};

struct PlantBuilder {
  const Background& bg;
  Rng& rng;
  std::set<std::vector<TokenId>> used_sequences;
  std::set<std::vector<TokenId>> used_cycles;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> used_terms;  // (variant, step, term)

  std::vector<TokenId> random_plant() {
    for (;;) {
      std::vector<TokenId> s(kSampleLength);
      for (auto& t : s) t = bg.uniform_word(rng);
      if (used_sequences.insert(s).second) return s;
    }
  }

  std::vector<TokenId> repeating_plant(std::size_t& period) {
    for (;;) {
      const std::size_t p = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
      std::vector<TokenId> cycle(p);
      for (auto& t : cycle) t = bg.uniform_word(rng);
      if (minimal_period(cycle) != p) continue;
      if (!used_cycles.insert(min_rotation(cycle)).second) continue;
      period = p;
      std::vector<TokenId> s(kSampleLength);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = cycle[i % p];
      return s;
    }
  }

  bool claim_terms(std::size_t variant, std::size_t step, std::size_t first, std::size_t terms) {
    for (std::size_t k = 0; k < terms; ++k)
      if (used_terms.count({variant, step, first + k * step})) return false;
    for (std::size_t k = 0; k < terms; ++k) used_terms.insert({variant, step, first + k * step});
    return true;
  }

  std::vector<TokenId> incrementing_plant() {
    for (;;) {
      if (uniform01(rng) < 0.5) {
        // Plain progression " a a+d a+2d ...".
        const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 15)(rng);
        const std::size_t a = std::uniform_int_distribution<std::size_t>(0, 999 - 63 * d)(rng);
        if (!claim_terms(0, d, a, kSampleLength)) continue;
        std::vector<TokenId> s(kSampleLength);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<TokenId>(a + i * d);
        return s;
      }
      // Label / number / separator triplets: " item 5: item 6: ...".
      const std::size_t label = std::uniform_int_distribution<std::size_t>(0, kLabels.size() - 1)(rng);
      const std::size_t sep = std::uniform_int_distribution<std::size_t>(0, kSeparators.size() - 1)(rng);
      constexpr std::size_t terms = (kSampleLength + 2) / 3;
      const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
      const std::size_t a = std::uniform_int_distribution<std::size_t>(0, 999 - (terms - 1) * d)(rng);
      if (!claim_terms(1 + label * kSeparators.size() + sep, d, a, terms)) continue;
      std::vector<TokenId> s;
      for (std::size_t k = 0; s.size() < kSampleLength; ++k) {
        s.push_back(kLabels[label]);
        if (s.size() < kSampleLength) s.push_back(static_cast<TokenId>(a + k * d));
        if (s.size() < kSampleLength) s.push_back(kSeparators[sep]);
      }
      return s;
    }
  }
};

}  // namespace

Vocabulary synth_vocabulary(std::uint32_t vocabulary_size) {
  std::unordered_map<TokenId, std::string> entries;
  for (TokenId i = 0; i < kNumberTokens; ++i) entries.emplace(i, " " + std::to_string(i));
  entries.emplace(kComma, ",");
  entries.emplace(kColon, ":");
  entries.emplace(kSemicolon, ";");
  entries.emplace(kEquals, " =");
  entries.emplace(kLabels[0], " item");
  entries.emplace(kLabels[1], " id");
  entries.emplace(kLabels[2], " step");
  entries.emplace(kLabels[3], " row");
  for (TokenId id = kFirstWordToken; id < vocabulary_size; ++id) entries.emplace(id, word_text(id - kFirstWordToken));
  return Vocabulary(std::move(entries));
}

SynthCorpus generate_corpus(const SynthSpec& spec) {
  if (spec.vocabulary_size < kMinSynthVocabulary)
    throw ArgumentError("synthetic vocabulary needs at least " + std::to_string(kMinSynthVocabulary) +
                        " tokens, got " + std::to_string(spec.vocabulary_size));
  if (spec.document_length < kSampleLength)
    throw ArgumentError("documents must hold at least one " + std::to_string(kSampleLength) + "-token sample");
  if (!(spec.zipf_exponent > 0.0)) throw ArgumentError("zipf exponent must be positive");
  std::size_t plant_count = 0, extra_copies = 0;
  for (const auto& g : spec.plants) {
    if (g.duplicates == 0) throw ArgumentError("plant groups need at least one copy");
    plant_count += g.count;
    extra_copies += g.count * (g.duplicates - 1);
  }
  // Every document reserves its sample window plus one gap token; a further
  // copy costs 64 tokens and a gap.
  const std::size_t slot = kSampleLength + 1;
  const std::size_t per_doc = spec.document_length > slot ? (spec.document_length - slot + 1) / slot : 0;
  const std::size_t required = plant_count * slot + extra_copies * slot;
  const std::size_t available = spec.documents * slot + spec.documents * per_doc * slot;
  if (plant_count > spec.documents || extra_copies > spec.documents * per_doc)
    throw ArgumentError("plant budget exceeded: required " + std::to_string(required) +
                        " tokens, available " + std::to_string(available));

  SynthCorpus out;
  out.vocabulary = synth_vocabulary(spec.vocabulary_size);
  out.manifest.seed = spec.seed;
  Corpus& corpus = out.corpus;
  corpus.vocabulary_size = spec.vocabulary_size;
  corpus.documents.resize(spec.documents);
  const Background bg(spec);

  const auto ndocs = static_cast<std::ptrdiff_t>(spec.documents);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t d = 0; d < ndocs; ++d) {
    Rng rng = make_rng(derive_seed(spec.seed, 1), static_cast<std::uint64_t>(d));
    auto& doc = corpus.documents[d];
    doc.id = static_cast<std::uint64_t>(d);
    doc.tokens.resize(spec.document_length);
    for (auto& t : doc.tokens) t = bg.draw(rng);
    if (!spec.modalities.empty())
      doc.modality = spec.modalities[std::uniform_int_distribution<std::size_t>(0, spec.modalities.size() - 1)(rng)];
  }

  Rng rng = make_rng(spec.seed, 2);
  PlantBuilder builder{bg, rng, {}, {}, {}};
  std::vector<std::size_t> anchors(spec.documents);
  for (std::size_t i = 0; i < anchors.size(); ++i) anchors[i] = i;
  for (std::size_t i = anchors.size(); i > 1; --i)
    std::swap(anchors[i - 1], anchors[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);

  std::vector<std::vector<char>> occupied(spec.documents, std::vector<char>(spec.document_length, 0));
  for (auto& o : occupied) std::fill(o.begin(), o.begin() + kSampleLength, 1);
  const auto fits = [&](std::size_t d, std::size_t o) {
    if (o < slot || o + kSampleLength > spec.document_length) return false;
    const std::size_t end = std::min(o + kSampleLength + 1, spec.document_length);
    for (std::size_t i = o - 1; i < end; ++i)
      if (occupied[d][i]) return false;
    return true;
  };

  for (const auto& group : spec.plants) {
    for (std::size_t c = 0; c < group.count; ++c) {
      PlantRecord plant;
      plant.id = out.manifest.plants.size();
      plant.kind = group.kind;
      plant.copies = group.duplicates;
      switch (group.kind) {
        case PlantKind::random:
          plant.tokens = builder.random_plant();
          plant.expected_duplicate_count = group.duplicates;
          break;
        case PlantKind::repeating:
          plant.tokens = builder.repeating_plant(plant.period);
          plant.expected_template = TemplateKind::repeating;
          // The continuation recurs inside each copy at every shift by the period.
          plant.expected_duplicate_count = group.duplicates * (kContinuationLength / plant.period + 1);
          break;
        case PlantKind::incrementing:
          plant.tokens = builder.incrementing_plant();
          plant.expected_template = TemplateKind::incrementing;
          plant.expected_duplicate_count = group.duplicates;
          break;
      }
      const std::size_t anchor = anchors[plant.id];
      plant.sample_id = corpus.documents[anchor].id;
      plant.positions.emplace_back(plant.sample_id, 0);
      for (std::size_t k = 1; k < group.duplicates; ++k) {
        std::optional<std::pair<std::size_t, std::size_t>> spot;
        for (int attempt = 0; attempt < 200 && !spot; ++attempt) {
          const std::size_t d = std::uniform_int_distribution<std::size_t>(0, spec.documents - 1)(rng);
          if (spec.document_length < slot + kSampleLength) break;
          const std::size_t o = std::uniform_int_distribution<std::size_t>(slot, spec.document_length - kSampleLength)(rng);
          if (fits(d, o)) spot = {d, o};
        }
        for (std::size_t d = 0; d < spec.documents && !spot; ++d)
          for (std::size_t o = slot; o + kSampleLength <= spec.document_length && !spot; ++o)
            if (fits(d, o)) spot = {d, o};
        if (!spot)
          throw ArgumentError("plant budget exceeded: required " + std::to_string(required) +
                              " tokens, available " + std::to_string(available));
        for (std::size_t i = 0; i < kSampleLength; ++i) occupied[spot->first][spot->second + i] = 1;
        plant.positions.emplace_back(corpus.documents[spot->first].id, static_cast<std::uint32_t>(spot->second));
      }
      for (const auto& [doc, off] : plant.positions)
        std::copy(plant.tokens.begin(), plant.tokens.end(), corpus.documents[doc].tokens.begin() + off);
      out.manifest.plants.push_back(std::move(plant));
    }
  }

  // Background next to a periodic copy must not continue the period, or the
  // copy's windows would recur across its edges.
  std::map<std::pair<std::size_t, std::size_t>, std::set<TokenId>> forbidden;
  for (const auto& plant : out.manifest.plants) {
    if (plant.kind != PlantKind::repeating) continue;
    const TokenId before = plant.tokens[plant.period - 1];
    const TokenId after = plant.tokens[kSampleLength % plant.period];
    for (const auto& [doc, off] : plant.positions) {
      if (off > 0) forbidden[{doc, off - 1}].insert(before);
      if (off + kSampleLength < spec.document_length) forbidden[{doc, off + kSampleLength}].insert(after);
    }
  }
  for (const auto& [pos, bad] : forbidden) {
    Rng local = make_rng(derive_seed(spec.seed, 3), pos.first * spec.document_length + pos.second);
    auto& t = corpus.documents[pos.first].tokens[pos.second];
    while (bad.count(t)) t = bg.draw(local);
  }
  recount_tokens(corpus);
  return out;
}

nlohmann::ordered_json to_json(const SynthSpec& spec) {
  nlohmann::ordered_json plants = nlohmann::ordered_json::array();
  for (const auto& g : spec.plants)
    plants.push_back({{"kind", to_string(g.kind)}, {"duplicates", g.duplicates}, {"count", g.count}});
  nlohmann::ordered_json coeffs;
  for (auto c : kCategories) {
    const auto& cc = spec.coefficients[static_cast<std::size_t>(c)];
    nlohmann::ordered_json w = nlohmann::ordered_json::object();
    for (const auto& [k, v] : cc.weights) w[k] = v;
    coeffs[to_string(c)] = {{"bias", cc.bias}, {"weights", w}};
  }
  return {{"seed", spec.seed},
          {"vocabulary_size", spec.vocabulary_size},
          {"documents", spec.documents},
          {"document_length", spec.document_length},
          {"zipf_exponent", spec.zipf_exponent},
          {"uniform_background", spec.uniform_background},
          {"modalities", spec.modalities},
          {"plants", plants},
          {"coefficients", coeffs}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("vocabulary_size")) s.vocabulary_size = j.at("vocabulary_size").get<std::uint32_t>();
    if (j.contains("documents")) s.documents = j.at("documents").get<std::size_t>();
    if (j.contains("document_length")) s.document_length = j.at("document_length").get<std::size_t>();
    if (j.contains("zipf_exponent")) s.zipf_exponent = j.at("zipf_exponent").get<double>();
    if (j.contains("uniform_background")) s.uniform_background = j.at("uniform_background").get<bool>();
    if (j.contains("modalities")) s.modalities = j.at("modalities").get<std::vector<std::string>>();
    if (j.contains("plants"))
      for (const auto& p : j.at("plants"))
        s.plants.push_back({parse_plant_kind(p.at("kind").get<std::string>()),
                            p.at("duplicates").get<std::size_t>(), p.at("count").get<std::size_t>()});
    if (j.contains("coefficients"))
      for (const auto& [name, cj] : j.at("coefficients").items()) {
        auto& cc = s.coefficients[static_cast<std::size_t>(parse_category(name))];
        if (cj.contains("bias")) cc.bias = cj.at("bias").get<double>();
        if (cj.contains("weights"))
          for (const auto& [f, w] : cj.at("weights").items()) {
            model_feature_index(f);
            cc.weights[f] = w.get<double>();
          }
      }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed synth section: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("synth section: ") + e.what());
  }
  return s;
}

nlohmann::ordered_json to_json(const SynthManifest& m, const SynthSpec& spec) {
  nlohmann::ordered_json plants = nlohmann::ordered_json::array();
  for (const auto& p : m.plants) {
    nlohmann::ordered_json pos = nlohmann::ordered_json::array();
    for (const auto& [doc, off] : p.positions) pos.push_back({doc, off});
    nlohmann::ordered_json pj = {{"id", p.id}, {"kind", to_string(p.kind)}};
    pj["period"] = p.kind == PlantKind::repeating ? nlohmann::ordered_json(p.period) : nlohmann::ordered_json(nullptr);
    pj["copies"] = p.copies;
    pj["sample_id"] = p.sample_id;
    pj["expected_duplicate_count"] = p.expected_duplicate_count;
    pj["expected_template"] = to_string(p.expected_template);
    pj["positions"] = pos;
    plants.push_back(std::move(pj));
  }
  return {{"seed", m.seed}, {"spec", to_json(spec)}, {"plants", plants}};
}

std::vector<bool> simulate_memorization(std::span<const FeatureRecord> records,
                                        const std::array<CategoryCoefficients, 3>& coefficients,
                                        std::uint64_t seed) {
  std::vector<bool> labels(records.size(), false);
  if (records.empty()) return labels;
  const auto& names = model_feature_names();
  Matrix X(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto x = model_features(records[i]);
    for (std::size_t j = 0; j < x.size(); ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[j];
  }
  const Matrix Z = apply_normalizer(fit_normalizer(X), X);
  std::array<std::vector<std::pair<std::size_t, double>>, 3> rules;
  for (std::size_t c = 0; c < 3; ++c)
    for (const auto& [f, w] : coefficients[c].weights) rules[c].emplace_back(model_feature_index(f), w);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Category cat = records[i].taxonomy ? *records[i].taxonomy : assign_category(records[i]);
    const auto c = static_cast<std::size_t>(cat);
    double z = coefficients[c].bias;
    for (const auto& [j, w] : rules[c]) z += w * Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const double p = 1.0 / (1.0 + std::exp(-z));
    Rng rng = make_rng(seed, records[i].sample_id);
    labels[i] = uniform01(rng) < p;
  }
  return labels;
}

std::vector<FeatureRecord> generate_records(const RecordSpec& spec) {
  std::vector<FeatureRecord> records(spec.n);
  const std::discrete_distribution<int> pick_cat(spec.category_mix.begin(), spec.category_mix.end());
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng rng = make_rng(spec.seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto cat_dist = pick_cat;
    const auto cat = static_cast<Category>(cat_dist(rng));
    FeatureRecord r;
    r.sample_id = i;
    std::geometric_distribution<int> small(0.6);
    switch (cat) {
      case Category::recitation:
        r.duplicate_count = 6 + static_cast<std::uint64_t>(std::exponential_distribution<double>(1.0 / 20.0)(rng));
        if (uniform01(rng) < 0.1) r.template_verdict = {TemplateKind::repeating, 1};
        r.huffman_bits = static_cast<std::uint64_t>(std::max(64.0, 380.0 + 40.0 * normal(rng)));
        break;
      case Category::reconstruction:
        r.duplicate_count = 1 + static_cast<std::uint64_t>(std::min(4, small(rng)));
        r.template_verdict = uniform01(rng) < 0.5
                                 ? TemplateVerdict{TemplateKind::repeating, std::size_t{1} + static_cast<std::size_t>(rng() % 8)}
                                 : TemplateVerdict{TemplateKind::incrementing, std::size_t{1} + static_cast<std::size_t>(rng() % 3)};
        r.huffman_bits = static_cast<std::uint64_t>(std::max(64.0, 150.0 + 40.0 * normal(rng)));
        break;
      case Category::recollection:
        r.duplicate_count = 1 + static_cast<std::uint64_t>(std::min(4, small(rng)));
        r.huffman_bits = static_cast<std::uint64_t>(std::max(64.0, 300.0 + 40.0 * normal(rng)));
        break;
    }
    r.prompt_duplicate_count = r.duplicate_count + static_cast<std::uint64_t>(small(rng));
    const double centre = 8.0 + normal(rng);
    const double spread = 0.5 + std::fabs(normal(rng));
    r.frequency_stats.median = std::exp(centre);
    r.frequency_stats.q25 = std::exp(centre - 0.5 * spread);
    r.frequency_stats.min = std::exp(centre - 2.0 * spread);
    r.frequency_stats.q75 = std::exp(centre + 0.5 * spread);
    r.frequency_stats.max = std::exp(centre + 2.0 * spread);
    r.frequency_stats.mean = std::exp(centre + 0.3 * spread);
    r.semantic_match_count = static_cast<std::uint64_t>(std::geometric_distribution<int>(0.3)(rng));
    r.textual_match_count = r.semantic_match_count ? rng() % (r.semantic_match_count + 1) : 0;
    r.prompt_perplexity = std::exp(3.0 + 0.6 * normal(rng));
    r.continuation_perplexity = std::exp(3.0 + 0.6 * normal(rng));
    r.full_perplexity = std::sqrt(*r.prompt_perplexity * *r.continuation_perplexity);
    r.taxonomy = assign_category(r);
    records[i] = std::move(r);
  }
  const auto labels = simulate_memorization(records, spec.coefficients, derive_seed(spec.seed, 0x1abe1));
  for (std::size_t i = 0; i < records.size(); ++i) records[i].memorized = labels[i];
  return records;
}

std::array<CategoryCoefficients, 3> simpson_coefficients() {
  std::array<CategoryCoefficients, 3> c;
  c[static_cast<std::size_t>(Category::recitation)] = {{{"huffman_bits", -8.0}, {"duplicate_count", 1.0}}, 0.0};
  c[static_cast<std::size_t>(Category::reconstruction)] = {{{"huffman_bits", 8.0}}, 0.0};
  c[static_cast<std::size_t>(Category::recollection)] = {{{"huffman_bits", 8.0}, {"continuation_perplexity", -1.0}}, -1.0};
  return c;
}

}  // namespace memtax
