#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "memtax/dupindex.hpp"
#include "memtax/feature_vector.hpp"
#include "memtax/stats.hpp"
#include "memtax/synthgen.hpp"
#include "memtax/taxonomy.hpp"

using namespace memtax;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.seed = seed;
  s.vocabulary_size = 3000;
  s.documents = 120;
  s.document_length = 512;
  s.plants = {{PlantKind::random, 6, 5},
              {PlantKind::random, 2, 5},
              {PlantKind::repeating, 1, 6},
              {PlantKind::repeating, 3, 2},
              {PlantKind::incrementing, 1, 6},
              {PlantKind::incrementing, 2, 3}};
  return s;
}

double rate(const std::vector<bool>& v) {
  return static_cast<double>(std::count(v.begin(), v.end(), true)) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("manifest claims hold under the production analyzers") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto spec = small_spec(seed);
    const auto sc = generate_corpus(spec);
    CHECK(sc.corpus.documents.size() == spec.documents);
    CHECK(sc.manifest.plants.size() == 27);
    const auto index = build_index(sc.corpus);
    auto samples = extract_samples(sc.corpus).samples;
    const auto emb = hashed_bag_embeddings(samples, 64);
    const auto recs = featurize(samples, index, emb, sc.vocabulary, FeatureOptions{});
    std::map<std::uint64_t, const FeatureRecord*> by_id;
    for (const auto& r : recs) by_id[r.sample_id] = &r;

    for (const auto& p : sc.manifest.plants) {
      REQUIRE(p.tokens.size() == 64);
      CHECK(p.positions.size() == p.copies);
      // Every copy is intact, so no plant overwrote another.
      for (const auto& [doc, off] : p.positions) {
        const auto& t = sc.corpus.documents.at(doc).tokens;
        CHECK(std::equal(p.tokens.begin(), p.tokens.end(), t.begin() + off));
      }
      const std::span<const TokenId> cont(p.tokens.data() + 32, 32);
      CHECK(index.duplicate_count(cont) == p.expected_duplicate_count);
      const auto* r = by_id.at(p.sample_id);
      CHECK(r->duplicate_count == p.expected_duplicate_count);
      CHECK(r->template_verdict.kind == p.expected_template);
      if (p.kind == PlantKind::random) CHECK(p.expected_duplicate_count == p.copies);
    }
  }
}

TEST_CASE("synthetic corpora are deterministic under the seed") {
  const auto a = generate_corpus(small_spec(4)), b = generate_corpus(small_spec(4));
  const auto c = generate_corpus(small_spec(5));
  REQUIRE(a.corpus.documents.size() == b.corpus.documents.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.corpus.documents.size(); ++i) {
    CHECK(a.corpus.documents[i].tokens == b.corpus.documents[i].tokens);
    differs = differs || a.corpus.documents[i].tokens != c.corpus.documents[i].tokens;
  }
  CHECK(differs);
  CHECK(to_json(a.manifest, small_spec(4)).dump() == to_json(b.manifest, small_spec(4)).dump());
}

TEST_CASE("generator validation and budgets") {
  auto s = small_spec(1);
  s.documents = 3;
  CHECK_THROWS_WITH_AS(generate_corpus(s), doctest::Contains("required"), ArgumentError);
  s = small_spec(1);
  s.vocabulary_size = 100;
  CHECK_THROWS_AS(generate_corpus(s), ArgumentError);
  CHECK_THROWS_AS(parse_plant_kind("nope"), ConfigError);

  const auto j = nlohmann::json(to_json(small_spec(9)));
  const auto back = synth_spec_from_json(j);
  CHECK(nlohmann::json(to_json(back)).dump() == j.dump());
  CHECK(synth_spec_from_json(nlohmann::json::object()).documents == SynthSpec{}.documents);
  CHECK_THROWS_AS(synth_spec_from_json(nlohmann::json{{"documents", "many"}}), ConfigError);
}

TEST_CASE("modalities are assigned when requested") {
  auto s = small_spec(6);
  s.modalities = {"text", "code"};
  const auto sc = generate_corpus(s);
  std::size_t code = 0;
  for (const auto& d : sc.corpus.documents) {
    REQUIRE(d.modality);
    code += *d.modality == "code";
  }
  CHECK(code > 0);
  CHECK(code < sc.corpus.documents.size());
}

TEST_CASE("zero coefficients give a coin flip") {
  RecordSpec spec;
  spec.n = 10000;
  spec.seed = 7;
  const auto recs = generate_records(spec);
  std::vector<bool> labels;
  for (const auto& r : recs) labels.push_back(*r.memorized);
  CHECK(std::fabs(rate(labels) - 0.5) <= 0.02);
  const auto again = simulate_memorization(recs, {}, 99);
  CHECK(std::fabs(rate(again) - 0.5) <= 0.02);
  CHECK(simulate_memorization(recs, {}, 99) == again);
}

TEST_CASE("a positive duplicate coefficient raises the rate across deciles") {
  std::mt19937_64 rng(8);
  std::vector<FeatureRecord> recs(10000);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto& r = recs[i];
    r.sample_id = i;
    r.duplicate_count = static_cast<std::uint64_t>(std::llround(std::exp(std::uniform_real_distribution<double>(0, 8)(rng))));
    r.prompt_perplexity = r.continuation_perplexity = r.full_perplexity = 10.0;
    r.taxonomy = assign_category(r);
  }
  std::array<CategoryCoefficients, 3> coef;
  for (auto& c : coef) c.weights = {{"duplicate_count", 2.0}};
  const auto labels = simulate_memorization(recs, coef, 3);
  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return recs[a].duplicate_count < recs[b].duplicate_count; });
  double prev = -1;
  for (std::size_t d = 0; d < 10; ++d) {
    double hits = 0;
    for (std::size_t k = d * 1000; k < (d + 1) * 1000; ++k) hits += labels[order[k]];
    const double r = hits / 1000.0;
    CHECK(r > prev);
    prev = r;
  }
}

TEST_CASE("Simpson construction: pooled and within-category signs disagree") {
  RecordSpec spec;
  spec.n = 30000;
  spec.seed = 10;
  spec.coefficients = simpson_coefficients();
  const auto recs = generate_records(spec);
  const auto rho = [&](std::optional<Category> c) {
    DependencyConfig cfg;
    cfg.permutations = 10;
    return dependency_test(recs, c, "huffman_bits", cfg).rho;
  };
  const double pooled = rho(std::nullopt);
  const double recitation = rho(Category::recitation);
  const double reconstruction = rho(Category::reconstruction);
  const double recollection = rho(Category::recollection);
  MESSAGE("pooled " << pooled << " recitation " << recitation << " reconstruction " << reconstruction
                    << " recollection " << recollection);
  CHECK(recitation < 0);
  CHECK(reconstruction > 0);
  CHECK(recollection > 0);
  // Pooling hides the recitation sign.
  CHECK(pooled * recitation < 0);
}
