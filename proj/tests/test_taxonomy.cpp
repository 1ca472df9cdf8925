#include <doctest.h>

#include <random>

#include "memtax/taxonomy.hpp"

using namespace memtax;

namespace {

FeatureRecord rec(std::uint64_t dup, TemplateKind kind) {
  FeatureRecord r;
  r.duplicate_count = dup;
  r.template_verdict.kind = kind;
  if (kind != TemplateKind::none) r.template_verdict.stride = 1;
  return r;
}

}  // namespace

TEST_CASE("category fixtures") {
  CHECK(assign_category(rec(10, TemplateKind::none)) == Category::recitation);
  CHECK(assign_category(rec(2, TemplateKind::repeating)) == Category::reconstruction);
  CHECK(assign_category(rec(1, TemplateKind::none)) == Category::recollection);
  CHECK(assign_category(rec(7, TemplateKind::incrementing)) == Category::recitation);
  const TaxonomyConfig recon{6, Precedence::reconstruction_first};
  CHECK(assign_category(rec(7, TemplateKind::incrementing), recon) == Category::reconstruction);
}

TEST_CASE("threshold boundary") {
  CHECK(assign_category(rec(6, TemplateKind::none)) == Category::recitation);
  CHECK(assign_category(rec(5, TemplateKind::none)) == Category::recollection);
  CHECK(assign_category(rec(5, TemplateKind::repeating)) == Category::reconstruction);
  CHECK_THROWS_AS(assign_category(rec(5, TemplateKind::none), TaxonomyConfig{0}), ArgumentError);
}

TEST_CASE("fuzz: totality, disjointness and monotonicity") {
  std::mt19937_64 rng(99);
  std::array<std::size_t, 3> seen{};
  for (int i = 0; i < 100000; ++i) {
    const std::uint64_t dup = rng() % 3 == 0 ? rng() % 20 : rng();
    const auto kind = static_cast<TemplateKind>(rng() % 3);
    const TaxonomyConfig cfg{1 + rng() % 12, rng() % 2 ? Precedence::recitation_first : Precedence::reconstruction_first};
    const auto r = rec(dup, kind);
    const auto c = assign_category(r, cfg);
    const bool recites = dup >= cfg.recitation_threshold, templated = kind != TemplateKind::none;
    // Exactly one category predicate holds under the configured precedence.
    int hits = 0;
    hits += c == Category::recitation;
    hits += c == Category::reconstruction;
    hits += c == Category::recollection;
    REQUIRE(hits == 1);
    if (c == Category::recitation) REQUIRE(recites);
    if (c == Category::reconstruction) REQUIRE(templated);
    if (c == Category::recollection) REQUIRE((!recites && !templated));
    ++seen[static_cast<std::size_t>(c)];
    if (c == Category::recitation && dup < UINT64_MAX)
      REQUIRE(assign_category(rec(dup + 1 + rng() % 1000, kind), cfg) == Category::recitation);
  }
  for (auto n : seen) CHECK(n > 0);
}

TEST_CASE("json records and counts") {
  nlohmann::json j = {{"sample_id", 1}};
  CHECK_THROWS_WITH_AS(assign_category(j), doctest::Contains("duplicate_count"), ValidationError);
  std::vector<FeatureRecord> recs = {rec(9, TemplateKind::none), rec(1, TemplateKind::repeating),
                                     rec(1, TemplateKind::none), rec(2, TemplateKind::none)};
  CHECK(assign_category(nlohmann::json(record_to_json(recs[1]))) == Category::reconstruction);
  assign_categories(recs);
  CHECK(category_counts(recs) == std::array<std::size_t, 3>{1, 1, 2});
  CHECK(parse_precedence("reconstruction_first") == Precedence::reconstruction_first);
  CHECK(taxonomy_provenance({})["recitation_threshold"] == 6);
}
