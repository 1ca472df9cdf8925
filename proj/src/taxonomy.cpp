#include "memtax/taxonomy.hpp"

namespace memtax {

std::string to_string(Precedence p) {
  return p == Precedence::recitation_first ? "recitation_first" : "reconstruction_first";
}

Precedence parse_precedence(std::string_view name) {
  if (name == "recitation_first") return Precedence::recitation_first;
  if (name == "reconstruction_first") return Precedence::reconstruction_first;
  throw ConfigError("unknown taxonomy precedence '" + std::string(name) + "'");
}

Category assign_category(const FeatureRecord& record, const TaxonomyConfig& config) {
  if (config.recitation_threshold < 1) throw ArgumentError("recitation threshold must be >= 1");
  const bool recites = record.duplicate_count >= config.recitation_threshold;
  const bool templated = record.template_verdict.kind != TemplateKind::none;
  if (config.precedence == Precedence::reconstruction_first && templated)
    return Category::reconstruction;
  if (recites) return Category::recitation;
  if (templated) return Category::reconstruction;
  return Category::recollection;
}

Category assign_category(const nlohmann::json& record, const TaxonomyConfig& config) {
  for (const char* key : {"duplicate_count", "template"})
    if (!record.contains(key) || record[key].is_null())
      throw ValidationError(std::string("cannot assign a category: missing field '") + key + "'");
  return assign_category(record_from_json(record), config);
}

void assign_categories(std::span<FeatureRecord> records, const TaxonomyConfig& config) {
  for (auto& r : records) r.taxonomy = assign_category(r, config);
}

std::array<std::size_t, 3> category_counts(std::span<const FeatureRecord> records) {
  std::array<std::size_t, 3> counts{};
  for (const auto& r : records)
    if (r.taxonomy) ++counts[static_cast<std::size_t>(*r.taxonomy)];
  return counts;
}

nlohmann::json taxonomy_provenance(const TaxonomyConfig& config) {
  return {{"recitation_threshold", config.recitation_threshold},
          {"duplicate_counting", "inclusive (a window seen once counts 1)"},
          {"precedence", to_string(config.precedence)}};
}

}  // namespace memtax
