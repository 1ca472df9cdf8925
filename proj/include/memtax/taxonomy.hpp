#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memtax/category.hpp"
#include "memtax/features.hpp"

namespace memtax {

enum class Precedence { recitation_first, reconstruction_first };

std::string to_string(Precedence p);
Precedence parse_precedence(std::string_view name);

struct TaxonomyConfig {
  std::uint64_t recitation_threshold = 6;  // inclusive: count >= threshold
  Precedence precedence = Precedence::recitation_first;
};

// Recitation: duplicate_count >= threshold. Reconstruction: templated.
// Recollection: neither. Samples meeting both of the first two rules follow
// the configured precedence.
Category assign_category(const FeatureRecord& record, const TaxonomyConfig& config = {});

// Same rule over a raw feature-file object; missing fields raise
// ValidationError.
Category assign_category(const nlohmann::json& record, const TaxonomyConfig& config = {});

void assign_categories(std::span<FeatureRecord> records, const TaxonomyConfig& config = {});

std::array<std::size_t, 3> category_counts(std::span<const FeatureRecord> records);

// Provenance block written into taxonomy outputs.
nlohmann::json taxonomy_provenance(const TaxonomyConfig& config);

}  // namespace memtax
