#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memtax/category.hpp"
#include "memtax/corpus.hpp"
#include "memtax/features.hpp"
#include "memtax/matching.hpp"

namespace memtax {

enum class PlantKind { random, repeating, incrementing };

std::string to_string(PlantKind k);
PlantKind parse_plant_kind(std::string_view s);

struct PlantGroup {
  PlantKind kind = PlantKind::random;
  std::size_t duplicates = 1;  // copies of the 64-token sequence
  std::size_t count = 1;       // distinct sequences in this group
};

// Memorization probability sigmoid(bias + sum weight * z) over normalized
// model features, one rule per category.
struct CategoryCoefficients {
  std::map<std::string, double> weights;
  double bias = 0.0;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  std::uint32_t vocabulary_size = 5000;
  std::size_t documents = 200;
  std::size_t document_length = 512;
  double zipf_exponent = 1.1;
  bool uniform_background = false;
  std::vector<std::string> modalities;  // assigned per document when nonempty
  std::vector<PlantGroup> plants;
  std::array<CategoryCoefficients, 3> coefficients;
};

// Fixed token layout: ids 0..999 render " 0".." 999", a few separator and
// label tokens follow, the rest are letter-only words.
inline constexpr TokenId kNumberTokens = 1000;
inline constexpr TokenId kFirstWordToken = 1008;
inline constexpr std::uint32_t kMinSynthVocabulary = kFirstWordToken + 64;

struct PlantRecord {
  std::size_t id = 0;
  PlantKind kind = PlantKind::random;
  std::size_t period = 0;  // repeating plants only
  std::size_t copies = 0;
  std::uint64_t sample_id = 0;  // document whose first window is this plant
  std::uint64_t expected_duplicate_count = 0;
  TemplateKind expected_template = TemplateKind::none;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> positions;  // (document id, offset)
  std::vector<TokenId> tokens;
};

struct SynthManifest {
  std::uint64_t seed = 0;
  std::vector<PlantRecord> plants;
};

struct SynthCorpus {
  Corpus corpus;
  Vocabulary vocabulary;
  SynthManifest manifest;
};

Vocabulary synth_vocabulary(std::uint32_t vocabulary_size);

// Throws ArgumentError with required vs available token budget when the
// plants do not fit.
SynthCorpus generate_corpus(const SynthSpec& spec);

nlohmann::ordered_json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);  // missing keys keep defaults
nlohmann::ordered_json to_json(const SynthManifest& m, const SynthSpec& spec);

// Labels each record with probability given by its category's rule; the
// category is the record's taxonomy (assigned with defaults when absent).
std::vector<bool> simulate_memorization(std::span<const FeatureRecord> records,
                                        const std::array<CategoryCoefficients, 3>& coefficients,
                                        std::uint64_t seed);

struct RecordSpec {
  std::size_t n = 30000;
  std::uint64_t seed = 0;
  std::array<double, 3> category_mix{0.3, 0.2, 0.5};
  std::array<CategoryCoefficients, 3> coefficients;
};

// Feature records drawn directly (no corpus), with taxonomy and labels set.
std::vector<FeatureRecord> generate_records(const RecordSpec& spec);

// Coefficients whose sign on huffman_bits flips between categories while
// category base rates push the pooled correlation the other way.
std::array<CategoryCoefficients, 3> simpson_coefficients();

}  // namespace memtax
