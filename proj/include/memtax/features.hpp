#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memtax/category.hpp"
#include "memtax/corpus.hpp"
#include "memtax/dupindex.hpp"
#include "memtax/matching.hpp"
#include "memtax/template_detect.hpp"

namespace memtax {

struct FrequencyStats {
  double min = 0, q25 = 0, median = 0, mean = 0, q75 = 0, max = 0;
};

// Linear interpolation between closest ranks (q in [0, 1]); `sorted` ascending.
double percentile_sorted(std::span<const double> sorted, double q);

// Order statistics of the corpus-wide counts of each token (absent tokens
// count 0). Accepts any length so tests can use short sequences.
FrequencyStats token_frequency_stats(const std::map<TokenId, std::uint64_t>& token_counts,
                                     std::span<const TokenId> tokens);

struct FeatureRecord {
  std::uint64_t sample_id = 0;
  std::uint64_t duplicate_count = 0;  // continuation window
  std::uint64_t prompt_duplicate_count = 0;
  FrequencyStats frequency_stats;
  std::uint64_t huffman_bits = 0;
  TemplateVerdict template_verdict;
  std::uint64_t semantic_match_count = 0;
  std::uint64_t textual_match_count = 0;
  std::optional<double> prompt_perplexity;
  std::optional<double> continuation_perplexity;
  std::optional<double> full_perplexity;
  std::optional<bool> memorized;
  std::optional<std::string> modality;
  std::optional<Category> taxonomy;
};

struct FeatureOptions {
  double semantic_threshold = kDefaultSemanticThreshold;
  double textual_relative_threshold = kDefaultTextualRelativeThreshold;
};

// Shared read-only inputs for per-sample assembly.
struct FeatureContext {
  const DuplicateIndex& index;
  const Vocabulary& vocabulary;
  std::span<const std::vector<std::uint32_t>> semantic_matches;  // by sample row
  std::span<const std::vector<char32_t>> decoded_prompts;         // code points, by sample row
  FeatureOptions options;
};

// Every field except the perplexities. `row` is the sample's position in the
// match lists and prompt table.
FeatureRecord assemble_features(const Sample& sample, std::size_t row, const FeatureContext& ctx);

// Runs detokenization, semantic matching and assembly over all samples.
std::vector<FeatureRecord> featurize(std::span<const Sample> samples, const DuplicateIndex& index,
                                     const EmbeddingTable& embeddings,
                                     const Vocabulary& vocabulary, const FeatureOptions& options,
                                     Execution exec = Execution::parallel);

// Flat column set shared by the JSONL and CSV feature files.
const std::vector<std::string>& feature_columns(bool with_taxonomy);

nlohmann::ordered_json record_to_json(const FeatureRecord& r);
// Throws ValidationError naming the first missing or mistyped field.
FeatureRecord record_from_json(const nlohmann::json& j);

// JSONL files open with one {"_meta": {...}} provenance line.
void write_feature_jsonl(std::span<const FeatureRecord> records, const nlohmann::json& meta,
                         const std::filesystem::path& path);
void write_feature_csv(std::span<const FeatureRecord> records, const nlohmann::json& meta,
                       const std::filesystem::path& path);

struct FeatureFile {
  nlohmann::json meta;
  std::vector<FeatureRecord> records;
};
FeatureFile read_feature_jsonl(const std::filesystem::path& path);

// Shortest round-trip decimal rendering used in CSV output.
std::string format_double(double v);

}  // namespace memtax
