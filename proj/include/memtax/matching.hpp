#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "memtax/common.hpp"
#include "memtax/corpus.hpp"

namespace memtax {

// Maps token ids to surface strings; detokenization is plain concatenation.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::unordered_map<TokenId, std::string> entries);

  static Vocabulary load(const std::filesystem::path& path);  // JSONL {"id","text"}
  void save(const std::filesystem::path& path) const;

  bool contains(TokenId id) const { return entries_.count(id) != 0; }
  const std::string& text(TokenId id) const;
  std::string detokenize(std::span<const TokenId> tokens) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<TokenId, std::string> entries_;
};

// Row-major table of unit-length float embeddings, one row per sample.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<float> values;

  std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * dim, dim);
  }
};

// "MTXE", dim u32 LE, count u64 LE, then count*dim f32 LE.
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

// L2-normalized hashed bag of tokens over each sample's full sequence.
EmbeddingTable hashed_bag_embeddings(std::span<const Sample> samples, std::size_t dim = 256);

inline constexpr double kDefaultSemanticThreshold = 0.8;
inline constexpr double kDefaultTextualRelativeThreshold = 0.2;
// Float rounding slack for the inclusive cosine threshold.
inline constexpr double kCosineSlack = 1e-6;

double cosine(std::span<const float> a, std::span<const float> b);

// Other rows with cosine >= threshold to row `query`.
std::size_t semantic_match_count(const EmbeddingTable& table, std::size_t query,
                                 double threshold = kDefaultSemanticThreshold);

// For every row, the ascending list of matching rows (self excluded). The
// parallel kernel and the serial reference return identical lists.
std::vector<std::vector<std::uint32_t>> semantic_match_lists(
    const EmbeddingTable& table, double threshold = kDefaultSemanticThreshold,
    Execution exec = Execution::parallel);

// Among `matches`, those whose prompt is within relative_threshold * (longer
// prompt length in characters) edits of the query prompt.
std::size_t textual_match_count(std::span<const std::uint32_t> matches,
                                std::span<const std::string> prompts, std::size_t query,
                                double relative_threshold = kDefaultTextualRelativeThreshold);
std::size_t textual_match_count(std::span<const std::uint32_t> matches,
                                std::span<const std::vector<char32_t>> prompts, std::size_t query,
                                double relative_threshold = kDefaultTextualRelativeThreshold);

}  // namespace memtax
