#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memtax/common.hpp"

namespace memtax {

struct Document {
  std::uint64_t id = 0;
  std::vector<TokenId> tokens;
  std::optional<std::string> modality;
};

// Immutable after load. token_counts is ordered so serialized output is stable.
struct Corpus {
  std::vector<Document> documents;
  std::uint32_t vocabulary_size = 0;
  std::map<TokenId, std::uint64_t> token_counts;

  std::uint64_t total_tokens() const;
  std::uint64_t count_of(TokenId token) const;
};

enum class CorpusFormat { binary, jsonl };

CorpusFormat parse_corpus_format(const std::string& name);

// Binary layout: "MTXC", version u32, vocabulary_size u32, token_width u8,
// 3 reserved bytes; then per document a u32 length and the tokens, all LE.
inline constexpr std::uint32_t kCorpusFormatVersion = 1;

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
void save_corpus_binary(const Corpus& corpus, const std::filesystem::path& path,
                        unsigned token_width = 4);
void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path);

// Recomputes token_counts from the documents.
void recount_tokens(Corpus& corpus);

struct Sample {
  std::uint64_t id = 0;
  std::uint64_t document = 0;  // document id
  std::uint32_t offset = 0;
  std::array<TokenId, kPromptLength> prompt{};
  std::array<TokenId, kContinuationLength> continuation{};
  std::optional<bool> memorized;  // nullopt = unknown (inference-only runs)
  std::optional<std::string> modality;

  std::array<TokenId, kSampleLength> sequence() const;
};

struct SampleExtraction {
  std::vector<Sample> samples;
  std::size_t skipped_documents = 0;
};

// Sample ids equal document ids in single-window mode. With multi_window,
// every non-overlapping 64-token window from `offset` on becomes a sample
// with id (document id << 16) | window index.
SampleExtraction extract_samples(const Corpus& corpus, std::size_t offset = 0,
                                 bool multi_window = false);

struct LabelReport {
  std::size_t labeled = 0;
  std::vector<std::uint64_t> duplicate_ids;
  std::vector<std::uint64_t> rejected_ids;  // ids not in the sample set
};

std::vector<std::uint64_t> read_id_list(const std::filesystem::path& path);
void write_id_list(std::span<const std::uint64_t> ids, const std::filesystem::path& path);

LabelReport attach_labels(std::vector<Sample>& samples,
                          std::span<const std::uint64_t> memorized_ids);
LabelReport attach_labels(std::vector<Sample>& samples,
                          const std::filesystem::path& label_file);

}  // namespace memtax
