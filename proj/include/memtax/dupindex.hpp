#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "memtax/common.hpp"
#include "memtax/corpus.hpp"

namespace memtax {

struct HashParams {
  std::uint64_t base = 60013;
  std::uint64_t modulus = 1'000'000'000'000'000'003ULL;
  std::size_t window = 32;
};

// (c_1 + c_2*P + ... + c_n*P^(n-1)) mod MOD, every product reduced mod MOD.
std::uint64_t window_hash(std::span<const TokenId> tokens, std::uint64_t base,
                          std::uint64_t modulus);

// Hash of every window of `tokens` (start offsets 0..size-window), computed
// with the rolling update right to left so no modular inverse of P is needed.
std::vector<std::uint64_t> rolling_hashes(std::span<const TokenId> tokens,
                                          const HashParams& params);

// Exact 32-gram occurrence counts for a corpus. Holds a reference to the
// corpus it was built from; the corpus must outlive the index.
class DuplicateIndex {
 public:
  struct Entry {
    std::uint64_t hash;
    std::uint32_t document;  // position in corpus.documents
    std::uint32_t offset;
  };

  DuplicateIndex(const Corpus& corpus, HashParams params, std::size_t shard_count);

  const HashParams& params() const { return params_; }
  const Corpus& corpus() const { return *corpus_; }
  std::size_t window_count() const;
  std::size_t shard_count() const { return shards_.size(); }

  // Verified occurrence count of the exact token sequence; 0 when absent.
  std::uint64_t duplicate_count(std::span<const TokenId> window) const;

  // All entries ordered by (hash, document id, offset).
  std::vector<Entry> sorted_entries() const;

  std::span<const TokenId> window_tokens(const Entry& e) const;

 private:
  friend DuplicateIndex build_index(const Corpus&, const HashParams&, Execution, std::size_t);
  friend DuplicateIndex load_index(const std::filesystem::path&, const Corpus&, Execution);

  struct Shard {
    std::vector<Entry> entries;        // sorted by (hash, window tokens, document, offset)
    std::vector<std::uint32_t> count;  // verified run length of entries[i]'s window
  };

  void finalize(Execution exec);

  const Corpus* corpus_;
  HashParams params_;
  std::vector<Shard> shards_;
};

inline constexpr std::size_t kDefaultIndexShards = 64;

DuplicateIndex build_index(const Corpus& corpus, const HashParams& params = {},
                           Execution exec = Execution::parallel,
                           std::size_t shard_count = kDefaultIndexShards);

// "MTXI", P u64, MOD u64, window u32, entry count u64, then entries sorted by
// (hash, doc id, offset): hash as two u64 (low, high), doc id u64, offset u32.
void save_index(const DuplicateIndex& index, const std::filesystem::path& path);
DuplicateIndex load_index(const std::filesystem::path& path, const Corpus& corpus,
                          Execution exec = Execution::parallel);

}  // namespace memtax
