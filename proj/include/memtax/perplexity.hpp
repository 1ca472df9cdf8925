#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "memtax/corpus.hpp"
#include "memtax/features.hpp"

namespace memtax {

struct TokenLogProbs {
  std::uint64_t sample_id = 0;
  std::array<double, kSampleLength> logprobs{};  // natural log, all <= 0
};

struct PerplexityStats {
  double prompt = 1.0;
  double continuation = 1.0;
  double full = 1.0;
};

// exp(-mean(logprobs)). Throws ValidationError on an empty span or any
// positive value.
double span_perplexity(std::span<const double> logprobs);

PerplexityStats perplexity_stats(const TokenLogProbs& lp);

// Add-k smoothed n-gram model used as a stand-in language model. Counts are
// kept in sorted flat tables; contexts shorter than n-1 at the start of a
// sequence are padded with a begin-of-sequence id equal to vocabulary_size.
class ReferenceLM {
 public:
  std::size_t order() const { return order_; }
  double k() const { return k_; }
  std::uint32_t vocabulary_size() const { return vocabulary_size_; }
  TokenId bos() const { return vocabulary_size_; }

  // P(token | context); `context` holds the n-1 preceding ids (BOS-padded).
  double probability(std::span<const TokenId> context, TokenId token) const;

  // Natural-log probability of every token given its BOS-padded history.
  std::vector<double> score(std::span<const TokenId> tokens) const;

  std::uint64_t context_count(std::span<const TokenId> context) const;
  std::uint64_t ngram_count(std::span<const TokenId> ngram) const;

 private:
  friend ReferenceLM train_reference_lm(const Corpus&, std::size_t, double);

  std::size_t order_ = 3;
  double k_ = 1.0;
  std::uint32_t vocabulary_size_ = 0;
  std::vector<TokenId> ngrams_;  // order_ ids per row, sorted
  std::vector<std::uint64_t> ngram_counts_;
  std::vector<TokenId> contexts_;  // order_-1 ids per row, sorted
  std::vector<std::uint64_t> context_counts_;
};

ReferenceLM train_reference_lm(const Corpus& corpus, std::size_t order = 3, double k = 1.0);

TokenLogProbs score_sample(const ReferenceLM& lm, const Sample& sample);

// JSONL {"id": u64, "logprobs": [64 reals]}.
std::vector<TokenLogProbs> load_logprobs(const std::filesystem::path& path);
void save_logprobs(std::span<const TokenLogProbs> lps, const std::filesystem::path& path);

// Fills the three perplexity fields by sample id; ids without log-probs are
// returned.
std::vector<std::uint64_t> attach_perplexities(std::span<FeatureRecord> records,
                                               std::span<const TokenLogProbs> lps);

}  // namespace memtax
