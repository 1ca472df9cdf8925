#include "memtax/perplexity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "memtax/io_util.hpp"

namespace memtax {

double span_perplexity(std::span<const double> logprobs) {
  if (logprobs.empty()) throw ValidationError("perplexity of an empty span");
  double sum = 0.0;
  for (double v : logprobs) {
    if (!(v <= 0.0)) throw ValidationError("log-probability " + std::to_string(v) + " is > 0 or NaN");
    sum += v;
  }
  return std::exp(-sum / static_cast<double>(logprobs.size()));
}

PerplexityStats perplexity_stats(const TokenLogProbs& lp) {
  const std::span<const double> all(lp.logprobs);
  return {span_perplexity(all.first(kPromptLength)), span_perplexity(all.subspan(kPromptLength)),
          span_perplexity(all)};
}

namespace {

// Lower bound over a flat table of fixed-width rows.
std::size_t find_row(const std::vector<TokenId>& table, std::size_t width,
                     std::span<const TokenId> key) {
  std::size_t lo = 0, hi = width == 0 ? 0 : table.size() / width;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    const auto* row = table.data() + mid * width;
    if (std::lexicographical_compare(row, row + width, key.begin(), key.end())) lo = mid + 1;
    else hi = mid;
  }
  return lo;
}

bool row_equals(const std::vector<TokenId>& table, std::size_t width, std::size_t row,
                std::span<const TokenId> key) {
  if ((row + 1) * width > table.size()) return false;
  return std::equal(key.begin(), key.end(), table.begin() + static_cast<std::ptrdiff_t>(row * width));
}

}  // namespace

std::uint64_t ReferenceLM::context_count(std::span<const TokenId> context) const {
  const std::size_t w = order_ - 1;
  if (context.size() != w) throw ArgumentError("context length must be order-1");
  if (w == 0) return context_counts_.empty() ? 0 : context_counts_[0];
  const auto row = find_row(contexts_, w, context);
  return row_equals(contexts_, w, row, context) ? context_counts_[row] : 0;
}

std::uint64_t ReferenceLM::ngram_count(std::span<const TokenId> ngram) const {
  if (ngram.size() != order_) throw ArgumentError("n-gram length must equal the model order");
  const auto row = find_row(ngrams_, order_, ngram);
  return row_equals(ngrams_, order_, row, ngram) ? ngram_counts_[row] : 0;
}

double ReferenceLM::probability(std::span<const TokenId> context, TokenId token) const {
  std::vector<TokenId> ngram(context.begin(), context.end());
  ngram.push_back(token);
  const double v = vocabulary_size_;
  const double denom = static_cast<double>(context_count(context)) + k_ * v;
  if (denom == 0.0) return 1.0 / v;  // k = 0 and the context was never seen
  return (static_cast<double>(ngram_count(ngram)) + k_) / denom;
}

std::vector<double> ReferenceLM::score(std::span<const TokenId> tokens) const {
  const std::size_t w = order_ - 1;
  std::vector<TokenId> padded(w, bos());
  padded.insert(padded.end(), tokens.begin(), tokens.end());
  std::vector<double> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i)
    out[i] = std::log(probability(std::span<const TokenId>(padded).subspan(i, w), tokens[i]));
  return out;
}

ReferenceLM train_reference_lm(const Corpus& corpus, std::size_t order, double k) {
  if (order < 1) throw ArgumentError("n-gram order must be >= 1");
  if (k < 0.0) throw ArgumentError("add-k constant must be nonnegative");
  if (corpus.documents.empty()) throw ArgumentError("cannot train a language model on an empty corpus");
  ReferenceLM lm;
  lm.order_ = order;
  lm.k_ = k;
  TokenId max_token = 0;
  for (const auto& [t, _] : corpus.token_counts) max_token = std::max(max_token, t);
  lm.vocabulary_size_ = std::max(corpus.vocabulary_size, max_token + 1);

  const std::size_t w = order - 1;
  std::vector<TokenId> stream;
  std::vector<std::uint64_t> starts;  // n-gram start positions in `stream`
  stream.reserve(corpus.total_tokens() + corpus.documents.size() * w);
  starts.reserve(corpus.total_tokens());
  for (const auto& doc : corpus.documents) {
    const std::uint64_t base = stream.size();
    stream.insert(stream.end(), w, lm.bos());
    stream.insert(stream.end(), doc.tokens.begin(), doc.tokens.end());
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) starts.push_back(base + i);
  }
  const auto less = [&](std::uint64_t a, std::uint64_t b) {
    return std::lexicographical_compare(stream.begin() + a, stream.begin() + a + order,
                                        stream.begin() + b, stream.begin() + b + order);
  };
  std::sort(starts.begin(), starts.end(), less);

  for (std::size_t i = 0; i < starts.size();) {
    std::size_t j = i + 1;
    while (j < starts.size() && !less(starts[i], starts[j])) ++j;
    lm.ngrams_.insert(lm.ngrams_.end(), stream.begin() + starts[i], stream.begin() + starts[i] + order);
    lm.ngram_counts_.push_back(j - i);
    i = j;
  }
  // Rows sharing a context prefix are contiguous in the sorted n-gram table.
  const std::size_t rows = lm.ngram_counts_.size();
  for (std::size_t r = 0; r < rows;) {
    std::size_t s = r;
    std::uint64_t total = 0;
    while (s < rows && std::equal(lm.ngrams_.begin() + r * order, lm.ngrams_.begin() + r * order + w,
                                  lm.ngrams_.begin() + s * order)) {
      total += lm.ngram_counts_[s];
      ++s;
    }
    lm.contexts_.insert(lm.contexts_.end(), lm.ngrams_.begin() + r * order,
                        lm.ngrams_.begin() + r * order + w);
    lm.context_counts_.push_back(total);
    r = s;
  }
  return lm;
}

TokenLogProbs score_sample(const ReferenceLM& lm, const Sample& sample) {
  TokenLogProbs out;
  out.sample_id = sample.id;
  const auto seq = sample.sequence();
  const auto lp = lm.score(seq);
  std::copy(lp.begin(), lp.end(), out.logprobs.begin());
  return out;
}

std::vector<TokenLogProbs> load_logprobs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open log-prob file " + path.string());
  std::vector<TokenLogProbs> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "log-prob line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw LoadError(where + e.what());
    }
    if (!j.contains("id") || !j.contains("logprobs") || !j["logprobs"].is_array())
      throw LoadError(where + "expected {\"id\", \"logprobs\"}");
    if (j["logprobs"].size() != kSampleLength)
      throw ValidationError(where + "expected 64 log-probs, got " + std::to_string(j["logprobs"].size()));
    TokenLogProbs lp;
    lp.sample_id = j["id"].get<std::uint64_t>();
    for (std::size_t i = 0; i < kSampleLength; ++i) {
      lp.logprobs[i] = j["logprobs"][i].get<double>();
      if (!(lp.logprobs[i] <= 0.0)) throw ValidationError(where + "log-prob > 0 at position " + std::to_string(i));
    }
    out.push_back(lp);
  }
  return out;
}

void save_logprobs(std::span<const TokenLogProbs> lps, const std::filesystem::path& path) {
  std::string out;
  for (const auto& lp : lps) {
    out += nlohmann::json{{"id", lp.sample_id}, {"logprobs", lp.logprobs}}.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

std::vector<std::uint64_t> attach_perplexities(std::span<FeatureRecord> records,
                                               std::span<const TokenLogProbs> lps) {
  std::unordered_map<std::uint64_t, const TokenLogProbs*> by_id;
  for (const auto& lp : lps) by_id[lp.sample_id] = &lp;
  std::vector<std::uint64_t> missing;
  for (auto& r : records) {
    auto it = by_id.find(r.sample_id);
    if (it == by_id.end()) {
      missing.push_back(r.sample_id);
      continue;
    }
    const auto ppl = perplexity_stats(*it->second);
    r.prompt_perplexity = ppl.prompt;
    r.continuation_perplexity = ppl.continuation;
    r.full_perplexity = ppl.full;
  }
  return missing;
}

}  // namespace memtax
