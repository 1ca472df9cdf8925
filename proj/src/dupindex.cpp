#include "memtax/dupindex.hpp"

#include <algorithm>
#include <unordered_map>

#include "memtax/io_util.hpp"

namespace memtax {

namespace {

using u128 = unsigned __int128;

std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<u128>(a) * b % m);
}

std::uint64_t addmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  const u128 s = static_cast<u128>(a) + b;
  return static_cast<std::uint64_t>(s % m);
}

std::uint64_t submod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return a >= b ? a - b : static_cast<std::uint64_t>(static_cast<u128>(a) + m - b);
}

}  // namespace

std::uint64_t window_hash(std::span<const TokenId> tokens, std::uint64_t base,
                          std::uint64_t modulus) {
  if (modulus == 0) throw ArgumentError("hash modulus must be positive");
  // Horner from the highest power down.
  std::uint64_t h = 0;
  const std::uint64_t p = base % modulus;
  for (auto it = tokens.rbegin(); it != tokens.rend(); ++it)
    h = addmod(mulmod(h, p, modulus), *it % modulus, modulus);
  return h;
}

std::vector<std::uint64_t> rolling_hashes(std::span<const TokenId> tokens,
                                          const HashParams& params) {
  const std::size_t w = params.window;
  if (w == 0) throw ArgumentError("window length must be positive");
  if (tokens.size() < w) return {};
  const std::uint64_t m = params.modulus;
  const std::uint64_t p = params.base % m;
  std::uint64_t p_w = 1 % m;  // P^w
  for (std::size_t i = 0; i < w; ++i) p_w = mulmod(p_w, p, m);

  const std::size_t n = tokens.size() - w + 1;
  std::vector<std::uint64_t> out(n);
  std::size_t i = n - 1;
  std::uint64_t h = window_hash(tokens.subspan(i, w), params.base, m);
  out[i] = h;
  // H(i) = c_i + P * H(i+1) - c_{i+w} * P^w
  while (i-- > 0) {
    h = addmod(tokens[i] % m, mulmod(h, p, m), m);
    h = submod(h, mulmod(tokens[i + w] % m, p_w, m), m);
    out[i] = h;
  }
  return out;
}

DuplicateIndex::DuplicateIndex(const Corpus& corpus, HashParams params, std::size_t shard_count)
    : corpus_(&corpus), params_(params), shards_(std::max<std::size_t>(shard_count, 1)) {}

std::size_t DuplicateIndex::window_count() const {
  std::size_t n = 0;
  for (const auto& s : shards_) n += s.entries.size();
  return n;
}

std::span<const TokenId> DuplicateIndex::window_tokens(const Entry& e) const {
  return std::span<const TokenId>(corpus_->documents[e.document].tokens)
      .subspan(e.offset, params_.window);
}

void DuplicateIndex::finalize(Execution exec) {
  const auto less = [this](const Entry& a, const Entry& b) {
    if (a.hash != b.hash) return a.hash < b.hash;
    const auto ta = window_tokens(a), tb = window_tokens(b);
    const auto c =
        std::lexicographical_compare_three_way(ta.begin(), ta.end(), tb.begin(), tb.end());
    if (c != 0) return c < 0;
    if (a.document != b.document) return a.document < b.document;
    return a.offset < b.offset;
  };
  const auto same_window = [this](const Entry& a, const Entry& b) {
    if (a.hash != b.hash) return false;
    const auto ta = window_tokens(a), tb = window_tokens(b);
    return std::equal(ta.begin(), ta.end(), tb.begin());
  };
  const auto finish_shard = [&](Shard& shard) {
    std::sort(shard.entries.begin(), shard.entries.end(), less);
    shard.count.assign(shard.entries.size(), 0);
    std::size_t run = 0;
    for (std::size_t i = 1; i <= shard.entries.size(); ++i) {
      if (i == shard.entries.size() || !same_window(shard.entries[run], shard.entries[i])) {
        for (std::size_t j = run; j < i; ++j) shard.count[j] = static_cast<std::uint32_t>(i - run);
        run = i;
      }
    }
  };
  const auto n = static_cast<std::ptrdiff_t>(shards_.size());
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t s = 0; s < n; ++s) finish_shard(shards_[s]);
  } else {
    for (std::ptrdiff_t s = 0; s < n; ++s) finish_shard(shards_[s]);
  }
}

std::uint64_t DuplicateIndex::duplicate_count(std::span<const TokenId> window) const {
  if (window.size() != params_.window)
    throw ArgumentError("query window has " + std::to_string(window.size()) +
                        " tokens, index window is " + std::to_string(params_.window));
  const std::uint64_t h = window_hash(window, params_.base, params_.modulus);
  const Shard& shard = shards_[h % shards_.size()];
  auto lo = std::lower_bound(shard.entries.begin(), shard.entries.end(), h,
                             [](const Entry& e, std::uint64_t v) { return e.hash < v; });
  for (auto it = lo; it != shard.entries.end() && it->hash == h;) {
    const auto t = window_tokens(*it);
    const auto idx = static_cast<std::size_t>(it - shard.entries.begin());
    if (std::equal(t.begin(), t.end(), window.begin())) return shard.count[idx];
    it += shard.count[idx];  // skip the rest of this verified run
  }
  return 0;
}

std::vector<DuplicateIndex::Entry> DuplicateIndex::sorted_entries() const {
  std::vector<Entry> all;
  all.reserve(window_count());
  for (const auto& s : shards_) all.insert(all.end(), s.entries.begin(), s.entries.end());
  const auto& docs = corpus_->documents;
  std::sort(all.begin(), all.end(), [&](const Entry& a, const Entry& b) {
    if (a.hash != b.hash) return a.hash < b.hash;
    if (docs[a.document].id != docs[b.document].id) return docs[a.document].id < docs[b.document].id;
    return a.offset < b.offset;
  });
  return all;
}

DuplicateIndex build_index(const Corpus& corpus, const HashParams& params, Execution exec,
                           std::size_t shard_count) {
  if (params.modulus == 0 || params.window == 0)
    throw ArgumentError("hash modulus and window must be positive");
  if (corpus.documents.size() > 0xffffffffULL)
    throw ArgumentError("too many documents for a single index");
  DuplicateIndex index(corpus, params, shard_count);

  const auto ndocs = static_cast<std::ptrdiff_t>(corpus.documents.size());
  std::vector<std::vector<std::uint64_t>> per_doc(corpus.documents.size());
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t d = 0; d < ndocs; ++d)
      per_doc[d] = rolling_hashes(corpus.documents[d].tokens, params);
  } else {
    for (std::ptrdiff_t d = 0; d < ndocs; ++d)
      per_doc[d] = rolling_hashes(corpus.documents[d].tokens, params);
  }

  // Scatter in document order so shard contents never depend on thread count.
  const std::size_t shards = index.shards_.size();
  std::vector<std::size_t> sizes(shards, 0);
  for (const auto& hs : per_doc)
    for (auto h : hs) ++sizes[h % shards];
  for (std::size_t s = 0; s < shards; ++s) index.shards_[s].entries.reserve(sizes[s]);
  for (std::size_t d = 0; d < per_doc.size(); ++d) {
    const auto& hs = per_doc[d];
    for (std::size_t off = 0; off < hs.size(); ++off)
      index.shards_[hs[off] % shards].entries.push_back(
          {hs[off], static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(off)});
    std::vector<std::uint64_t>().swap(per_doc[d]);
  }
  index.finalize(exec);
  return index;
}

void save_index(const DuplicateIndex& index, const std::filesystem::path& path) {
  const auto& p = index.params();
  const auto entries = index.sorted_entries();
  std::string out = "MTXI";
  io::append_le<std::uint64_t>(out, p.base);
  io::append_le<std::uint64_t>(out, p.modulus);
  io::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.window));
  io::append_le<std::uint64_t>(out, entries.size());
  out.reserve(out.size() + entries.size() * 28);
  for (const auto& e : entries) {
    io::append_le<std::uint64_t>(out, e.hash);
    io::append_le<std::uint64_t>(out, 0);  // high half of the u128 hash slot
    io::append_le<std::uint64_t>(out, index.corpus().documents[e.document].id);
    io::append_le<std::uint32_t>(out, e.offset);
  }
  io::write_file(path, out);
}

DuplicateIndex load_index(const std::filesystem::path& path, const Corpus& corpus,
                          Execution exec) {
  const std::string raw = io::read_file(path);
  const auto* b = reinterpret_cast<const unsigned char*>(raw.data());
  constexpr std::size_t kHeader = 4 + 8 + 8 + 4 + 8;
  constexpr std::size_t kEntry = 8 + 8 + 8 + 4;
  if (raw.size() < kHeader || raw.compare(0, 4, "MTXI") != 0)
    throw LoadError("malformed index header in " + path.string());
  HashParams params;
  params.base = io::read_le<std::uint64_t>(b + 4);
  params.modulus = io::read_le<std::uint64_t>(b + 12);
  params.window = io::read_le<std::uint32_t>(b + 20);
  const auto count = io::read_le<std::uint64_t>(b + 24);
  if (params.modulus == 0 || params.window == 0)
    throw LoadError("index header declares zero modulus or window");
  if ((raw.size() - kHeader) / kEntry < count || (raw.size() - kHeader) % kEntry != 0)
    throw LoadError("index body truncated: expected " + std::to_string(count) + " entries");

  std::unordered_map<std::uint64_t, std::uint32_t> position;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i)
    position.emplace(corpus.documents[i].id, static_cast<std::uint32_t>(i));

  DuplicateIndex index(corpus, params, kDefaultIndexShards);
  const std::size_t shards = index.shards_.size();
  for (std::uint64_t i = 0; i < count; ++i) {
    const unsigned char* e = b + kHeader + i * kEntry;
    const auto hash = io::read_le<std::uint64_t>(e);
    if (io::read_le<std::uint64_t>(e + 8) != 0 || hash >= params.modulus)
      throw LoadError("index entry " + std::to_string(i) + ": hash out of range");
    const auto doc_id = io::read_le<std::uint64_t>(e + 16);
    const auto offset = io::read_le<std::uint32_t>(e + 24);
    auto it = position.find(doc_id);
    if (it == position.end())
      throw LoadError("index entry " + std::to_string(i) + ": unknown document " +
                      std::to_string(doc_id));
    const auto& doc = corpus.documents[it->second];
    if (std::size_t{offset} + params.window > doc.tokens.size())
      throw LoadError("index entry " + std::to_string(i) + ": window past end of document");
    index.shards_[hash % shards].entries.push_back({hash, it->second, offset});
  }
  // Counts are rebuilt by token comparison, never trusted from the file.
  index.finalize(exec);
  return index;
}

}  // namespace memtax
