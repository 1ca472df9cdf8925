#include "memtax/matching.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include <json.hpp>

#include "memtax/io_util.hpp"
#include "memtax/rng.hpp"
#include "memtax/text.hpp"

namespace memtax {

Vocabulary::Vocabulary(std::unordered_map<TokenId, std::string> entries)
    : entries_(std::move(entries)) {}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open vocabulary " + path.string());
  std::unordered_map<TokenId, std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      entries[obj.at("id").get<TokenId>()] = obj.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("vocabulary line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return Vocabulary(std::move(entries));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::vector<TokenId> ids;
  ids.reserve(entries_.size());
  for (const auto& [id, _] : entries_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  std::string out;
  for (auto id : ids) {
    out += nlohmann::json{{"id", id}, {"text", entries_.at(id)}}.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

const std::string& Vocabulary::text(TokenId id) const {
  auto it = entries_.find(id);
  if (it == entries_.end())
    throw LoadError("detokenization failed: token " + std::to_string(id) +
                    " has no vocabulary entry");
  return it->second;
}

std::string Vocabulary::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens) out += text(t);
  return out;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  const std::string raw = io::read_file(path);
  const auto* b = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 16 || raw.compare(0, 4, "MTXE") != 0)
    throw LoadError("malformed embedding header in " + path.string());
  EmbeddingTable table;
  table.dim = io::read_le<std::uint32_t>(b + 4);
  const auto count = io::read_le<std::uint64_t>(b + 8);
  if (table.dim == 0) throw LoadError("embedding file declares dimension 0");
  if ((raw.size() - 16) != count * table.dim * 4)
    throw LoadError("embedding body size does not match " + std::to_string(count) + " x " +
                    std::to_string(table.dim) + " floats");
  table.values.resize(count * table.dim);
  for (std::size_t i = 0; i < table.values.size(); ++i)
    table.values[i] = io::read_f32_le(b + 16 + 4 * i);
  return table;
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::string out = "MTXE";
  io::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim));
  io::append_le<std::uint64_t>(out, table.rows());
  for (float v : table.values) io::append_f32_le(out, v);
  io::write_file(path, out);
}

EmbeddingTable hashed_bag_embeddings(std::span<const Sample> samples, std::size_t dim) {
  if (dim == 0) throw ArgumentError("embedding dimension must be positive");
  EmbeddingTable table;
  table.dim = dim;
  table.values.assign(samples.size() * dim, 0.0f);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    float* row = table.values.data() + i * dim;
    for (TokenId t : samples[i].sequence()) {
      const auto h = mix64(t);
      row[h % dim] += (h >> 63) ? 1.0f : -1.0f;
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < dim; ++k) norm += double{row[k]} * row[k];
    if (norm > 0.0) {
      const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
      for (std::size_t k = 0; k < dim; ++k) row[k] *= inv;
    }
  }
  return table;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw ArgumentError("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += double{a[k]} * b[k];
    na += double{a[k]} * a[k];
    nb += double{b[k]} * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::size_t semantic_match_count(const EmbeddingTable& table, std::size_t query,
                                 double threshold) {
  if (query >= table.rows()) throw ArgumentError("query row out of range");
  std::size_t count = 0;
  const auto q = table.row(query);
  for (std::size_t j = 0; j < table.rows(); ++j)
    if (j != query && cosine(q, table.row(j)) >= threshold - kCosineSlack) ++count;
  return count;
}

std::vector<std::vector<std::uint32_t>> semantic_match_lists(const EmbeddingTable& table,
                                                             double threshold, Execution exec) {
  const std::size_t n = table.rows();
  std::vector<double> norms(n);  // squared, matching cosine()
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (float v : table.row(i)) s += double{v} * v;
    norms[i] = s;
  }
  std::vector<std::vector<std::uint32_t>> lists(n);
  const double cut = threshold - kCosineSlack;
  const auto exact = [&](std::size_t i, std::size_t j) {
    const float* a = table.values.data() + i * table.dim;
    const float* b = table.values.data() + j * table.dim;
    double dot = 0.0;
    for (std::size_t k = 0; k < table.dim; ++k) dot += double{a[k]} * b[k];
    return dot / std::sqrt(norms[i] * norms[j]) >= cut;
  };
  if (exec == Execution::serial) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && norms[i] != 0.0 && norms[j] != 0.0 && exact(i, j))
          lists[i].push_back(static_cast<std::uint32_t>(j));
    return lists;
  }
  // Single-precision Gram blocks screen out pairs well below the cut; every
  // survivor is decided by the same double-precision test as the serial scan.
  // Float dot products of 256-dimensional rows err by far less than the margin.
  constexpr double kScreenMargin = 1e-3;
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> E(table.values.data(), static_cast<Eigen::Index>(n),
                                     static_cast<Eigen::Index>(table.dim));
  constexpr std::size_t kBlock = 128;
  const auto blocks = static_cast<std::ptrdiff_t>((n + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t lo = static_cast<std::size_t>(blk) * kBlock, hi = std::min(n, lo + kBlock);
    const Eigen::MatrixXf G = E.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)) * E.transpose();
    for (std::size_t i = lo; i < hi; ++i) {
      if (norms[i] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || norms[j] == 0.0) continue;
        const double approx = G(static_cast<Eigen::Index>(i - lo), static_cast<Eigen::Index>(j)) / std::sqrt(norms[i] * norms[j]);
        if (approx >= cut - kScreenMargin && exact(i, j)) lists[i].push_back(static_cast<std::uint32_t>(j));
      }
    }
  }
  return lists;
}

std::size_t textual_match_count(std::span<const std::uint32_t> matches,
                                std::span<const std::vector<char32_t>> prompts, std::size_t query,
                                double relative_threshold) {
  const auto& q = prompts[query];
  const LevenshteinPattern pattern(q);
  std::size_t count = 0;
  for (auto m : matches) {
    const auto& other = prompts[m];
    const double limit = relative_threshold * static_cast<double>(std::max(q.size(), other.size()));
    const double gap = static_cast<double>(q.size() > other.size() ? q.size() - other.size() : other.size() - q.size());
    if (gap > limit) continue;  // the distance is at least the length difference
    if (static_cast<double>(pattern.distance(other)) <= limit) ++count;
  }
  return count;
}

std::size_t textual_match_count(std::span<const std::uint32_t> matches,
                                std::span<const std::string> prompts, std::size_t query,
                                double relative_threshold) {
  std::vector<std::vector<char32_t>> decoded(prompts.size());
  decoded[query] = utf8_code_points(prompts[query]);
  for (auto m : matches) decoded[m] = utf8_code_points(prompts[m]);
  return textual_match_count(matches, decoded, query, relative_threshold);
}

}  // namespace memtax
