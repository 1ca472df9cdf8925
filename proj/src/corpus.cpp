#include "memtax/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "memtax/io_util.hpp"

namespace memtax {

std::uint64_t Corpus::total_tokens() const {
  std::uint64_t total = 0;
  for (const auto& doc : documents) total += doc.tokens.size();
  return total;
}

std::uint64_t Corpus::count_of(TokenId token) const {
  auto it = token_counts.find(token);
  return it == token_counts.end() ? 0 : it->second;
}

CorpusFormat parse_corpus_format(const std::string& name) {
  if (name == "binary" || name == "bin") return CorpusFormat::binary;
  if (name == "jsonl") return CorpusFormat::jsonl;
  throw ArgumentError("unknown corpus format '" + name + "' (expected binary|jsonl)");
}

void recount_tokens(Corpus& corpus) {
  std::unordered_map<TokenId, std::uint64_t> counts;
  for (const auto& doc : corpus.documents)
    for (TokenId t : doc.tokens) ++counts[t];
  corpus.token_counts = std::map<TokenId, std::uint64_t>(counts.begin(), counts.end());
}

namespace {

Corpus load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open corpus file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw LoadError("malformed header at byte 0: file shorter than 16 bytes");
  if (!std::equal(bytes.begin(), bytes.begin() + 4, "MTXC"))
    throw LoadError("malformed header at byte 0: bad magic");
  const auto version = io::read_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCorpusFormatVersion)
    throw LoadError("malformed header at byte 4: unsupported version " + std::to_string(version));
  Corpus corpus;
  corpus.vocabulary_size = io::read_le<std::uint32_t>(bytes.data() + 8);
  const unsigned width = bytes[12];
  if (width != 2 && width != 4)
    throw LoadError("malformed header at byte 12: token width " + std::to_string(width));

  std::size_t pos = 16;
  std::uint64_t next_id = 0;
  std::unordered_map<TokenId, std::uint64_t> counts;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 4)
      throw LoadError("truncated document length at byte " + std::to_string(pos));
    const auto len = io::read_le<std::uint32_t>(bytes.data() + pos);
    const std::size_t body = pos + 4;
    if ((bytes.size() - body) / width < len)
      throw LoadError("truncated document " + std::to_string(next_id) + " at byte " +
                      std::to_string(pos) + ": declares " + std::to_string(len) + " tokens");
    Document doc;
    doc.id = next_id++;
    doc.tokens.resize(len);
    for (std::uint32_t i = 0; i < len; ++i) {
      const unsigned char* p = bytes.data() + body + std::size_t{i} * width;
      TokenId t = width == 2 ? io::read_le<std::uint16_t>(p) : io::read_le<std::uint32_t>(p);
      if (corpus.vocabulary_size != 0 && t >= corpus.vocabulary_size)
        throw LoadError("token " + std::to_string(t) + " >= vocabulary size " +
                        std::to_string(corpus.vocabulary_size) + " at byte " +
                        std::to_string(body + std::size_t{i} * width));
      doc.tokens[i] = t;
      ++counts[t];
    }
    pos = body + std::size_t{len} * width;
    corpus.documents.push_back(std::move(doc));
  }
  corpus.token_counts = std::map<TokenId, std::uint64_t>(counts.begin(), counts.end());
  return corpus;
}

Corpus load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open corpus file " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  TokenId max_token = 0;
  bool any = false;
  std::unordered_map<TokenId, std::uint64_t> counts;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw LoadError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("tokens") ||
        !obj["id"].is_number_unsigned() || !obj["tokens"].is_array())
      throw LoadError("line " + std::to_string(line_no) +
                      ": expected {\"id\": u64, \"tokens\": [u32...]}");
    Document doc;
    doc.id = obj["id"].get<std::uint64_t>();
    doc.tokens.reserve(obj["tokens"].size());
    for (const auto& v : obj["tokens"]) {
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xffffffffULL)
        throw LoadError("line " + std::to_string(line_no) + ": token is not a u32");
      const auto t = v.get<TokenId>();
      doc.tokens.push_back(t);
      ++counts[t];
      max_token = std::max(max_token, t);
      any = true;
    }
    if (obj.contains("modality") && obj["modality"].is_string())
      doc.modality = obj["modality"].get<std::string>();
    corpus.documents.push_back(std::move(doc));
  }
  corpus.vocabulary_size = any ? max_token + 1 : 0;
  corpus.token_counts = std::map<TokenId, std::uint64_t>(counts.begin(), counts.end());
  return corpus;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  return format == CorpusFormat::binary ? load_binary(path) : load_jsonl(path);
}

void save_corpus_binary(const Corpus& corpus, const std::filesystem::path& path,
                        unsigned token_width) {
  if (token_width != 2 && token_width != 4)
    throw ArgumentError("token width must be 2 or 4");
  std::string out = "MTXC";
  io::append_le<std::uint32_t>(out, kCorpusFormatVersion);
  io::append_le<std::uint32_t>(out, corpus.vocabulary_size);
  out.push_back(static_cast<char>(token_width));
  out.append(3, '\0');
  for (const auto& doc : corpus.documents) {
    io::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(doc.tokens.size()));
    for (TokenId t : doc.tokens) {
      if (token_width == 2) {
        if (t > 0xffff) throw ArgumentError("token " + std::to_string(t) + " does not fit 16 bits");
        io::append_le<std::uint16_t>(out, static_cast<std::uint16_t>(t));
      } else {
        io::append_le<std::uint32_t>(out, t);
      }
    }
  }
  io::write_file(path, out);
}

void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& doc : corpus.documents) {
    nlohmann::json obj = {{"id", doc.id}, {"tokens", doc.tokens}};
    if (doc.modality) obj["modality"] = *doc.modality;
    out += obj.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

std::array<TokenId, kSampleLength> Sample::sequence() const {
  std::array<TokenId, kSampleLength> seq{};
  std::copy(prompt.begin(), prompt.end(), seq.begin());
  std::copy(continuation.begin(), continuation.end(), seq.begin() + kPromptLength);
  return seq;
}

SampleExtraction extract_samples(const Corpus& corpus, std::size_t offset, bool multi_window) {
  SampleExtraction out;
  for (const auto& doc : corpus.documents) {
    if (doc.tokens.size() < offset + kSampleLength) {
      ++out.skipped_documents;
      continue;
    }
    std::uint64_t window = 0;
    for (std::size_t start = offset; start + kSampleLength <= doc.tokens.size();
         start += kSampleLength, ++window) {
      Sample s;
      s.id = multi_window ? (doc.id << 16) | window : doc.id;
      s.document = doc.id;
      s.offset = static_cast<std::uint32_t>(start);
      std::copy_n(doc.tokens.begin() + start, kPromptLength, s.prompt.begin());
      std::copy_n(doc.tokens.begin() + start + kPromptLength, kContinuationLength,
                  s.continuation.begin());
      s.modality = doc.modality;
      out.samples.push_back(std::move(s));
      if (!multi_window || window == 0xffff) break;
    }
  }
  return out;
}

std::vector<std::uint64_t> read_id_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open id list " + path.string());
  std::vector<std::uint64_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string text = line.substr(first, last - first + 1);
    if (text.find_first_not_of("0123456789") != std::string::npos)
      throw LoadError("line " + std::to_string(line_no) + ": not a decimal id: '" + text + "'");
    try {
      ids.push_back(std::stoull(text));
    } catch (const std::out_of_range&) {
      throw LoadError("line " + std::to_string(line_no) + ": id out of range");
    }
  }
  return ids;
}

void write_id_list(std::span<const std::uint64_t> ids, const std::filesystem::path& path) {
  std::string out;
  for (auto id : ids) {
    out += std::to_string(id);
    out += '\n';
  }
  io::write_file(path, out);
}

LabelReport attach_labels(std::vector<Sample>& samples,
                          std::span<const std::uint64_t> memorized_ids) {
  std::unordered_map<std::uint64_t, std::size_t> by_id;
  by_id.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].memorized = false;
    by_id.emplace(samples[i].id, i);
  }
  LabelReport report;
  std::unordered_set<std::uint64_t> seen;
  for (auto id : memorized_ids) {
    if (!seen.insert(id).second) {
      report.duplicate_ids.push_back(id);
      continue;
    }
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      report.rejected_ids.push_back(id);
      continue;
    }
    samples[it->second].memorized = true;
    ++report.labeled;
  }
  return report;
}

LabelReport attach_labels(std::vector<Sample>& samples, const std::filesystem::path& label_file) {
  const auto ids = read_id_list(label_file);
  return attach_labels(samples, ids);
}

}  // namespace memtax
