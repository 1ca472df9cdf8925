#include "memtax/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "memtax/huffman.hpp"
#include "memtax/io_util.hpp"
#include "memtax/text.hpp"

namespace memtax {

std::string to_string(Category c) {
  switch (c) {
    case Category::recitation: return "recitation";
    case Category::reconstruction: return "reconstruction";
    case Category::recollection: return "recollection";
  }
  return "?";
}

Category parse_category(std::string_view name) {
  for (auto c : kCategories)
    if (to_string(c) == name) return c;
  throw ValidationError("unknown taxonomy category '" + std::string(name) + "'");
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ArgumentError("percentile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

FrequencyStats token_frequency_stats(const std::map<TokenId, std::uint64_t>& token_counts,
                                     std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ArgumentError("frequency stats of an empty sequence");
  std::vector<double> counts;
  counts.reserve(tokens.size());
  for (TokenId t : tokens) {
    auto it = token_counts.find(t);
    counts.push_back(it == token_counts.end() ? 0.0 : static_cast<double>(it->second));
  }
  std::sort(counts.begin(), counts.end());
  FrequencyStats s;
  s.min = counts.front();
  s.max = counts.back();
  s.mean = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size());
  s.q25 = percentile_sorted(counts, 0.25);
  s.median = percentile_sorted(counts, 0.5);
  s.q75 = percentile_sorted(counts, 0.75);
  return s;
}

FeatureRecord assemble_features(const Sample& sample, std::size_t row, const FeatureContext& ctx) {
  FeatureRecord r;
  r.sample_id = sample.id;
  r.memorized = sample.memorized;
  r.modality = sample.modality;
  r.duplicate_count = ctx.index.duplicate_count(sample.continuation);
  r.prompt_duplicate_count = ctx.index.duplicate_count(sample.prompt);
  r.frequency_stats = token_frequency_stats(ctx.index.corpus().token_counts, sample.continuation);
  const auto seq = sample.sequence();
  r.huffman_bits = huffman_length(seq);
  r.template_verdict = detect_template(ctx.vocabulary.detokenize(seq));
  const auto& matches = ctx.semantic_matches[row];
  r.semantic_match_count = matches.size();
  r.textual_match_count = textual_match_count(matches, ctx.decoded_prompts, row,
                                              ctx.options.textual_relative_threshold);
  return r;
}

std::vector<FeatureRecord> featurize(std::span<const Sample> samples, const DuplicateIndex& index,
                                     const EmbeddingTable& embeddings,
                                     const Vocabulary& vocabulary, const FeatureOptions& options,
                                     Execution exec) {
  if (embeddings.rows() != samples.size())
    throw ArgumentError("embedding table has " + std::to_string(embeddings.rows()) +
                        " rows for " + std::to_string(samples.size()) + " samples");
  if (index.params().window != kContinuationLength)
    throw ArgumentError("feature assembly needs a 32-token duplicate index");
  std::vector<std::vector<char32_t>> prompts;
  prompts.reserve(samples.size());
  for (const auto& s : samples) prompts.push_back(utf8_code_points(vocabulary.detokenize(s.prompt)));
  const auto matches = semantic_match_lists(embeddings, options.semantic_threshold, exec);
  const FeatureContext ctx{index, vocabulary, matches, prompts, options};

  std::vector<FeatureRecord> records(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i)
      records[i] = assemble_features(samples[i], static_cast<std::size_t>(i), ctx);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i)
      records[i] = assemble_features(samples[i], static_cast<std::size_t>(i), ctx);
  }
  return records;
}

const std::vector<std::string>& feature_columns(bool with_taxonomy) {
  static const std::vector<std::string> base = {
      "sample_id", "memorized", "modality", "duplicate_count", "prompt_duplicate_count",
      "frequency_min", "frequency_q25", "frequency_median", "frequency_mean", "frequency_q75",
      "frequency_max", "huffman_bits", "template", "template_stride", "semantic_match_count",
      "textual_match_count", "prompt_perplexity", "continuation_perplexity", "full_perplexity"};
  static const std::vector<std::string> with = [] {
    auto v = base;
    v.push_back("taxonomy");
    return v;
  }();
  return with_taxonomy ? with : base;
}

namespace {

template <class T>
nlohmann::ordered_json opt(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("feature record missing field '") + key + "'");
  return j[key];
}

std::uint64_t get_u64(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ValidationError(std::string("feature field '") + key + "' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

double get_double(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number()) throw ValidationError(std::string("feature field '") + key + "' must be a number");
  return v.get<double>();
}

std::optional<double> get_opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return get_double(j, key);
}

}  // namespace

nlohmann::ordered_json record_to_json(const FeatureRecord& r) {
  nlohmann::ordered_json j;
  j["sample_id"] = r.sample_id;
  j["memorized"] = opt(r.memorized);
  j["modality"] = opt(r.modality);
  j["duplicate_count"] = r.duplicate_count;
  j["prompt_duplicate_count"] = r.prompt_duplicate_count;
  j["frequency_min"] = r.frequency_stats.min;
  j["frequency_q25"] = r.frequency_stats.q25;
  j["frequency_median"] = r.frequency_stats.median;
  j["frequency_mean"] = r.frequency_stats.mean;
  j["frequency_q75"] = r.frequency_stats.q75;
  j["frequency_max"] = r.frequency_stats.max;
  j["huffman_bits"] = r.huffman_bits;
  j["template"] = to_string(r.template_verdict.kind);
  j["template_stride"] = opt(r.template_verdict.stride);
  j["semantic_match_count"] = r.semantic_match_count;
  j["textual_match_count"] = r.textual_match_count;
  j["prompt_perplexity"] = opt(r.prompt_perplexity);
  j["continuation_perplexity"] = opt(r.continuation_perplexity);
  j["full_perplexity"] = opt(r.full_perplexity);
  if (r.taxonomy) j["taxonomy"] = to_string(*r.taxonomy);
  return j;
}

FeatureRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("feature record is not a JSON object");
  FeatureRecord r;
  r.sample_id = get_u64(j, "sample_id");
  r.duplicate_count = get_u64(j, "duplicate_count");
  r.prompt_duplicate_count = get_u64(j, "prompt_duplicate_count");
  r.frequency_stats.min = get_double(j, "frequency_min");
  r.frequency_stats.q25 = get_double(j, "frequency_q25");
  r.frequency_stats.median = get_double(j, "frequency_median");
  r.frequency_stats.mean = get_double(j, "frequency_mean");
  r.frequency_stats.q75 = get_double(j, "frequency_q75");
  r.frequency_stats.max = get_double(j, "frequency_max");
  r.huffman_bits = get_u64(j, "huffman_bits");
  const auto& kind = field(j, "template");
  if (!kind.is_string()) throw ValidationError("feature field 'template' must be a string");
  r.template_verdict.kind = parse_template_kind(kind.get<std::string>());
  if (j.contains("template_stride") && !j["template_stride"].is_null())
    r.template_verdict.stride = get_u64(j, "template_stride");
  if ((r.template_verdict.kind != TemplateKind::none) != r.template_verdict.stride.has_value())
    throw ValidationError("template_stride must be present exactly when template != none");
  r.semantic_match_count = get_u64(j, "semantic_match_count");
  r.textual_match_count = get_u64(j, "textual_match_count");
  r.prompt_perplexity = get_opt_double(j, "prompt_perplexity");
  r.continuation_perplexity = get_opt_double(j, "continuation_perplexity");
  r.full_perplexity = get_opt_double(j, "full_perplexity");
  if (j.contains("memorized") && !j["memorized"].is_null()) {
    if (!j["memorized"].is_boolean()) throw ValidationError("feature field 'memorized' must be boolean or null");
    r.memorized = j["memorized"].get<bool>();
  }
  if (j.contains("modality") && j["modality"].is_string()) r.modality = j["modality"].get<std::string>();
  if (j.contains("taxonomy") && !j["taxonomy"].is_null())
    r.taxonomy = parse_category(j["taxonomy"].get<std::string>());
  return r;
}

void write_feature_jsonl(std::span<const FeatureRecord> records, const nlohmann::json& meta,
                         const std::filesystem::path& path) {
  std::string out = nlohmann::json{{"_meta", meta}}.dump();
  out += '\n';
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  io::write_file(path, out);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_cell(const nlohmann::ordered_json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return format_double(v.get<double>());
  std::string s = v.get<std::string>();
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

void write_feature_csv(std::span<const FeatureRecord> records, const nlohmann::json& meta,
                       const std::filesystem::path& path) {
  const bool with_tax = !records.empty() && records.front().taxonomy.has_value();
  const auto& cols = feature_columns(with_tax);
  std::string out = "# " + meta.dump() + "\n";
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const auto& r : records) {
    const auto j = record_to_json(r);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out += ',';
      out += j.contains(cols[i]) ? csv_cell(j[cols[i]]) : "";
    }
    out += '\n';
  }
  io::write_file(path, out);
}

FeatureFile read_feature_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open feature file " + path.string());
  FeatureFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw LoadError("feature file line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.is_object() && j.contains("_meta")) {
      file.meta = j["_meta"];
      continue;
    }
    try {
      file.records.push_back(record_from_json(j));
    } catch (const ValidationError& e) {
      throw ValidationError("feature file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return file;
}

}  // namespace memtax

