#include "memtax/feature_vector.hpp"

#include <cmath>

namespace memtax {

const std::vector<std::string>& model_feature_names() {
  static const std::vector<std::string> names = {
      "duplicate_count",      "prompt_duplicate_count", "frequency_min",
      "frequency_q25",        "frequency_median",       "frequency_mean",
      "frequency_q75",        "frequency_max",          "huffman_bits",
      "template_repeating",   "template_incrementing",  "semantic_match_count",
      "textual_match_count",  "prompt_perplexity",      "continuation_perplexity",
      "full_perplexity"};
  return names;
}

std::size_t model_feature_index(const std::string& name) {
  const auto& names = model_feature_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ArgumentError("unknown model feature '" + name + "'");
}

std::vector<double> model_features(const FeatureRecord& r) {
  const auto count = [](double c) { return std::log1p(c); };
  const auto ppl = [&r](const std::optional<double>& v, const char* name) {
    if (!v) throw ValidationError("sample " + std::to_string(r.sample_id) + " has no " + name);
    return std::log(*v);
  };
  const auto& f = r.frequency_stats;
  return {count(static_cast<double>(r.duplicate_count)),
          count(static_cast<double>(r.prompt_duplicate_count)),
          count(f.min),
          count(f.q25),
          count(f.median),
          count(f.mean),
          count(f.q75),
          count(f.max),
          static_cast<double>(r.huffman_bits),
          r.template_verdict.kind == TemplateKind::repeating ? 1.0 : 0.0,
          r.template_verdict.kind == TemplateKind::incrementing ? 1.0 : 0.0,
          count(static_cast<double>(r.semantic_match_count)),
          count(static_cast<double>(r.textual_match_count)),
          ppl(r.prompt_perplexity, "prompt_perplexity"),
          ppl(r.continuation_perplexity, "continuation_perplexity"),
          ppl(r.full_perplexity, "full_perplexity")};
}

}  // namespace memtax
