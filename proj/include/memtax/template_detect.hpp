#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memtax {

enum class TemplateKind { none, repeating, incrementing };

std::string to_string(TemplateKind kind);
TemplateKind parse_template_kind(std::string_view name);

struct TemplateVerdict {
  TemplateKind kind = TemplateKind::none;
  std::optional<std::size_t> stride;  // set iff kind != none

  friend bool operator==(const TemplateVerdict&, const TemplateVerdict&) = default;
};

// One element of a split sequence: either a numeral or a run of text.
struct TemplateSplit {
  bool numeral = false;
  double value = 0.0;
  std::string text;
};

// Incrementing-pipeline preprocessing: whitespace split, prefixed non-decimal
// literals (0x / 0b / 0o) rewritten in base 10, backslash escapes removed,
// digit runs separated from other characters, "12.5" joined as one numeral.
std::vector<TemplateSplit> numeral_splits(std::string_view text);

// Repeating-pipeline preprocessing: one split per character.
std::vector<TemplateSplit> character_splits(std::string_view text);

struct StrideVerdict {
  TemplateKind kind = TemplateKind::none;
  std::size_t stride = 0;
  // Repeating only because every iteration was a constant numeral run.
  bool zero_difference_only = false;
};

// Classifies one templating length: every start position below `stride` is
// walked with step `stride`.
StrideVerdict classify_stride(const std::vector<TemplateSplit>& splits, std::size_t stride);

// Repeating vs incrementing verdict over the full text; see the README for
// the precedence between the two pipelines.
TemplateVerdict detect_template(std::string_view text);

}  // namespace memtax
