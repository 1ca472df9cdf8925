#include "memtax/template_detect.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>

#include "memtax/common.hpp"
#include "memtax/text.hpp"

namespace memtax {

std::string to_string(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::repeating: return "repeating";
    case TemplateKind::incrementing: return "incrementing";
    case TemplateKind::none: break;
  }
  return "none";
}

TemplateKind parse_template_kind(std::string_view name) {
  if (name == "none") return TemplateKind::none;
  if (name == "repeating") return TemplateKind::repeating;
  if (name == "incrementing") return TemplateKind::incrementing;
  throw ValidationError("unknown template kind '" + std::string(name) + "'");
}

namespace {

constexpr std::size_t kMinNumerals = 3;

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

int digit_value(char c) {
  if (is_digit(c)) return c - '0';
  return std::tolower(static_cast<unsigned char>(c)) - 'a' + 10;
}

int prefix_base(char c) {
  switch (c) {
    case 'x': case 'X': return 16;
    case 'b': case 'B': return 2;
    case 'o': case 'O': return 8;
    default: return 0;
  }
}

bool valid_digit(char c, int base) {
  if (base == 16) return is_hex(c);
  if (base == 8) return c >= '0' && c <= '7';
  return c == '0' || c == '1';
}

// Rewrites 0x.., 0b.., 0o.. literals that stand alone inside a split.
std::string convert_prefixed_numerals(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '0' && i + 1 < s.size() && (i == 0 || !is_alnum(s[i - 1]))) {
      const int base = prefix_base(s[i + 1]);
      if (base != 0) {
        std::size_t k = i + 2;
        while (k < s.size() && valid_digit(s[k], base)) ++k;
        if (k > i + 2 && (k == s.size() || !is_alnum(s[k]))) {
          unsigned __int128 v = 0;
          bool overflow = false;
          for (std::size_t j = i + 2; j < k && !overflow; ++j) {
            v = v * static_cast<unsigned>(base) + static_cast<unsigned>(digit_value(s[j]));
            overflow = v > UINT64_MAX;
          }
          if (!overflow) {
            out += std::to_string(static_cast<std::uint64_t>(v));
            i = k;
            continue;
          }
        }
      }
    }
    out.push_back(s[i++]);
  }
  return out;
}

std::string remove_escapes(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char c = s[i + 1];
      if (std::string_view("ntrvfab0\\'\"").find(c) != std::string_view::npos) {
        i += 2;
        continue;
      }
      const std::size_t hex_len = c == 'x' ? 2 : c == 'u' ? 4 : 0;
      if (hex_len != 0 && i + 2 + hex_len <= s.size()) {
        bool all_hex = true;
        for (std::size_t k = 0; k < hex_len; ++k) all_hex = all_hex && is_hex(s[i + 2 + k]);
        if (all_hex) {
          i += 2 + hex_len;
          continue;
        }
      }
    }
    out.push_back(s[i++]);
  }
  return out;
}

void segment(std::string_view s, std::vector<TemplateSplit>& out) {
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    if (is_digit(s[i])) {
      while (j < s.size() && is_digit(s[j])) ++j;
      if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
        ++j;
        while (j < s.size() && is_digit(s[j])) ++j;
      }
      TemplateSplit split;
      split.numeral = true;
      split.text = std::string(s.substr(i, j - i));
      split.value = std::strtod(split.text.c_str(), nullptr);
      out.push_back(std::move(split));
    } else {
      while (j < s.size() && !is_digit(s[j])) ++j;
      out.push_back({false, 0.0, std::string(s.substr(i, j - i))});
    }
    i = j;
  }
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool nearly_equal(double a, double b) {
  return std::fabs(a - b) <= 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)});
}

enum class Iteration { neither, repeating, zero_difference, incrementing };

Iteration classify_iteration(const std::vector<TemplateSplit>& splits, std::size_t start,
                             std::size_t step) {
  bool any_text = false, any_numeral = false;
  for (std::size_t i = start; i < splits.size(); i += step)
    (splits[i].numeral ? any_numeral : any_text) = true;
  if (any_text && any_numeral) return Iteration::neither;
  if (any_text) {
    for (std::size_t i = start + step; i < splits.size(); i += step)
      if (splits[i].text != splits[start].text) return Iteration::neither;
    return Iteration::repeating;
  }
  const std::size_t second = start + step;
  if (second >= splits.size()) return Iteration::neither;
  const double diff = splits[second].value - splits[start].value;
  for (std::size_t i = second; i + step < splits.size(); i += step)
    if (!nearly_equal(splits[i + step].value - splits[i].value, diff)) return Iteration::neither;
  return nearly_equal(splits[second].value, splits[start].value) ? Iteration::zero_difference
                                                                 : Iteration::incrementing;
}

}  // namespace

std::vector<TemplateSplit> numeral_splits(std::string_view text) {
  std::vector<TemplateSplit> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) segment(remove_escapes(convert_prefixed_numerals(text.substr(i, j - i))), out);
    i = j;
  }
  return out;
}

std::vector<TemplateSplit> character_splits(std::string_view text) {
  std::vector<TemplateSplit> out;
  for (char32_t cp : utf8_code_points(text)) {
    TemplateSplit s;
    s.text = std::string(reinterpret_cast<const char*>(&cp), sizeof cp);
    out.push_back(std::move(s));
  }
  return out;
}

StrideVerdict classify_stride(const std::vector<TemplateSplit>& splits, std::size_t stride) {
  StrideVerdict v;
  v.stride = stride;
  if (stride == 0 || 2 * stride >= splits.size()) return v;
  bool all_repeating = true, any_incrementing = false, only_zero_difference = true;
  for (std::size_t p = 0; p < stride; ++p) {
    switch (classify_iteration(splits, p, stride)) {
      case Iteration::neither: return v;
      case Iteration::repeating: only_zero_difference = false; break;
      case Iteration::zero_difference: break;
      case Iteration::incrementing:
        all_repeating = false;
        any_incrementing = true;
        break;
    }
  }
  if (all_repeating) {
    v.kind = TemplateKind::repeating;
    v.zero_difference_only = only_zero_difference;
  } else if (any_incrementing) {
    v.kind = TemplateKind::incrementing;
  }
  return v;
}

namespace {

// First repeating length wins unless it repeats only through zero-difference
// progressions, in which case a later incrementing length takes over.
std::optional<StrideVerdict> scan_numerals(const std::vector<TemplateSplit>& splits) {
  std::size_t numerals = 0;
  for (const auto& s : splits) numerals += s.numeral ? 1 : 0;
  if (numerals < kMinNumerals) return std::nullopt;
  std::optional<StrideVerdict> weak_repeat;
  for (std::size_t t = 1; 2 * t < splits.size(); ++t) {
    const auto v = classify_stride(splits, t);
    if (v.kind == TemplateKind::incrementing) return v;
    if (v.kind == TemplateKind::repeating) {
      if (!v.zero_difference_only) return v;
      if (!weak_repeat) weak_repeat = v;
    }
  }
  return weak_repeat;
}

std::optional<std::size_t> scan_characters(const std::vector<TemplateSplit>& splits) {
  for (std::size_t t = 1; 2 * t < splits.size(); ++t)
    if (classify_stride(splits, t).kind == TemplateKind::repeating) return t;
  return std::nullopt;
}

}  // namespace

TemplateVerdict detect_template(std::string_view text) {
  if (auto t = scan_characters(character_splits(text)))
    return {TemplateKind::repeating, *t};
  if (auto v = scan_numerals(numeral_splits(text))) return {v->kind, v->stride};
  return {};
}

}  // namespace memtax
