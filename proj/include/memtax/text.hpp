#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace memtax {

// Decodes UTF-8 into code points. Invalid bytes decode as themselves so that
// arbitrary byte strings still get a well-defined character sequence.
std::vector<char32_t> utf8_code_points(std::string_view text);

// Character-level edit distance (insert/delete/substitute, unit costs).
std::size_t levenshtein(std::string_view a, std::string_view b);
std::size_t levenshtein(const std::vector<char32_t>& a, const std::vector<char32_t>& b);

// Bit-parallel edit distance against a fixed pattern (Myers' algorithm in
// Hyyro's multi-word form). Same results as levenshtein(), built once per
// pattern and reused across many texts.
class LevenshteinPattern {
 public:
  explicit LevenshteinPattern(const std::vector<char32_t>& pattern);

  std::size_t distance(const std::vector<char32_t>& text) const;
  std::size_t size() const { return length_; }

 private:
  const std::uint64_t* masks(char32_t c) const;

  std::size_t length_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> low_;    // words_ per code point below 256
  std::vector<char32_t> symbols_;     // sorted distinct pattern code points from 256 up
  std::vector<std::uint64_t> masks_;  // words_ per symbol, bit i set where pattern[i] == symbol
};

}  // namespace memtax
