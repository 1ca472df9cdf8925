#include "memtax/text.hpp"

#include <algorithm>
#include <numeric>

namespace memtax {

std::vector<char32_t> utf8_code_points(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if (c >= 0xf0 && c < 0xf8) len = 4, cp = c & 0x07;
    else if (c >= 0xe0) len = 3, cp = c & 0x0f;
    else if (c >= 0xc0) len = 2, cp = c & 0x1f;
    bool ok = c < 0x80 || (len > 1 && c < 0xf8 && i + len <= text.size());
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xc0) != 0x80) ok = false;
      else cp = (cp << 6) | (cc & 0x3f);
    }
    if (!ok) {
      out.push_back(c);
      ++i;
    } else {
      out.push_back(cp);
      i += c < 0x80 ? 1 : len;
    }
  }
  return out;
}

std::size_t levenshtein(const std::vector<char32_t>& a, const std::vector<char32_t>& b) {
  const auto& s = a.size() < b.size() ? b : a;
  const auto& t = a.size() < b.size() ? a : b;
  std::vector<std::size_t> row(t.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i + 1;
    for (std::size_t j = 0; j < t.size(); ++j) {
      const std::size_t up = row[j + 1];
      row[j + 1] = s[i] == t[j] ? diag : 1 + std::min({diag, up, row[j]});
      diag = up;
    }
  }
  return row[t.size()];
}

LevenshteinPattern::LevenshteinPattern(const std::vector<char32_t>& pattern)
    : length_(pattern.size()), words_((pattern.size() + 63) / 64), low_(256 * words_, 0) {
  for (char32_t c : pattern)
    if (c >= 256) symbols_.push_back(c);
  std::sort(symbols_.begin(), symbols_.end());
  symbols_.erase(std::unique(symbols_.begin(), symbols_.end()), symbols_.end());
  masks_.assign(symbols_.size() * words_, 0);
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const std::uint64_t bit = std::uint64_t{1} << (i % 64);
    if (pattern[i] < 256) {
      low_[pattern[i] * words_ + i / 64] |= bit;
      continue;
    }
    const auto s = static_cast<std::size_t>(
        std::lower_bound(symbols_.begin(), symbols_.end(), pattern[i]) - symbols_.begin());
    masks_[s * words_ + i / 64] |= bit;
  }
}

const std::uint64_t* LevenshteinPattern::masks(char32_t c) const {
  if (c < 256) return low_.data() + c * words_;
  const auto it = std::lower_bound(symbols_.begin(), symbols_.end(), c);
  if (it == symbols_.end() || *it != c) return nullptr;
  return masks_.data() + static_cast<std::size_t>(it - symbols_.begin()) * words_;
}

std::size_t LevenshteinPattern::distance(const std::vector<char32_t>& text) const {
  if (length_ == 0) return text.size();
  // Vertical deltas of the DP column per block, plus the bottom cell.
  std::vector<std::uint64_t> vp(words_, ~std::uint64_t{0}), vn(words_, 0);
  const std::uint64_t last = std::uint64_t{1} << ((length_ - 1) % 64);
  std::size_t dist = length_;
  for (char32_t c : text) {
    const std::uint64_t* eq = masks(c);
    std::uint64_t hp_carry = 1, hn_carry = 0;  // top row grows by one per text char
    for (std::size_t w = 0; w < words_; ++w) {
      const std::uint64_t pm = eq ? eq[w] : 0;
      const std::uint64_t x = pm | hn_carry;
      const std::uint64_t d0 = (((x & vp[w]) + vp[w]) ^ vp[w]) | x | vn[w];
      std::uint64_t hp = vn[w] | ~(d0 | vp[w]);
      std::uint64_t hn = d0 & vp[w];
      if (w + 1 == words_) {
        if (hp & last) ++dist;
        if (hn & last) --dist;
      }
      const std::uint64_t hp_in = hp_carry, hn_in = hn_carry;
      hp_carry = hp >> 63;
      hn_carry = hn >> 63;
      hp = (hp << 1) | hp_in;
      hn = (hn << 1) | hn_in;
      vp[w] = hn | ~(d0 | hp);
      vn[w] = hp & d0;
    }
  }
  return dist;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8_code_points(a), utf8_code_points(b));
}

}  // namespace memtax
