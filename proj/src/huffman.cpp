#include "memtax/huffman.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <unordered_map>
#include <vector>

namespace memtax {

std::uint64_t huffman_length(std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ArgumentError("huffman_length of an empty sequence");
  std::unordered_map<TokenId, std::uint64_t> freq;
  for (TokenId t : tokens) ++freq[t];
  if (freq.size() == 1) return tokens.size();

  std::vector<std::uint64_t> weights;
  weights.reserve(freq.size());
  for (const auto& [_, w] : freq) weights.push_back(w);
  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>, std::greater<>> heap(
      std::greater<>{}, std::move(weights));
  // Each merge pushes every symbol below it one level deeper, so the encoded
  // length is the sum of all merged weights.
  std::uint64_t bits = 0;
  while (heap.size() > 1) {
    const auto a = heap.top();
    heap.pop();
    const auto b = heap.top();
    heap.pop();
    bits += a + b;
    heap.push(a + b);
  }
  return bits;
}

}  // namespace memtax
