#pragma once

#include <cstdint>
#include <span>

#include "memtax/common.hpp"

namespace memtax {

// Total bit length of `tokens` under an optimal prefix code built from their
// own symbol frequencies. A one-symbol alphabet costs 1 bit per symbol.
std::uint64_t huffman_length(std::span<const TokenId> tokens);

}  // namespace memtax
