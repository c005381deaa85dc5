#pragma once

#include <algorithm>
#include <cstddef>
#include <string_view>
#include <tuple>
#include <vector>

namespace botscope {

struct MatchingBlock {
  std::size_t a_pos = 0;
  std::size_t b_pos = 0;
  std::size_t length = 0;
};

/// Longest common substring of a[alo, ahi) and b[blo, bhi). Among equally long
/// candidates the one starting leftmost in a wins, then leftmost in b.
inline MatchingBlock longest_match(std::string_view a, std::size_t alo, std::size_t ahi, std::string_view b,
                                   std::size_t blo, std::size_t bhi) {
  MatchingBlock best{alo, blo, 0};
  if (alo >= ahi || blo >= bhi) return best;
  // run[j - blo + 1] = length of the common suffix ending at a[i], b[j]
  std::vector<std::size_t> prev(bhi - blo + 1, 0), cur(bhi - blo + 1, 0);
  for (std::size_t i = alo; i < ahi; ++i) {
    for (std::size_t j = blo; j < bhi; ++j) {
      const std::size_t k = j - blo + 1;
      if (a[i] == b[j]) {
        cur[k] = prev[k - 1] + 1;
        if (cur[k] > best.length) best = {i + 1 - cur[k], j + 1 - cur[k], cur[k]};
      } else {
        cur[k] = 0;
      }
    }
    std::swap(prev, cur);
  }
  return best;
}

/// Matching blocks of the gestalt (Ratcliff-Obershelp) method in a-order:
/// take the longest match, then recurse on the pieces left and right of it.
inline std::vector<MatchingBlock> matching_blocks(std::string_view a, std::string_view b) {
  std::vector<MatchingBlock> blocks;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> stack = {{0, a.size(), 0, b.size()}};
  while (!stack.empty()) {
    const auto [alo, ahi, blo, bhi] = stack.back();
    stack.pop_back();
    const auto m = longest_match(a, alo, ahi, b, blo, bhi);
    if (m.length == 0) continue;
    blocks.push_back(m);
    stack.emplace_back(m.a_pos + m.length, ahi, m.b_pos + m.length, bhi);
    stack.emplace_back(alo, m.a_pos, blo, m.b_pos);
  }
  std::sort(blocks.begin(), blocks.end(), [](const MatchingBlock& x, const MatchingBlock& y) { return x.a_pos < y.a_pos; });
  return blocks;
}

inline std::size_t matched_characters(std::string_view a, std::string_view b) {
  std::size_t total = 0;
  for (const auto& m : matching_blocks(a, b)) total += m.length;
  return total;
}

/// 2M / (|a| + |b|), with M the total length of the matching blocks.
/// Two empty strings are identical (1.0).
inline double ratcliff_obershelp(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  return 2.0 * static_cast<double>(matched_characters(a, b)) / static_cast<double>(a.size() + b.size());
}

}  // namespace botscope
