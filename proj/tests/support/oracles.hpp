#pragma once

// Slow, straightforward reference implementations used to check the
// library's optimised code paths. Nothing here calls into botscope.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace oracle {

// -- Ratcliff-Obershelp ------------------------------------------------------

/// Longest common substring by trying every (i, j) start pair; ties go to the
/// smallest i, then the smallest j.
inline std::size_t matched(std::string_view a, std::string_view b) {
  std::size_t best = 0, bi = 0, bj = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      std::size_t k = 0;
      while (i + k < a.size() && j + k < b.size() && a[i + k] == b[j + k]) ++k;
      if (k > best) {
        best = k;
        bi = i;
        bj = j;
      }
    }
  if (best == 0) return 0;
  return best + matched(a.substr(0, bi), b.substr(0, bj)) + matched(a.substr(bi + best), b.substr(bj + best));
}

inline double ratcliff_obershelp(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  return 2.0 * static_cast<double>(matched(a, b)) / static_cast<double>(a.size() + b.size());
}

// -- Wilcoxon signed-rank ----------------------------------------------------

struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
};

/// Doubled average rank of v[i] among v: 2 * (1 + #less) + (#equal - 1).
inline std::vector<std::uint64_t> doubled_ranks(const std::vector<double>& v) {
  std::vector<std::uint64_t> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t less = 0, equal = 0;
    for (double x : v) {
      if (x < v[i]) ++less;
      if (x == v[i]) ++equal;
    }
    r[i] = 2 * (1 + less) + (equal - 1);
  }
  return r;
}

struct WilcoxonOracle {
  std::size_t n = 0;
  std::uint64_t w2 = 0;  // doubled min(W+, W-)
  Rational p;
};

/// Two-sided exact p by listing all 2^n sign patterns of the non-zero
/// differences: P(min(W+, W-) <= observed).
inline WilcoxonOracle wilcoxon_enumerate(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> abs_d;
  std::vector<bool> pos;
  for (const auto& [x, y] : pairs)
    if (x != y) {
      abs_d.push_back(std::fabs(x - y));
      pos.push_back(x > y);
    }
  WilcoxonOracle out;
  out.n = abs_d.size();
  if (out.n == 0) {
    out.p = {1, 1};
    return out;
  }
  const auto ranks = doubled_ranks(abs_d);
  const std::uint64_t total = std::accumulate(ranks.begin(), ranks.end(), std::uint64_t{0});
  std::uint64_t plus = 0;
  for (std::size_t i = 0; i < out.n; ++i)
    if (pos[i]) plus += ranks[i];
  out.w2 = std::min(plus, total - plus);
  std::uint64_t count = 0;
  const std::uint64_t patterns = std::uint64_t{1} << out.n;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    std::uint64_t p = 0;
    for (std::size_t i = 0; i < out.n; ++i)
      if (mask >> i & 1) p += ranks[i];
    if (std::min(p, total - p) <= out.w2) ++count;
  }
  const auto g = std::gcd(count, patterns);
  out.p = {count / g, patterns / g};
  return out;
}

// -- Adblock filter matching ---------------------------------------------------

/// Translates a supported filter into an ECMAScript regex over the lower-cased URL.
inline std::regex abp_regex(std::string_view filter) {
  std::string body(filter);
  std::string prefix, suffix;
  if (body.rfind("||", 0) == 0) {
    body = body.substr(2);
    prefix = R"(^[a-z][a-z0-9+.\-]*://([^/?#@]*@)?([^/?#]*\.)?)";
  } else if (body.rfind("|", 0) == 0) {
    body = body.substr(1);
    prefix = "^";
  }
  if (!body.empty() && body.back() == '|') {
    body.pop_back();
    suffix = "$";
  }
  std::string re = prefix;
  for (char c : body) {
    if (c == '*') re += ".*";
    else if (c == '^') re += R"(([^a-z0-9_\-.%]|$))";
    else if (std::string_view("\\.+?()[]{}|$").find(c) != std::string_view::npos) re += std::string("\\") + c;
    else re += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  re += suffix;
  return std::regex(re);
}

inline bool abp_matches(std::string_view filter, std::string url) {
  std::transform(url.begin(), url.end(), url.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::regex_search(url, abp_regex(filter));
}

// -- Guarded token -------------------------------------------------------------

/// Offsets of "webdriver" not preceded or followed by '_' or '-'.
inline std::vector<std::size_t> guarded_webdriver(std::string_view text) {
  std::vector<std::size_t> out;
  const std::string_view token = "webdriver";
  for (std::size_t i = 0; i + token.size() <= text.size(); ++i) {
    if (text.substr(i, token.size()) != token) continue;
    const bool before = i > 0 && (text[i - 1] == '_' || text[i - 1] == '-');
    const bool after = i + token.size() < text.size() && (text[i + token.size()] == '_' || text[i + token.size()] == '-');
    if (!before && !after) out.push_back(i);
  }
  return out;
}

}  // namespace oracle
