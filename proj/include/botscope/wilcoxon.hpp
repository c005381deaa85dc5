#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

namespace botscope {

enum class WilcoxonMethod { exact, normal_approx };

inline std::string_view to_string(WilcoxonMethod m) { return m == WilcoxonMethod::exact ? "exact" : "normal_approx"; }

/// p as a reduced fraction; available for the exact method.
struct Fraction {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;

  friend bool operator==(const Fraction&, const Fraction&) = default;
};

inline Fraction reduce(Fraction f) {
  const auto g = std::gcd(f.numerator, f.denominator);
  if (g > 1) {
    f.numerator /= g;
    f.denominator /= g;
  }
  return f;
}

struct WilcoxonResult {
  std::size_t n_effective = 0;
  double w_statistic = 0.0;  // min(W+, W-); a multiple of 0.5
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_two_sided = 1.0;
  WilcoxonMethod method = WilcoxonMethod::exact;
  std::optional<Fraction> p_exact;
};

inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Average ranks of |d| doubled so that tied ranks stay integral.
inline std::vector<std::uint64_t> doubled_ranks(const std::vector<double>& abs_diffs) {
  const std::size_t n = abs_diffs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return abs_diffs[x] < abs_diffs[y]; });
  std::vector<std::uint64_t> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]]) ++j;
    // positions i..j (0-based) share rank ((i+1)+(j+1))/2
    const std::uint64_t doubled = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = doubled;
    i = j + 1;
  }
  return ranks;
}

/// Two-sided Wilcoxon signed-rank test on differences x - y. Zero differences
/// are dropped, ties receive average ranks. Up to kWilcoxonExactLimit
/// non-zero pairs the null distribution of W+ is counted exactly over all
/// 2^n sign assignments; beyond that a normal approximation with tie and
/// continuity correction is used.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("wilcoxon_signed_rank: no pairs");
  std::vector<double> abs_diffs;
  std::vector<bool> positive;
  for (const auto& [x, y] : pairs) {
    const double d = x - y;
    if (d == 0.0) continue;
    abs_diffs.push_back(std::fabs(d));
    positive.push_back(d > 0);
  }
  WilcoxonResult r;
  r.n_effective = abs_diffs.size();
  if (r.n_effective == 0) {
    r.p_exact = Fraction{1, 1};
    return r;
  }

  const auto ranks = doubled_ranks(abs_diffs);
  std::uint64_t plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    total2 += ranks[i];
    if (positive[i]) plus2 += ranks[i];
  }
  const std::uint64_t minus2 = total2 - plus2;
  const std::uint64_t w2 = std::min(plus2, minus2);
  r.w_plus = static_cast<double>(plus2) / 2.0;
  r.w_minus = static_cast<double>(minus2) / 2.0;
  r.w_statistic = static_cast<double>(w2) / 2.0;
  const std::size_t n = r.n_effective;

  if (n <= kWilcoxonExactLimit) {
    // counts[s] = number of sign assignments whose doubled W+ equals s
    std::vector<std::uint64_t> counts(total2 + 1, 0);
    counts[0] = 1;
    std::uint64_t reach = 0;
    for (const auto rank : ranks) {
      for (std::uint64_t s = reach + 1; s-- > 0;)
        if (counts[s]) counts[s + rank] += counts[s];
      reach += rank;
    }
    std::uint64_t extreme = 0;
    for (std::uint64_t s = 0; s <= total2; ++s)
      if (std::min(s, total2 - s) <= w2) extreme += counts[s];
    r.method = WilcoxonMethod::exact;
    r.p_exact = reduce({extreme, std::uint64_t{1} << n});
    r.p_two_sided = static_cast<double>(extreme) / static_cast<double>(std::uint64_t{1} << n);
    return r;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1) / 4.0;
  double tie_term = 0.0;
  {
    auto sorted = abs_diffs;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double variance = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
  r.method = WilcoxonMethod::normal_approx;
  if (variance <= 0) {
    r.p_two_sided = 1.0;
    return r;
  }
  const double z = std::max(0.0, std::fabs(r.w_statistic - mean) - 0.5) / std::sqrt(variance);
  r.p_two_sided = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return r;
}

}  // namespace botscope
