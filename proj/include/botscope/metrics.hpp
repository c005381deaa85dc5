#pragma once

// Run-to-run comparison: tracking-cookie criteria, request resource-type
// deltas, paired first/third-party significance tests and blocklist shares.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "botscope/blocklist.hpp"
#include "botscope/corpus.hpp"
#include "botscope/similarity.hpp"
#include "botscope/wilcoxon.hpp"

namespace botscope {

// ---------------------------------------------------------------------------
// Tracking cookies

inline constexpr double kDefaultCookieSimilarityThreshold = 0.66;
inline constexpr std::size_t kMinTrackingCookieLength = 8;

struct CookieAssessment {
  bool persistent = false;    // not a session cookie
  bool long_enough = false;   // every value >= 8 characters, quotes excluded
  bool always_set = false;    // present on every visit
  bool values_differ = false; // min pairwise similarity < threshold
  std::optional<double> min_similarity;

  bool tracking() const { return persistent && long_enough && always_set && values_differ; }
};

/// Removes one layer of surrounding double quotes.
inline std::string_view unquote_cookie(std::string_view v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

inline CookieAssessment assess_cookie(const CookieObservation& obs, double threshold = kDefaultCookieSimilarityThreshold) {
  CookieAssessment a;
  a.persistent = !obs.is_session;
  a.always_set = !obs.values_per_visit.empty() &&
                 std::all_of(obs.values_per_visit.begin(), obs.values_per_visit.end(),
                             [](const auto& v) { return v.has_value(); });

  std::vector<std::string_view> values;
  for (const auto& v : obs.values_per_visit)
    if (v) values.push_back(unquote_cookie(*v));
  a.long_enough = !values.empty() && std::all_of(values.begin(), values.end(), [](std::string_view v) {
    return v.size() >= kMinTrackingCookieLength;
  });
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      const double s = ratcliff_obershelp(values[i], values[j]);
      if (!a.min_similarity || s < *a.min_similarity) a.min_similarity = s;
    }
  a.values_differ = a.min_similarity && *a.min_similarity < threshold;
  return a;
}

inline bool classify_tracking_cookie(const CookieObservation& obs, double threshold = kDefaultCookieSimilarityThreshold) {
  return assess_cookie(obs, threshold).tracking();
}

// ---------------------------------------------------------------------------
// Run comparison

/// (b - a) / a in percent; undefined for a == 0.
inline std::optional<double> percent_diff(double a, double b) {
  if (a == 0) return std::nullopt;
  return (b - a) / a * 100.0;
}

struct ResourceTypeRow {
  std::string resource_type;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  std::optional<double> diff_pct;
};

struct PartyComparison {
  WilcoxonResult test;
  std::size_t sites = 0;
  std::size_t more_in_a = 0;
  std::size_t more_in_b = 0;
};

struct BlocklistShare {
  double ads_a = 0, ads_b = 0;            // EasyList share of requests
  double trackers_a = 0, trackers_b = 0;  // EasyPrivacy share of requests
};

struct RunComparison {
  std::vector<ResourceTypeRow> rows;  // by |diff| descending, undefined last
  ResourceTypeRow total;
  std::optional<PartyComparison> first_party;
  std::optional<PartyComparison> third_party;
  std::optional<BlocklistShare> share;
};

inline std::vector<ResourceTypeRow> resource_type_rows(const std::map<std::string, std::pair<std::size_t, std::size_t>>& counts) {
  std::vector<ResourceTypeRow> rows;
  for (const auto& [type, c] : counts)
    rows.push_back({type, c.first, c.second, percent_diff(static_cast<double>(c.first), static_cast<double>(c.second))});
  std::stable_sort(rows.begin(), rows.end(), [](const ResourceTypeRow& x, const ResourceTypeRow& y) {
    if (x.diff_pct.has_value() != y.diff_pct.has_value()) return x.diff_pct.has_value();
    if (!x.diff_pct) return false;
    return std::fabs(*x.diff_pct) > std::fabs(*y.diff_pct);
  });
  return rows;
}

namespace detail {

inline std::optional<PartyComparison> compare_party(const std::map<std::string, std::pair<double, double>>& per_site) {
  if (per_site.empty()) return std::nullopt;
  PartyComparison pc;
  std::vector<std::pair<double, double>> pairs;
  for (const auto& [site, c] : per_site) {
    pairs.push_back(c);
    if (c.first > c.second) ++pc.more_in_a;
    if (c.second > c.first) ++pc.more_in_b;
  }
  pc.sites = pairs.size();
  pc.test = wilcoxon_signed_rank(pairs);
  return pc;
}

}  // namespace detail

/// Compares two crawl runs of the same site list. Sites seen in either run
/// are paired (absent = 0 requests). Requests with unknown party are left out
/// of the party tests. Ad and tracker shares are computed when both lists
/// are given; each list is matched on its own.
inline RunComparison compare_runs(const std::vector<RequestRecord>& a, const std::vector<RequestRecord>& b,
                                  const Blocklist* easylist = nullptr, const Blocklist* easyprivacy = nullptr) {
  RunComparison out;
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_type;
  std::map<std::string, std::pair<double, double>> first, third;
  std::set<std::string> sites;
  for (const auto& r : a) sites.insert(r.site);
  for (const auto& r : b) sites.insert(r.site);
  for (const auto& s : sites) {
    first[s] = {0, 0};
    third[s] = {0, 0};
  }
  const auto tally = [&](const std::vector<RequestRecord>& run, bool is_a) {
    for (const auto& r : run) {
      auto& t = by_type[r.resource_type];
      (is_a ? t.first : t.second) += 1;
      if (r.party == Party::first) (is_a ? first[r.site].first : first[r.site].second) += 1;
      if (r.party == Party::third) (is_a ? third[r.site].first : third[r.site].second) += 1;
    }
  };
  tally(a, true);
  tally(b, false);

  out.rows = resource_type_rows(by_type);
  out.total.resource_type = "total";
  out.total.count_a = a.size();
  out.total.count_b = b.size();
  out.total.diff_pct = percent_diff(static_cast<double>(a.size()), static_cast<double>(b.size()));

  const bool any_party = std::any_of(a.begin(), a.end(), [](const auto& r) { return r.party != Party::unknown; }) ||
                         std::any_of(b.begin(), b.end(), [](const auto& r) { return r.party != Party::unknown; });
  if (any_party) {
    out.first_party = detail::compare_party(first);
    out.third_party = detail::compare_party(third);
  }

  if (easylist && easyprivacy) {
    BlocklistShare share;
    const auto shares = [&](const std::vector<RequestRecord>& run, double& ads, double& trackers) {
      if (run.empty()) return;
      std::size_t n_ads = 0, n_trackers = 0;
      for (const auto& r : run) {
        if (easylist->match(r.url)) ++n_ads;
        if (easyprivacy->match(r.url)) ++n_trackers;
      }
      ads = static_cast<double>(n_ads) / static_cast<double>(run.size());
      trackers = static_cast<double>(n_trackers) / static_cast<double>(run.size());
    };
    shares(a, share.ads_a, share.trackers_a);
    shares(b, share.ads_b, share.trackers_b);
    out.share = share;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const WilcoxonResult& w) {
  json j = {{"n_effective", w.n_effective},
            {"w_statistic", w.w_statistic},
            {"w_plus", w.w_plus},
            {"w_minus", w.w_minus},
            {"p_two_sided", w.p_two_sided},
            {"method", to_string(w.method)}};
  if (w.p_exact) j["p_exact"] = std::to_string(w.p_exact->numerator) + "/" + std::to_string(w.p_exact->denominator);
  return j;
}

inline json to_json(const ResourceTypeRow& r) {
  return {{"resource_type", r.resource_type},
          {"count_a", r.count_a},
          {"count_b", r.count_b},
          {"diff_pct", r.diff_pct ? json(*r.diff_pct) : json(nullptr)}};
}

inline json to_json(const PartyComparison& p) {
  return {{"sites", p.sites}, {"more_in_a", p.more_in_a}, {"more_in_b", p.more_in_b}, {"wilcoxon", to_json(p.test)}};
}

inline json to_json(const RunComparison& c) {
  json rows = json::array();
  for (const auto& r : c.rows) rows.push_back(to_json(r));
  json j = {{"resource_types", std::move(rows)}, {"total", to_json(c.total)}};
  j["first_party"] = c.first_party ? to_json(*c.first_party) : json(nullptr);
  j["third_party"] = c.third_party ? to_json(*c.third_party) : json(nullptr);
  j["blocklist_share"] = c.share ? json{{"ads_a", c.share->ads_a},
                                         {"ads_b", c.share->ads_b},
                                         {"trackers_a", c.share->trackers_a},
                                         {"trackers_b", c.share->trackers_b}}
                                 : json(nullptr);
  return j;
}

inline json to_json(const CookieObservation& obs, const CookieAssessment& a) {
  return {{"site", obs.site},
          {"cookie_domain", obs.cookie_domain},
          {"name", obs.name},
          {"persistent", a.persistent},
          {"long_enough", a.long_enough},
          {"always_set", a.always_set},
          {"values_differ", a.values_differ},
          {"min_similarity", a.min_similarity ? json(*a.min_similarity) : json(nullptr)},
          {"tracking", a.tracking()}};
}

}  // namespace botscope
