#pragma once

// Site-level aggregation of detector verdicts and table rendering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "botscope/attribution.hpp"
#include "botscope/dynscan.hpp"
#include "botscope/staticscan.hpp"

namespace botscope {

struct MethodFlags {
  bool static_hit = false;
  bool dynamic_hit = false;

  bool union_hit() const { return static_hit || dynamic_hit; }
  friend bool operator==(const MethodFlags&, const MethodFlags&) = default;
};

struct SiteReport {
  std::string site;
  std::int64_t site_rank = 0;
  MethodFlags front;
  std::optional<MethodFlags> sub;  // only for sites with crawled subpages
  std::size_t first_party = 0;     // detector inclusions
  std::size_t third_party = 0;
  std::set<std::string> providers;
  bool openwpm_specific = false;

  bool detected(bool by_static, bool by_dynamic) const {
    const auto hit = [&](const MethodFlags& f) { return (by_static && f.static_hit) || (by_dynamic && f.dynamic_hit); };
    return hit(front) || (sub && hit(*sub));
  }
};

struct ReportOptions {
  // Count needs_manual_review static verdicts and inconclusive dynamic ones.
  bool include_uncertain = false;
};

namespace detail {

inline std::int64_t rank_or_max(std::int64_t r) { return r > 0 ? r : std::numeric_limits<std::int64_t>::max(); }

}  // namespace detail

/// One report per site seen in the static occurrences or the dynamic
/// verdicts, ordered by rank (unranked last), then site.
inline std::vector<SiteReport> aggregate(const std::vector<ScriptVerdict>& statics,
                                         const std::vector<DynamicVerdict>& dynamics,
                                         const std::vector<DetectorInclusion>& inclusions, ReportOptions options = {}) {
  std::map<std::string, SiteReport> sites;
  std::map<std::pair<std::string, std::string>, PageKind> page_kinds;
  const auto touch = [&](const std::string& site, std::int64_t rank) -> SiteReport& {
    auto& r = sites[site];
    r.site = site;
    if (rank > 0 && (r.site_rank == 0 || rank < r.site_rank)) r.site_rank = rank;
    return r;
  };
  const auto scope = [](SiteReport& r, PageKind kind) -> MethodFlags& {
    if (kind == PageKind::front) return r.front;
    if (!r.sub) r.sub = MethodFlags{};
    return *r.sub;
  };

  for (const auto& v : statics) {
    const bool detector = is_static_detector(v.verdict.label) && (options.include_uncertain || !v.verdict.needs_manual_review);
    const bool openwpm = std::any_of(v.verdict.hits.begin(), v.verdict.hits.end(),
                                     [](const PatternHit& h) { return h.target == Target::openwpm; });
    for (const auto& o : v.occurrences) {
      page_kinds.emplace(std::pair{o.site, o.page_url}, o.page_kind);
      auto& r = touch(o.site, o.site_rank);
      auto& flags = scope(r, o.page_kind);
      if (detector) flags.static_hit = true;
      if (openwpm) r.openwpm_specific = true;
    }
  }
  for (const auto& d : dynamics) {
    auto& r = touch(d.site, d.site_rank);
    const bool detector = d.category == DynamicCategory::detector ||
                          (options.include_uncertain && d.category == DynamicCategory::inconclusive);
    if (std::any_of(d.accessed_surface.begin(), d.accessed_surface.end(),
                    [](const std::string& s) { return is_openwpm_symbol(s); }))
      r.openwpm_specific = true;
    for (const auto& page : d.page_urls) {
      const auto it = page_kinds.find({d.site, page});
      const auto kind = it != page_kinds.end() ? it->second : detail::guess_page_kind(page);
      auto& flags = scope(r, kind);
      if (detector) flags.dynamic_hit = true;
    }
  }
  for (const auto& inc : inclusions) {
    auto& r = touch(inc.site, inc.site_rank);
    if (inc.party == Party::first) ++r.first_party;
    if (inc.party == Party::third) ++r.third_party;
    if (inc.provider) r.providers.insert(*inc.provider);
  }

  std::vector<SiteReport> out;
  for (auto& [name, r] : sites) out.push_back(std::move(r));
  std::stable_sort(out.begin(), out.end(), [](const SiteReport& a, const SiteReport& b) {
    return detail::rank_or_max(a.site_rank) < detail::rank_or_max(b.site_rank);
  });
  return out;
}

inline json to_json(const MethodFlags& f) {
  return {{"static", f.static_hit}, {"dynamic", f.dynamic_hit}, {"union", f.union_hit()}};
}

inline json to_json(const SiteReport& r) {
  return {{"site", r.site},
          {"site_rank", r.site_rank},
          {"front", to_json(r.front)},
          {"sub", r.sub ? to_json(*r.sub) : json(nullptr)},
          {"first_party", r.first_party},
          {"third_party", r.third_party},
          {"providers", r.providers},
          {"openwpm_specific", r.openwpm_specific}};
}

// ---------------------------------------------------------------------------
// Distributions and rates

struct MethodTotals {
  std::size_t static_count = 0;
  std::size_t dynamic_count = 0;
  std::size_t union_count = 0;

  void add(const SiteReport& r) {
    static_count += r.detected(true, false);
    dynamic_count += r.detected(false, true);
    union_count += r.detected(true, true);
  }
  friend bool operator==(const MethodTotals&, const MethodTotals&) = default;
};

struct RankBucket {
  std::int64_t first_rank = 0;  // inclusive
  std::int64_t last_rank = 0;   // inclusive
  MethodTotals counts;
};

struct BucketDistribution {
  std::int64_t bucket_size = 0;
  std::vector<RankBucket> buckets;  // contiguous from rank 1 to the highest scanned rank
  MethodTotals unranked;
  MethodTotals totals;
};

/// Detected sites per rank bucket and method; a site counts when detected on
/// any crawled page.
inline BucketDistribution bucket_distribution(const std::vector<SiteReport>& reports, std::int64_t bucket_size = 1000) {
  if (bucket_size < 1) throw std::invalid_argument("bucket size must be positive");
  BucketDistribution out;
  out.bucket_size = bucket_size;
  std::int64_t max_rank = 0;
  for (const auto& r : reports) max_rank = std::max(max_rank, r.site_rank);
  const auto n = static_cast<std::size_t>((max_rank + bucket_size - 1) / bucket_size);
  for (std::size_t i = 0; i < n; ++i)
    out.buckets.push_back({static_cast<std::int64_t>(i) * bucket_size + 1, static_cast<std::int64_t>(i + 1) * bucket_size, {}});
  for (const auto& r : reports) {
    out.totals.add(r);
    if (r.site_rank > 0) out.buckets[static_cast<std::size_t>((r.site_rank - 1) / bucket_size)].counts.add(r);
    else out.unranked.add(r);
  }
  return out;
}

struct FrontVsSub {
  std::size_t sites = 0;
  std::size_t front_detected = 0;
  std::size_t full_detected = 0;
  double front_rate = 0;  // percent of scanned sites
  double full_rate = 0;
  double delta_pp = 0;
  bool no_subpage_corpus = false;
};

/// Union detection on front pages only versus front plus subpages.
inline FrontVsSub frontpage_vs_subpage(const std::vector<SiteReport>& reports) {
  FrontVsSub out;
  out.sites = reports.size();
  out.no_subpage_corpus = std::none_of(reports.begin(), reports.end(), [](const SiteReport& r) { return r.sub.has_value(); });
  for (const auto& r : reports) {
    out.front_detected += r.front.union_hit();
    out.full_detected += r.detected(true, true);
  }
  if (out.sites > 0) {
    out.front_rate = 100.0 * static_cast<double>(out.front_detected) / static_cast<double>(out.sites);
    out.full_rate = 100.0 * static_cast<double>(out.full_detected) / static_cast<double>(out.sites);
  }
  out.delta_pp = out.full_rate - out.front_rate;
  return out;
}

struct OpenwpmRow {
  std::string domain;
  std::size_t sites = 0;
};

/// Sites per script hosting domain for scripts that touch OpenWPM-only
/// symbols (call logs) or match an OpenWPM pattern (static). Inline scripts
/// are credited to the site's own domain.
inline std::vector<OpenwpmRow> openwpm_table(const std::vector<ScriptVerdict>& statics,
                                             const std::vector<DynamicVerdict>& dynamics,
                                             const PublicSuffixRules& rules) {
  std::map<std::string, std::set<std::string>> by_domain;
  const auto credit = [&](const std::string& script_url, const std::string& site) {
    const auto domain = is_inline_marker(script_url) ? hosting_domain(site, rules) : hosting_domain(script_url, rules);
    by_domain[domain].insert(site);
  };
  for (const auto& v : statics)
    if (std::any_of(v.verdict.hits.begin(), v.verdict.hits.end(),
                    [](const PatternHit& h) { return h.target == Target::openwpm; }))
      for (const auto& o : v.occurrences) credit(o.script_url, o.site);
  for (const auto& d : dynamics)
    if (std::any_of(d.accessed_surface.begin(), d.accessed_surface.end(),
                    [](const std::string& s) { return is_openwpm_symbol(s); }))
      credit(d.script_url, d.site);
  std::vector<OpenwpmRow> out;
  for (const auto& [domain, sites] : by_domain) out.push_back({domain, sites.size()});
  std::stable_sort(out.begin(), out.end(), [](const OpenwpmRow& a, const OpenwpmRow& b) { return a.sites > b.sites; });
  return out;
}

// ---------------------------------------------------------------------------
// Tables

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<bool> numeric;
  std::vector<std::vector<std::string>> rows;

  friend bool operator==(const Table&, const Table&) = default;
};

/// Two decimals, without a negative zero.
inline std::string format_percent(double v) {
  if (std::fabs(v) < 0.005) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string format_bool(bool b) { return b ? "true" : "false"; }

inline double percent_of(std::size_t part, std::size_t whole) {
  return whole ? 100.0 * static_cast<double>(part) / static_cast<double>(whole) : 0.0;
}

inline Table sites_table(const std::vector<SiteReport>& reports) {
  Table t{"sites",
          {"site_rank", "site", "front_static", "front_dynamic", "front_union", "sub_static", "sub_dynamic", "sub_union",
           "first_party", "third_party", "providers", "openwpm_specific"},
          {true, false, false, false, false, false, false, false, true, true, false, false},
          {}};
  for (const auto& r : reports) {
    std::string providers;
    for (const auto& p : r.providers) providers += (providers.empty() ? "" : ";") + p;
    t.rows.push_back({std::to_string(r.site_rank), r.site, format_bool(r.front.static_hit),
                      format_bool(r.front.dynamic_hit), format_bool(r.front.union_hit()),
                      r.sub ? format_bool(r.sub->static_hit) : "", r.sub ? format_bool(r.sub->dynamic_hit) : "",
                      r.sub ? format_bool(r.sub->union_hit()) : "", std::to_string(r.first_party),
                      std::to_string(r.third_party), providers, format_bool(r.openwpm_specific)});
  }
  return t;
}

/// Sites identified per method, on front pages and on all crawled pages.
inline Table summary_table(const std::vector<SiteReport>& reports) {
  Table t{"summary",
          {"method", "front_sites", "front_pct", "all_sites", "all_pct"},
          {false, true, true, true, true},
          {}};
  const std::size_t n = reports.size();
  const auto row = [&](const char* name, bool s, bool d) {
    std::size_t front = 0, all = 0;
    for (const auto& r : reports) {
      front += (s && r.front.static_hit) || (d && r.front.dynamic_hit);
      all += r.detected(s, d);
    }
    t.rows.push_back({name, std::to_string(front), format_percent(percent_of(front, n)), std::to_string(all),
                      format_percent(percent_of(all, n))});
  };
  row("static", true, false);
  row("dynamic", false, true);
  row("union", true, true);
  t.rows.push_back({"scanned", std::to_string(n), format_percent(n ? 100.0 : 0.0), std::to_string(n),
                    format_percent(n ? 100.0 : 0.0)});
  return t;
}

inline Table front_vs_sub_table(const FrontVsSub& f) {
  return {"front_vs_sub",
          {"sites", "front_detected", "full_detected", "front_rate", "full_rate", "delta_pp", "no_subpage_corpus"},
          {true, true, true, true, true, true, false},
          {{std::to_string(f.sites), std::to_string(f.front_detected), std::to_string(f.full_detected),
            format_percent(f.front_rate), format_percent(f.full_rate), format_percent(f.delta_pp),
            format_bool(f.no_subpage_corpus)}}};
}

inline Table buckets_table(const BucketDistribution& d) {
  Table t{"buckets", {"first_rank", "last_rank", "static", "dynamic", "union"}, {true, true, true, true, true}, {}};
  for (const auto& b : d.buckets)
    t.rows.push_back({std::to_string(b.first_rank), std::to_string(b.last_rank), std::to_string(b.counts.static_count),
                      std::to_string(b.counts.dynamic_count), std::to_string(b.counts.union_count)});
  if (d.unranked.union_count > 0)
    t.rows.push_back({"0", "0", std::to_string(d.unranked.static_count), std::to_string(d.unranked.dynamic_count),
                      std::to_string(d.unranked.union_count)});
  return t;
}

inline Table third_party_table(const ThirdPartyTally& tally) {
  Table t{"third_party", {"rank", "domain", "inclusions", "pct"}, {true, false, true, true}, {}};
  std::size_t rank = 0;
  for (const auto& r : tally.rows)
    t.rows.push_back({std::to_string(++rank), r.domain, std::to_string(r.sites), format_percent(r.percent)});
  return t;
}

inline Table providers_table(const std::vector<ProviderRow>& rows) {
  Table t{"providers", {"provider", "sites"}, {false, true}, {}};
  for (const auto& r : rows) t.rows.push_back({r.provider, std::to_string(r.sites)});
  return t;
}

inline Table clusters_table(const std::vector<HashCluster>& clusters) {
  Table t{"clusters", {"sha256", "sites", "members"}, {false, true, false}, {}};
  for (const auto& c : clusters) {
    std::string members;
    for (const auto& s : c.sites) members += (members.empty() ? "" : ";") + s;
    t.rows.push_back({c.sha256, std::to_string(c.sites.size()), members});
  }
  return t;
}

inline Table openwpm_rows_table(const std::vector<OpenwpmRow>& rows) {
  Table t{"openwpm", {"rank", "domain", "sites"}, {true, false, true}, {}};
  std::size_t rank = 0;
  for (const auto& r : rows) t.rows.push_back({std::to_string(++rank), r.domain, std::to_string(r.sites)});
  return t;
}

// ---------------------------------------------------------------------------
// Rendering

enum class Format { text, csv, json };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Format parse_format(std::string_view s) {
  if (s == "text") return Format::text;
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  throw UsageError("unknown format '" + std::string(s) + "' (expected text, csv or json)");
}

inline std::string_view extension(Format f) {
  switch (f) {
    case Format::text: return "txt";
    case Format::csv: return "csv";
    case Format::json: return "json";
  }
  return "txt";
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string render_text(const Table& t) {
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t c = 0; c < t.columns.size(); ++c) width[c] = t.columns[c].size();
  for (const auto& row : t.rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  const auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += "  ";
      const auto pad = std::string(width[c] - cells[c].size(), ' ');
      out += t.numeric[c] ? pad + cells[c] : cells[c] + pad;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(t.columns);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  out += line(rule);
  for (const auto& row : t.rows) out += line(row);
  return out;
}

inline std::string render_csv(const Table& t) {
  std::string out;
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out += (c ? "," : "") + csv_field(cells[c]);
    out += "\n";
  };
  line(t.columns);
  for (const auto& row : t.rows) line(row);
  return out;
}

inline std::string render_json(const Table& t) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json obj = json::object();
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (t.numeric[c] && !row[c].empty()) obj[t.columns[c]] = json::parse(row[c]);
      else if (row[c] == "true" || row[c] == "false") obj[t.columns[c]] = row[c] == "true";
      else if (row[c].empty()) obj[t.columns[c]] = nullptr;
      else obj[t.columns[c]] = row[c];
    }
    rows.push_back(std::move(obj));
  }
  return json{{"table", t.name}, {"columns", t.columns}, {"rows", std::move(rows)}}.dump(2) + "\n";
}

}  // namespace detail

inline std::string render(const Table& t, Format f) {
  switch (f) {
    case Format::text: return detail::render_text(t);
    case Format::csv: return detail::render_csv(t);
    case Format::json: return detail::render_json(t);
  }
  return {};
}

/// Reads back a CSV table produced by render(); column types are not stored
/// in CSV, so `numeric` comes back all false.
inline Table parse_csv(std::string_view text, std::string name = {}) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  Table t;
  t.name = std::move(name);
  if (records.empty()) return t;
  t.columns = std::move(records.front());
  t.numeric.assign(t.columns.size(), false);
  t.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return t;
}

}  // namespace botscope
