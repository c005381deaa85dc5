#pragma once

// Classification of scripts from recorded property accesses.
//
// Honey properties (randomly named, injected on navigator and window) tell
// blind property iteration apart from targeted probing: only an iterating
// script reads all of them.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "botscope/corpus.hpp"
#include "botscope/staticscan.hpp"

namespace botscope {

inline constexpr std::string_view kWebdriverSymbol = "navigator.webdriver";

/// Properties whose access marks a script as a potential bot detector.
inline std::vector<std::string> surface_symbols(const std::vector<std::string>& extra = {}) {
  std::vector<std::string> symbols = {std::string(kWebdriverSymbol), "getInstrumentJS", "instrumentFingerprintingApis",
                                      "jsInstruments"};
  for (const auto& s : extra)
    if (std::find(symbols.begin(), symbols.end(), s) == symbols.end()) symbols.push_back(s);
  return symbols;
}

inline bool is_openwpm_symbol(std::string_view canonical) {
  return canonical == "getInstrumentJS" || canonical == "instrumentFingerprintingApis" || canonical == "jsInstruments";
}

/// Dotted-path suffix match: "window.navigator.webdriver" matches
/// "navigator.webdriver", "xnavigator.webdriver" does not.
inline bool symbol_matches(std::string_view recorded, std::string_view surface) {
  if (recorded == surface) return true;
  return recorded.size() > surface.size() && recorded.ends_with(surface) &&
         recorded[recorded.size() - surface.size() - 1] == '.';
}

// ---------------------------------------------------------------------------
// Honey properties

struct HoneyConfig {
  std::vector<std::string> navigator_props;
  std::vector<std::string> window_props;

  bool empty() const { return navigator_props.empty() && window_props.empty(); }
};

inline constexpr std::size_t kDefaultHoneyCount = 8;
inline constexpr std::size_t kMinHoneyPerObject = 3;

/// Returns a list of problems; empty when the config is usable. An entirely
/// empty config is allowed and disables iterator detection.
inline std::vector<std::string> validate_honey(const HoneyConfig& honey,
                                               const std::vector<std::string>& surface = surface_symbols()) {
  std::vector<std::string> problems;
  if (honey.empty()) return problems;
  const auto check = [&](const std::vector<std::string>& props, const char* object) {
    if (props.size() < kMinHoneyPerObject)
      problems.push_back(std::string(object) + " needs at least " + std::to_string(kMinHoneyPerObject) +
                         " honey properties");
    std::set<std::string> seen;
    for (const auto& p : props) {
      if (p.empty()) problems.push_back(std::string(object) + " has an empty honey property name");
      if (p.find('.') != std::string::npos) problems.push_back("honey property '" + p + "' contains a dot");
      if (!seen.insert(p).second) problems.push_back("honey property '" + p + "' repeated");
      for (const auto& s : surface)
        if (symbol_matches(std::string(object) + "." + p, s) || p == s)
          problems.push_back("honey property '" + p + "' collides with surface symbol " + s);
    }
  };
  check(honey.navigator_props, "navigator");
  check(honey.window_props, "window");
  return problems;
}

/// Random lower-case names, 12 characters each, deterministic for a seed.
inline HoneyConfig generate_honey(std::uint64_t seed, std::size_t per_object = kDefaultHoneyCount) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> letter(0, 25);
  std::set<std::string> used;
  const auto name = [&] {
    for (;;) {
      std::string s(12, 'a');
      for (auto& c : s) c = static_cast<char>('a' + letter(rng));
      if (used.insert(s).second) return s;
    }
  };
  HoneyConfig h;
  for (std::size_t i = 0; i < per_object; ++i) h.navigator_props.push_back(name());
  for (std::size_t i = 0; i < per_object; ++i) h.window_props.push_back(name());
  return h;
}

inline json to_json(const HoneyConfig& h) {
  return {{"navigator_props", h.navigator_props}, {"window_props", h.window_props}};
}

inline HoneyConfig honey_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("honey config must be a JSON object");
  HoneyConfig h;
  const auto list = [&](const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    if (!j[key].is_array()) throw ConfigError(std::string(key) + " must be an array");
    for (const auto& v : j[key]) {
      if (!v.is_string()) throw ConfigError(std::string(key) + " entries must be strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  h.navigator_props = list("navigator_props");
  h.window_props = list("window_props");
  return h;
}

// ---------------------------------------------------------------------------
// Per-script grouping

/// Scripts are identified by their URL within a site.
struct ScriptKey {
  std::string site;
  std::string script_url;

  friend auto operator<=>(const ScriptKey&, const ScriptKey&) = default;
};

inline std::string without_window_prefix(std::string_view symbol) {
  if (symbol.starts_with("window.")) symbol.remove_prefix(7);
  return std::string(symbol);
}

/// A script is an iterator iff it read every honey property of navigator or
/// every honey property of window. Objects without honey properties never
/// certify iteration.
inline std::map<ScriptKey, bool> mark_iterators(const std::vector<CallLogEntry>& log, const HoneyConfig& honey) {
  std::map<ScriptKey, std::pair<std::set<std::string>, std::set<std::string>>> touched;
  const std::set<std::string> nav(honey.navigator_props.begin(), honey.navigator_props.end());
  const std::set<std::string> win(honey.window_props.begin(), honey.window_props.end());
  for (const auto& e : log) {
    auto& [nav_seen, win_seen] = touched[{e.site, e.script_url}];
    const auto path = without_window_prefix(e.symbol);
    if (path.starts_with("navigator.")) {
      const auto prop = path.substr(10);
      if (nav.contains(prop)) nav_seen.insert(prop);
    } else if (win.contains(path)) {
      win_seen.insert(path);
    }
  }
  std::map<ScriptKey, bool> out;
  for (const auto& [key, seen] : touched)
    out[key] = (!nav.empty() && seen.first.size() == nav.size()) || (!win.empty() && seen.second.size() == win.size());
  return out;
}

// ---------------------------------------------------------------------------
// Classification

enum class DynamicCategory { detector, inconclusive, none };

inline std::string_view to_string(DynamicCategory c) {
  switch (c) {
    case DynamicCategory::detector: return "detector";
    case DynamicCategory::inconclusive: return "inconclusive";
    case DynamicCategory::none: return "none";
  }
  return "?";
}

inline std::optional<DynamicCategory> parse_dynamic_category(std::string_view s) {
  if (s == "detector") return DynamicCategory::detector;
  if (s == "inconclusive") return DynamicCategory::inconclusive;
  if (s == "none") return DynamicCategory::none;
  return std::nullopt;
}

struct DynamicVerdict {
  std::string site;
  std::string script_url;
  std::int64_t site_rank = 0;  // 0 when no static record knows the site
  DynamicCategory category = DynamicCategory::none;
  std::set<std::string> accessed_surface;
  bool is_iterator = false;
  bool missing_source = false;
  std::set<std::string> page_urls;
};

/// What the static pass knows about a script seen in the call log.
struct StaticInfo {
  StaticLabel label = StaticLabel::none;
  bool needs_manual_review = false;
  std::int64_t site_rank = 0;
  std::string sha256;
};

using StaticIndex = std::map<ScriptKey, StaticInfo>;

/// Indexes static verdicts by (site, script_url) over every occurrence.
inline StaticIndex index_static(const std::vector<ScriptVerdict>& verdicts) {
  StaticIndex index;
  for (const auto& v : verdicts)
    for (const auto& o : v.occurrences)
      index.insert_or_assign(ScriptKey{o.site, o.script_url},
                             StaticInfo{v.verdict.label, v.verdict.needs_manual_review, o.site_rank, v.verdict.sha256});
  return index;
}

inline bool is_static_detector(StaticLabel l) { return l != StaticLabel::none; }

/// Per-script category:
///   no surface access                               -> none
///   surface access, not an iterator                 -> detector
///   iterator without webdriver access               -> inconclusive
///   iterator with webdriver access, static detector -> detector
///   iterator with webdriver access, no static hit   -> inconclusive
/// Scripts missing from the static corpus count as "no static hit" and are
/// flagged missing_source. Output is ordered by (site_rank, site, script_url),
/// with unranked sites last.
inline std::vector<DynamicVerdict> classify_dynamic(const std::vector<CallLogEntry>& log,
                                                    const std::map<ScriptKey, bool>& iterators,
                                                    const StaticIndex& statics,
                                                    const std::vector<std::string>& surface = surface_symbols()) {
  std::map<ScriptKey, DynamicVerdict> by_script;
  for (const auto& e : log) {
    const ScriptKey key{e.site, e.script_url};
    auto [it, inserted] = by_script.try_emplace(key);
    auto& v = it->second;
    if (inserted) {
      v.site = e.site;
      v.script_url = e.script_url;
    }
    v.page_urls.insert(e.page_url);
    for (const auto& s : surface)
      if (symbol_matches(e.symbol, s)) v.accessed_surface.insert(s);
  }

  std::vector<DynamicVerdict> out;
  out.reserve(by_script.size());
  for (auto& [key, v] : by_script) {
    const auto iter = iterators.find(key);
    v.is_iterator = iter != iterators.end() && iter->second;
    const auto st = statics.find(key);
    v.missing_source = st == statics.end();
    if (!v.missing_source) v.site_rank = st->second.site_rank;
    const bool static_hit = !v.missing_source && is_static_detector(st->second.label);
    const bool webdriver = v.accessed_surface.contains(std::string(kWebdriverSymbol));

    if (v.accessed_surface.empty()) v.category = DynamicCategory::none;
    else if (!v.is_iterator) v.category = DynamicCategory::detector;
    else if (!webdriver) v.category = DynamicCategory::inconclusive;
    else v.category = static_hit ? DynamicCategory::detector : DynamicCategory::inconclusive;
    out.push_back(std::move(v));
  }
  std::stable_sort(out.begin(), out.end(), [](const DynamicVerdict& a, const DynamicVerdict& b) {
    const auto rank = [](const DynamicVerdict& v) {
      return v.site_rank > 0 ? v.site_rank : std::numeric_limits<std::int64_t>::max();
    };
    return std::make_tuple(rank(a), std::cref(a.site), std::cref(a.script_url)) <
           std::make_tuple(rank(b), std::cref(b.site), std::cref(b.script_url));
  });
  return out;
}

/// Full dynamic pass over one call log.
inline std::vector<DynamicVerdict> scan_dynamic(const std::vector<CallLogEntry>& log, const HoneyConfig& honey,
                                                const StaticIndex& statics,
                                                const std::vector<std::string>& surface = surface_symbols()) {
  return classify_dynamic(log, mark_iterators(log, honey), statics, surface);
}

inline json to_json(const DynamicVerdict& v) {
  return {{"site", v.site},
          {"script_url", v.script_url},
          {"site_rank", v.site_rank},
          {"category", to_string(v.category)},
          {"accessed_surface", v.accessed_surface},
          {"is_iterator", v.is_iterator},
          {"missing_source", v.missing_source},
          {"page_urls", v.page_urls}};
}

inline DynamicVerdict parse_dynamic_verdict(const json& j) {
  using namespace detail;
  DynamicVerdict v;
  v.site = string_field(j, "site");
  v.script_url = string_field(j, "script_url");
  v.site_rank = j.contains("site_rank") ? integer_field(j, "site_rank") : 0;
  v.category = enum_field<DynamicCategory>(j, "category", parse_dynamic_category);
  for (const auto& s : field(j, "accessed_surface")) v.accessed_surface.insert(s.get<std::string>());
  v.is_iterator = bool_field(j, "is_iterator");
  v.missing_source = j.contains("missing_source") && j["missing_source"].is_boolean() && j["missing_source"].get<bool>();
  if (j.contains("page_urls"))
    for (const auto& s : j["page_urls"]) v.page_urls.insert(s.get<std::string>());
  if (v.category == DynamicCategory::detector && v.accessed_surface.empty())
    fail(LoadErrorKind::invalid, "detector verdict without surface access");
  if (v.category == DynamicCategory::none && !v.accessed_surface.empty())
    fail(LoadErrorKind::invalid, "none verdict with surface access");
  return v;
}

inline LoadResult<DynamicVerdict> load_dynamic_verdicts(const std::filesystem::path& path, unsigned threads = 1) {
  return detail::load_jsonl<DynamicVerdict>(path, threads, parse_dynamic_verdict);
}

// ---------------------------------------------------------------------------
// Site-level combination

struct SiteDetection {
  std::string site;
  std::int64_t site_rank = 0;
  bool static_any = false;   // any static detector
  bool dynamic_any = false;  // detector or inconclusive
  bool static_strict = false;   // excludes needs_manual_review
  bool dynamic_strict = false;  // detector only

  bool union_any() const { return static_any || dynamic_any; }
  bool union_strict() const { return static_strict || dynamic_strict; }
};

struct MethodCounts {
  std::size_t static_count = 0;
  std::size_t dynamic_count = 0;
  std::size_t union_count = 0;

  friend bool operator==(const MethodCounts&, const MethodCounts&) = default;
};

struct CombinedReport {
  std::vector<SiteDetection> sites;  // ordered by (site_rank, site)
  MethodCounts identified;
  MethodCounts strict;  // without needs_manual_review and inconclusive
};

/// Site-level tallies: a site counts for a method if any script on it is a
/// detector by that method.
inline CombinedReport combine(const std::vector<ScriptVerdict>& statics, const std::vector<DynamicVerdict>& dynamics) {
  std::map<std::string, SiteDetection> sites;
  const auto touch = [&](const std::string& site, std::int64_t rank) -> SiteDetection& {
    auto& s = sites[site];
    s.site = site;
    if (rank > 0 && (s.site_rank == 0 || rank < s.site_rank)) s.site_rank = rank;
    return s;
  };
  for (const auto& v : statics) {
    for (const auto& o : v.occurrences) {
      auto& s = touch(o.site, o.site_rank);
      if (is_static_detector(v.verdict.label)) {
        s.static_any = true;
        if (!v.verdict.needs_manual_review) s.static_strict = true;
      }
    }
  }
  for (const auto& d : dynamics) {
    auto& s = touch(d.site, d.site_rank);
    if (d.category != DynamicCategory::none) s.dynamic_any = true;
    if (d.category == DynamicCategory::detector) s.dynamic_strict = true;
  }

  CombinedReport out;
  for (auto& [name, s] : sites) {
    out.identified.static_count += s.static_any;
    out.identified.dynamic_count += s.dynamic_any;
    out.identified.union_count += s.union_any();
    out.strict.static_count += s.static_strict;
    out.strict.dynamic_count += s.dynamic_strict;
    out.strict.union_count += s.union_strict();
    out.sites.push_back(std::move(s));
  }
  std::stable_sort(out.sites.begin(), out.sites.end(), [](const SiteDetection& a, const SiteDetection& b) {
    const auto ra = a.site_rank > 0 ? a.site_rank : std::numeric_limits<std::int64_t>::max();
    const auto rb = b.site_rank > 0 ? b.site_rank : std::numeric_limits<std::int64_t>::max();
    return std::tie(ra, a.site) < std::tie(rb, b.site);
  });
  return out;
}

inline json to_json(const MethodCounts& c) {
  return {{"static", c.static_count}, {"dynamic", c.dynamic_count}, {"union", c.union_count}};
}

inline json to_json(const CombinedReport& r) {
  json sites = json::array();
  for (const auto& s : r.sites)
    sites.push_back({{"site", s.site},
                     {"site_rank", s.site_rank},
                     {"static", s.static_any},
                     {"dynamic", s.dynamic_any},
                     {"union", s.union_any()},
                     {"static_strict", s.static_strict},
                     {"dynamic_strict", s.dynamic_strict},
                     {"union_strict", s.union_strict()}});
  return {{"identified", to_json(r.identified)}, {"strict", to_json(r.strict)}, {"sites", std::move(sites)}};
}

}  // namespace botscope
