#pragma once

// Template diffing and classification of deviations against a knowledge base
// of known automation, display-less, virtualisation and instrumentation tells.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "botscope/corpus.hpp"
#include "botscope/staticscan.hpp"

namespace botscope {

// ---------------------------------------------------------------------------
// Diff

struct ChangedProperty {
  std::string path;
  ValueDescriptor a;
  ValueDescriptor b;

  friend bool operator==(const ChangedProperty&, const ChangedProperty&) = default;
};

struct FingerprintDiff {
  std::set<std::string> missing;  // in A, absent in B
  std::set<std::string> added;    // absent in A, present in B
  std::vector<ChangedProperty> changed;  // sorted by path

  bool empty() const { return missing.empty() && added.empty() && changed.empty(); }
  std::size_t size() const { return missing.size() + added.size() + changed.size(); }
  bool contains(const std::string& path) const {
    return missing.contains(path) || added.contains(path) ||
           std::binary_search(changed.begin(), changed.end(), path,
                              [](const auto& x, const auto& y) { return key(x) < key(y); });
  }

 private:
  static std::string_view key(const ChangedProperty& c) { return c.path; }
  static std::string_view key(const std::string& s) { return s; }
};

/// Path-wise comparison; descriptors are equal iff kind and repr are equal.
inline FingerprintDiff diff_templates(const PropertyTemplate& a, const PropertyTemplate& b) {
  FingerprintDiff d;
  auto ia = a.properties.begin();
  auto ib = b.properties.begin();
  while (ia != a.properties.end() || ib != b.properties.end()) {
    if (ib == b.properties.end() || (ia != a.properties.end() && ia->first < ib->first)) {
      d.missing.insert(d.missing.end(), ia->first);
      ++ia;
    } else if (ia == a.properties.end() || ib->first < ia->first) {
      d.added.insert(d.added.end(), ib->first);
      ++ib;
    } else {
      if (!(ia->second == ib->second)) d.changed.push_back({ia->first, ia->second, ib->second});
      ++ia;
      ++ib;
    }
  }
  return d;
}

inline json to_json(const FingerprintDiff& d) {
  json changed = json::array();
  for (const auto& c : d.changed)
    changed.push_back({{"path", c.path},
                       {"kind_a", to_string(c.a.kind)},
                       {"repr_a", c.a.repr},
                       {"kind_b", to_string(c.b.kind)},
                       {"repr_b", c.b.repr}});
  return {{"missing", d.missing}, {"added", d.added}, {"changed", std::move(changed)}};
}

// ---------------------------------------------------------------------------
// Indicator knowledge base

enum class Meaning { automation, display_less, virtualisation, instrumentation, mode_signature };

inline std::string_view to_string(Meaning m) {
  switch (m) {
    case Meaning::automation: return "automation";
    case Meaning::display_less: return "display_less";
    case Meaning::virtualisation: return "virtualisation";
    case Meaning::instrumentation: return "instrumentation";
    case Meaning::mode_signature: return "mode_signature";
  }
  return "?";
}

inline std::optional<Meaning> parse_meaning(std::string_view s) {
  for (auto m : {Meaning::automation, Meaning::display_less, Meaning::virtualisation, Meaning::instrumentation,
                 Meaning::mode_signature})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

/// Where a condition looks for paths. `diff` covers missing, added and
/// changed; for missing paths the baseline descriptor is tested.
enum class Scope { template_b, diff, missing, added, changed };

inline std::string_view to_string(Scope s) {
  switch (s) {
    case Scope::template_b: return "template";
    case Scope::diff: return "diff";
    case Scope::missing: return "missing";
    case Scope::added: return "added";
    case Scope::changed: return "changed";
  }
  return "?";
}

inline std::optional<Scope> parse_scope(std::string_view s) {
  for (auto v : {Scope::template_b, Scope::diff, Scope::missing, Scope::added, Scope::changed})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Per-path filters are ANDed; count bounds apply to the number of paths
/// passing them. Without count bounds one passing path satisfies the condition.
struct Predicate {
  std::optional<std::string> equals;
  std::optional<std::string> contains;
  std::optional<std::string> not_contains;
  std::optional<ValueKind> kind;
  std::optional<std::size_t> count_eq;
  std::optional<std::size_t> count_ge;
};

struct Condition {
  std::string path_pattern;  // '*' matches any run of characters, dots included
  Predicate predicate;
  Scope scope = Scope::template_b;
};

struct Indicator {
  std::string indicator_id;
  Meaning meaning = Meaning::automation;
  std::vector<Condition> all;  // conjunction
};

/// Glob with '*' as the only metacharacter.
inline bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, resume = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      resume = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++resume;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

class IndicatorKB {
 public:
  IndicatorKB() = default;
  explicit IndicatorKB(std::vector<Indicator> entries) {
    std::set<std::string> ids;
    for (const auto& e : entries) {
      if (e.indicator_id.empty()) throw ConfigError("indicator without id");
      if (!ids.insert(e.indicator_id).second) throw ConfigError("duplicate indicator id '" + e.indicator_id + "'");
      if (e.all.empty()) throw ConfigError("indicator '" + e.indicator_id + "' has no conditions");
      for (const auto& c : e.all) {
        if (c.path_pattern.empty()) throw ConfigError("indicator '" + e.indicator_id + "' has an empty path_pattern");
        if ((c.predicate.count_eq && *c.predicate.count_eq == 0) || (c.predicate.count_ge && *c.predicate.count_ge == 0))
          throw ConfigError("indicator '" + e.indicator_id + "': count bounds must be at least 1");
      }
    }
    entries_ = std::move(entries);
  }

  const std::vector<Indicator>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Indicator> entries_;
};

inline std::vector<Indicator> default_indicators() {
  const auto cond = [](std::string pattern, Predicate p, Scope s = Scope::template_b) {
    return Condition{std::move(pattern), std::move(p), s};
  };
  const auto eq = [](std::string v) {
    Predicate p;
    p.equals = std::move(v);
    return p;
  };
  Predicate vmware;
  vmware.contains = "VMware, Inc.";
  Predicate one_font;
  one_font.count_eq = 1;
  Predicate non_native;
  non_native.kind = ValueKind::function;
  non_native.not_contains = "[native code]";
  Predicate many;
  many.count_ge = 1000;

  return {
      {"webdriver-flag", Meaning::automation, {cond("navigator.webdriver", eq("true"))}},
      {"avail-origin-zero",
       Meaning::display_less,
       {cond("screen.availTop", eq("0")), cond("screen.availLeft", eq("0"))}},
      {"webgl-missing", Meaning::display_less, {cond("webgl.*", many, Scope::missing)}},
      {"webgl-vmware", Meaning::virtualisation, {cond("webgl.*", vmware)}},
      {"docker-fonts-timezone", Meaning::mode_signature, {cond("fonts.*", one_font), cond("timezone.offset", eq("0"))}},
      {"instrument-getInstrumentJS", Meaning::instrumentation, {cond("*getInstrumentJS", {})}},
      {"instrument-jsInstruments", Meaning::instrumentation, {cond("*jsInstruments", {})}},
      {"instrument-fingerprinting-apis", Meaning::instrumentation, {cond("*instrumentFingerprintingApis", {})}},
      {"non-native-function", Meaning::instrumentation, {cond("*", non_native)}},
  };
}

inline IndicatorKB default_kb() { return IndicatorKB(default_indicators()); }

namespace detail {

inline Condition condition_from_json(const json& j, const std::string& id) {
  if (!j.contains("path_pattern") || !j["path_pattern"].is_string())
    throw ConfigError("indicator '" + id + "' needs a string path_pattern");
  Condition c;
  c.path_pattern = j["path_pattern"].get<std::string>();
  if (j.contains("scope")) {
    const auto s = j["scope"].is_string() ? parse_scope(j["scope"].get<std::string>()) : std::nullopt;
    if (!s) throw ConfigError("indicator '" + id + "' has an unknown scope");
    c.scope = *s;
  }
  if (j.contains("predicate") && !j["predicate"].is_null()) {
    const json& p = j["predicate"];
    if (!p.is_object()) throw ConfigError("indicator '" + id + "': predicate must be an object");
    for (const auto& [key, value] : p.items()) {
      if (key == "equals" || key == "contains" || key == "not_contains") {
        if (!value.is_string()) throw ConfigError("indicator '" + id + "': predicate '" + key + "' must be a string");
        auto& slot = key == "equals" ? c.predicate.equals : key == "contains" ? c.predicate.contains : c.predicate.not_contains;
        slot = value.get<std::string>();
      } else if (key == "kind") {
        const auto k = value.is_string() ? parse_value_kind(value.get<std::string>()) : std::nullopt;
        if (!k) throw ConfigError("indicator '" + id + "': unknown kind in predicate");
        c.predicate.kind = *k;
      } else if (key == "count_eq" || key == "count_ge") {
        if (!value.is_number_unsigned()) throw ConfigError("indicator '" + id + "': '" + key + "' must be a count");
        (key == "count_eq" ? c.predicate.count_eq : c.predicate.count_ge) = value.get<std::size_t>();
      } else {
        throw ConfigError("indicator '" + id + "': unknown predicate '" + key + "'");
      }
    }
  }
  return c;
}

inline json condition_to_json(const Condition& c) {
  json j = {{"path_pattern", c.path_pattern}};
  json p = json::object();
  if (c.predicate.equals) p["equals"] = *c.predicate.equals;
  if (c.predicate.contains) p["contains"] = *c.predicate.contains;
  if (c.predicate.not_contains) p["not_contains"] = *c.predicate.not_contains;
  if (c.predicate.kind) p["kind"] = to_string(*c.predicate.kind);
  if (c.predicate.count_eq) p["count_eq"] = *c.predicate.count_eq;
  if (c.predicate.count_ge) p["count_ge"] = *c.predicate.count_ge;
  if (!p.empty()) j["predicate"] = std::move(p);
  if (c.scope != Scope::template_b) j["scope"] = to_string(c.scope);
  return j;
}

}  // namespace detail

/// KB document: an array of {indicator_id, meaning, path_pattern,
/// predicate?, scope?} entries. An entry may instead carry "all": [...] with
/// several {path_pattern, predicate?, scope?} conditions that must all hold.
inline IndicatorKB kb_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("indicator KB must be a JSON array");
  std::vector<Indicator> entries;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("indicator_id") || !e["indicator_id"].is_string())
      throw ConfigError("KB entries need a string indicator_id");
    Indicator ind;
    ind.indicator_id = e["indicator_id"].get<std::string>();
    const auto m = e.contains("meaning") && e["meaning"].is_string() ? parse_meaning(e["meaning"].get<std::string>())
                                                                     : std::nullopt;
    if (!m) throw ConfigError("indicator '" + ind.indicator_id + "' has a missing or unknown meaning");
    ind.meaning = *m;
    if (e.contains("all")) {
      if (!e["all"].is_array()) throw ConfigError("indicator '" + ind.indicator_id + "': 'all' must be an array");
      for (const auto& c : e["all"]) ind.all.push_back(detail::condition_from_json(c, ind.indicator_id));
    } else {
      ind.all.push_back(detail::condition_from_json(e, ind.indicator_id));
    }
    entries.push_back(std::move(ind));
  }
  return IndicatorKB(std::move(entries));
}

inline IndicatorKB kb_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("indicator KB is not valid JSON: ") + e.what());
  }
  return kb_from_json(j);
}

inline json to_json(const Indicator& ind) {
  json j = {{"indicator_id", ind.indicator_id}, {"meaning", to_string(ind.meaning)}};
  if (ind.all.size() == 1) {
    j.update(detail::condition_to_json(ind.all.front()));
  } else {
    json all = json::array();
    for (const auto& c : ind.all) all.push_back(detail::condition_to_json(c));
    j["all"] = std::move(all);
  }
  return j;
}

inline json to_json(const IndicatorKB& kb) {
  json out = json::array();
  for (const auto& e : kb.entries()) out.push_back(to_json(e));
  return out;
}

// ---------------------------------------------------------------------------
// Screen profiles

struct ScreenProfile {
  Os os = Os::other;
  RunMode mode = RunMode::unknown;
  int width = 0, height = 0;
  int window_width = 0, window_height = 0;
  int x = 0, y = 0;
  int offset_x = 0, offset_y = 0;
};

/// Default window geometry of the measured automation setups.
inline std::vector<ScreenProfile> default_screen_profiles() {
  return {
      {Os::macos, RunMode::regular, 2560, 1440, 1366, 683, 23, 4, 0, 0},
      {Os::macos, RunMode::headless, 1366, 768, 1366, 683, 4, 4, 0, 0},
      {Os::ubuntu, RunMode::regular, 2560, 1440, 1366, 683, 80, 35, 8, 8},
      {Os::ubuntu, RunMode::headless, 1366, 768, 1366, 683, 0, 0, 0, 0},
      {Os::ubuntu, RunMode::xvfb, 1366, 768, 1366, 683, 0, 0, 0, 0},
      {Os::ubuntu, RunMode::docker, 2560, 1440, 1366, 683, 0, 0, 0, 0},
  };
}

struct ScreenMatch {
  Os os = Os::other;
  RunMode mode = RunMode::unknown;
  std::vector<std::string> evidence;

  bool matched() const { return mode != RunMode::unknown; }
};

namespace detail {

inline std::optional<int> int_property(const PropertyTemplate& t, const std::string& path) {
  const auto* d = t.find(path);
  if (!d || d->kind != ValueKind::number) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(d->repr, &used);
    if (used != d->repr.size() || v != static_cast<int>(v)) return std::nullopt;
    return static_cast<int>(v);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::optional<std::string> webgl_vendor(const PropertyTemplate& t) {
  for (const auto& path : {"webgl.vendor", "webgl.unmaskedVendor"})
    if (const auto* d = t.find(path)) return d->kind == ValueKind::null ? std::string() : d->repr;
  return std::nullopt;
}

}  // namespace detail

inline constexpr const char* kScreenPaths[] = {"screen.width",      "screen.height", "window.outerWidth",
                                               "window.outerHeight", "window.screenX", "window.screenY"};
inline constexpr const char* kOffsetPaths[] = {"window.offsetX", "window.offsetY"};

/// Matches resolution, window size and position (and the per-instance window
/// offset when the template records it) against the profiles. Profiles that
/// share geometry are told apart by the WebGL vendor: a software rasteriser
/// (llvmpipe, Mesa) means a virtual frame buffer, no vendor means headless.
inline ScreenMatch match_screen_profile(const PropertyTemplate& t,
                                        const std::vector<ScreenProfile>& profiles = default_screen_profiles()) {
  ScreenMatch out;
  int v[6];
  for (int i = 0; i < 6; ++i) {
    const auto x = detail::int_property(t, kScreenPaths[i]);
    if (!x) return out;
    v[i] = *x;
  }
  const auto ox = detail::int_property(t, kOffsetPaths[0]);
  const auto oy = detail::int_property(t, kOffsetPaths[1]);

  std::vector<const ScreenProfile*> hits;
  for (const auto& p : profiles) {
    if (p.width != v[0] || p.height != v[1] || p.window_width != v[2] || p.window_height != v[3] || p.x != v[4] ||
        p.y != v[5])
      continue;
    if (ox && oy && (p.offset_x != *ox || p.offset_y != *oy)) continue;
    hits.push_back(&p);
  }
  if (hits.empty()) return out;

  const ScreenProfile* chosen = hits.front();
  if (hits.size() > 1) {
    chosen = nullptr;
    const auto vendor = detail::webgl_vendor(t);
    const bool software = vendor && (vendor->find("llvmpipe") != std::string::npos ||
                                     vendor->find("Mesa") != std::string::npos);
    const bool absent = !vendor || vendor->empty() || *vendor == "null";
    for (const auto* p : hits) {
      if (software && p->mode == RunMode::xvfb) chosen = p;
      if (absent && !software && p->mode == RunMode::headless) chosen = p;
    }
    if (!chosen) return out;
    for (const auto& path : {"webgl.vendor", "webgl.unmaskedVendor"})
      if (t.find(path)) out.evidence.emplace_back(path);
  }
  out.os = chosen->os;
  out.mode = chosen->mode;
  for (const auto* p : kScreenPaths) out.evidence.emplace_back(p);
  if (ox && oy)
    for (const auto* p : kOffsetPaths) out.evidence.emplace_back(p);
  std::sort(out.evidence.begin(), out.evidence.end());
  return out;
}

// ---------------------------------------------------------------------------
// Prototype pollution

/// Members that only Object.prototype defines as own properties.
inline const std::set<std::string>& object_prototype_members() {
  static const std::set<std::string> members = {
      "__defineGetter__", "__defineSetter__", "__lookupGetter__",     "__lookupSetter__", "hasOwnProperty",
      "isPrototypeOf",    "propertyIsEnumerable", "toLocaleString", "valueOf"};
  return members;
}

struct PollutionResult {
  bool polluted = false;
  bool insufficient_data = false;
  std::vector<std::string> evidence;
};

/// Looks for "<Interface>.prototype.<member>" entries where the member belongs
/// to Object.prototype, i.e. ancestor members flattened onto a nearer prototype.
inline PollutionResult detect_prototype_pollution(const PropertyTemplate& t) {
  static constexpr std::string_view kProto = ".prototype.";
  PollutionResult out;
  bool any_prototype = false;
  for (const auto& [path, desc] : t.properties) {
    const auto at = path.find(kProto);
    if (at == std::string::npos) continue;
    any_prototype = true;
    const std::string_view owner = std::string_view(path).substr(0, at);
    const auto dot = owner.rfind('.');
    const auto owner_name = dot == std::string_view::npos ? owner : owner.substr(dot + 1);
    std::string_view member = std::string_view(path).substr(at + kProto.size());
    member = member.substr(0, member.find('.'));
    if (owner_name != "Object" && object_prototype_members().contains(std::string(member))) out.evidence.push_back(path);
  }
  out.insufficient_data = !any_prototype;
  out.polluted = !out.evidence.empty();
  return out;
}

// ---------------------------------------------------------------------------
// Surface classification

struct IndicatorMatch {
  std::string indicator_id;
  Meaning meaning = Meaning::automation;
  std::vector<std::string> evidence;  // sorted, unique
};

struct SurfaceReport {
  std::vector<IndicatorMatch> indicators;  // KB order
  ScreenMatch screen;
  RunMode run_mode_guess = RunMode::unknown;
  PollutionResult prototype_pollution;
  FingerprintDiff residual;  // deviations no matched indicator cites
};

namespace detail {

struct Candidate {
  const std::string* path;
  const ValueDescriptor* desc;
};

inline std::vector<Candidate> candidates(const Condition& c, const FingerprintDiff& diff, const PropertyTemplate& a,
                                         const PropertyTemplate& b) {
  std::vector<Candidate> out;
  const auto from_template = [&](const PropertyTemplate& t, const std::string& path) {
    if (const auto* d = t.find(path)) out.push_back({&path, d});
  };
  switch (c.scope) {
    case Scope::template_b:
      for (const auto& [path, d] : b.properties)
        if (glob_match(c.path_pattern, path)) out.push_back({&path, &d});
      break;
    case Scope::diff:
    case Scope::missing:
    case Scope::added:
    case Scope::changed: {
      const bool all = c.scope == Scope::diff;
      if (all || c.scope == Scope::missing)
        for (const auto& path : diff.missing)
          if (glob_match(c.path_pattern, path)) from_template(a, path);
      if (all || c.scope == Scope::added)
        for (const auto& path : diff.added)
          if (glob_match(c.path_pattern, path)) from_template(b, path);
      if (all || c.scope == Scope::changed)
        for (const auto& ch : diff.changed)
          if (glob_match(c.path_pattern, ch.path)) out.push_back({&ch.path, &ch.b});
      break;
    }
  }
  return out;
}

inline bool passes(const Predicate& p, const ValueDescriptor& d) {
  if (p.equals && d.repr != *p.equals) return false;
  if (p.contains && d.repr.find(*p.contains) == std::string::npos) return false;
  if (p.not_contains && d.repr.find(*p.not_contains) != std::string::npos) return false;
  if (p.kind && d.kind != *p.kind) return false;
  return true;
}

// Paths are taken from the baseline only for missing entries, which are
// part of the diff, so every cited path exists in the diff or in B.
inline std::optional<std::vector<std::string>> evaluate(const Condition& c, const FingerprintDiff& diff,
                                                        const PropertyTemplate& a, const PropertyTemplate& b) {
  std::vector<std::string> hits;
  for (const auto& cand : candidates(c, diff, a, b))
    if (passes(c.predicate, *cand.desc)) hits.push_back(*cand.path);
  if (c.predicate.count_eq && hits.size() != *c.predicate.count_eq) return std::nullopt;
  if (c.predicate.count_ge && hits.size() < *c.predicate.count_ge) return std::nullopt;
  if (hits.empty()) return std::nullopt;
  return hits;
}

}  // namespace detail

/// Applies the KB to the candidate template and its diff against a baseline.
/// The run-mode guess prefers the screen profile; without one, a Docker
/// signature in the KB is used.
inline SurfaceReport classify_surface(const FingerprintDiff& diff, const PropertyTemplate& baseline,
                                      const PropertyTemplate& candidate, const IndicatorKB& kb) {
  SurfaceReport r;
  std::set<std::string> cited;
  for (const auto& ind : kb.entries()) {
    std::set<std::string> evidence;
    bool ok = true;
    for (const auto& c : ind.all) {
      const auto hits = detail::evaluate(c, diff, baseline, candidate);
      if (!hits) {
        ok = false;
        break;
      }
      evidence.insert(hits->begin(), hits->end());
    }
    if (!ok) continue;
    cited.insert(evidence.begin(), evidence.end());
    r.indicators.push_back({ind.indicator_id, ind.meaning, std::vector<std::string>(evidence.begin(), evidence.end())});
  }

  r.screen = match_screen_profile(candidate);
  r.run_mode_guess = r.screen.mode;
  if (r.run_mode_guess == RunMode::unknown &&
      std::any_of(r.indicators.begin(), r.indicators.end(),
                  [](const IndicatorMatch& m) { return m.meaning == Meaning::mode_signature; }))
    r.run_mode_guess = RunMode::docker;
  r.prototype_pollution = detect_prototype_pollution(candidate);

  for (const auto& p : diff.missing)
    if (!cited.contains(p)) r.residual.missing.insert(p);
  for (const auto& p : diff.added)
    if (!cited.contains(p)) r.residual.added.insert(p);
  for (const auto& c : diff.changed)
    if (!cited.contains(c.path)) r.residual.changed.push_back(c);
  return r;
}

inline json to_json(const SurfaceReport& r) {
  json indicators = json::array();
  for (const auto& m : r.indicators)
    indicators.push_back({{"indicator_id", m.indicator_id}, {"meaning", to_string(m.meaning)}, {"evidence", m.evidence}});
  json screen = nullptr;
  if (r.screen.matched())
    screen = {{"os", to_string(r.screen.os)}, {"run_mode", to_string(r.screen.mode)}, {"evidence", r.screen.evidence}};
  json pollution = {{"polluted", r.prototype_pollution.polluted}, {"evidence", r.prototype_pollution.evidence}};
  if (r.prototype_pollution.insufficient_data) pollution["note"] = "insufficient data";
  return {{"indicators", std::move(indicators)},
          {"screen_profile", std::move(screen)},
          {"run_mode_guess", to_string(r.run_mode_guess)},
          {"prototype_pollution", std::move(pollution)},
          {"residual", to_json(r.residual)}};
}

}  // namespace botscope
