#pragma once

// Static detection of automation probes in script bodies.
//
// Scripts are normalized to UTF-8, stripped of comments and have printable
// hex escapes decoded before a configurable set of regular expressions is
// run over them.

#include <boost/regex.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "botscope/corpus.hpp"
#include "botscope/parallel.hpp"

namespace botscope {

// ---------------------------------------------------------------------------
// Encoding

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string decode_utf16(std::string_view bytes, bool little_endian) {
  std::string out;
  out.reserve(bytes.size());
  const auto unit = [&](std::size_t i) -> char16_t {
    const auto lo = static_cast<unsigned char>(bytes[little_endian ? i : i + 1]);
    const auto hi = static_cast<unsigned char>(bytes[little_endian ? i + 1 : i]);
    return static_cast<char16_t>(lo | (hi << 8));
  };
  std::size_t i = 0;
  for (; i + 1 < bytes.size(); i += 2) {
    const char16_t u = unit(i);
    if (u >= 0xD800 && u <= 0xDBFF && i + 3 < bytes.size()) {
      const char16_t low = unit(i + 2);
      if (low >= 0xDC00 && low <= 0xDFFF) {
        append_utf8(out, 0x10000 + ((static_cast<char32_t>(u) - 0xD800) << 10) + (low - 0xDC00));
        i += 2;
        continue;
      }
    }
    append_utf8(out, (u >= 0xD800 && u <= 0xDFFF) ? char32_t{0xFFFD} : char32_t{u});
  }
  if (i < bytes.size()) append_utf8(out, 0xFFFD);  // odd trailing byte
  return out;
}

inline bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)
      return false;
    i += len;
  }
  return true;
}

inline std::string_view strip_leading_bom(std::string_view s) {
  while (s.starts_with("\xEF\xBB\xBF")) s.remove_prefix(3);
  return s;
}

}  // namespace detail

/// Decodes raw script bytes to UTF-8 text. Order: byte-order mark, UTF-8
/// validation, then Latin-1 (every byte maps to the code point of equal value).
inline std::string normalize_encoding(std::string_view body) {
  std::string text;
  if (body.starts_with("\xFF\xFE")) {
    text = detail::decode_utf16(body.substr(2), true);
  } else if (body.starts_with("\xFE\xFF")) {
    text = detail::decode_utf16(body.substr(2), false);
  } else if (detail::is_valid_utf8(body)) {
    text = std::string(body);
  } else {
    text.reserve(body.size() * 2);
    for (unsigned char c : body) detail::append_utf8(text, c);
  }
  return std::string(detail::strip_leading_bom(text));
}

// ---------------------------------------------------------------------------
// Hex literals

namespace detail {

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

inline bool decode_hex_once(std::string_view in, std::string& out) {
  out.clear();
  out.reserve(in.size());
  bool changed = false;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != '\\' || i + 1 >= in.size()) {
      out.push_back(in[i]);
      continue;
    }
    // An escaped backslash never starts an escape sequence.
    if (in[i + 1] == '\\') {
      out.append("\\\\");
      ++i;
      continue;
    }
    if (in[i + 1] == 'x' && i + 3 < in.size()) {
      const int hi = hex_value(in[i + 2]);
      const int lo = hex_value(in[i + 3]);
      if (hi >= 0 && lo >= 0) {
        const int value = hi * 16 + lo;
        if (value >= 0x20 && value <= 0x7E) {
          out.push_back(static_cast<char>(value));
          i += 3;
          changed = true;
          continue;
        }
      }
    }
    out.push_back(in[i]);
  }
  return changed;
}

}  // namespace detail

/// Replaces every \xNN escape with NN in 0x20..0x7E by that character.
/// Decoding is repeated until nothing changes, so an escape assembled from
/// decoded characters (e.g. "\x5cx41") is decoded as well and the result is a
/// fixed point.
inline std::string decode_hex_literals(std::string_view text) {
  std::string current(text);
  std::string next;
  while (current.find("\\x") != std::string::npos && detail::decode_hex_once(current, next))
    current.swap(next);
  return current;
}

// ---------------------------------------------------------------------------
// Comments

struct StripResult {
  std::string text;
  bool unterminated_block_comment = false;
};

namespace detail {

// Whether a '/' following `prev` (last significant code character) starts a
// regular expression literal rather than a division.
inline bool regex_allowed_after(std::string_view out, std::size_t last_significant) {
  if (last_significant == std::string_view::npos) return true;
  const char prev = out[last_significant];
  if (std::string_view("(,=:[!&|?{};+-*%<>~^").find(prev) != std::string_view::npos) return true;
  if (std::isalnum(static_cast<unsigned char>(prev)) || prev == '_' || prev == '$') {
    std::size_t start = last_significant;
    while (start > 0) {
      const auto c = static_cast<unsigned char>(out[start - 1]);
      if (!std::isalnum(c) && c != '_' && c != '$') break;
      --start;
    }
    static const std::set<std::string_view> kKeywords = {"return", "typeof", "instanceof", "in",   "of",
                                                         "new",    "delete", "void",       "throw", "case",
                                                         "do",     "else",   "yield",      "await"};
    return kKeywords.contains(out.substr(start, last_significant - start + 1));
  }
  return false;
}

}  // namespace detail

/// Removes // and /* */ comments with a single-pass tokenizer that keeps
/// string, template and regular-expression literals intact.
inline StripResult strip_comments(std::string_view text) {
  enum class State { code, line_comment, block_comment, single, dbl, templ, regex, regex_class };
  StripResult result;
  std::string& out = result.text;
  out.reserve(text.size());
  State state = State::code;
  std::size_t last_significant = std::string::npos;  // index into out

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const char next = i + 1 < text.size() ? text[i + 1] : '\0';
    switch (state) {
      case State::code:
        if (c == '/' && next == '/') {
          state = State::line_comment;
          ++i;
        } else if (c == '/' && next == '*') {
          state = State::block_comment;
          ++i;
        } else if (c == '/') {
          if (detail::regex_allowed_after(out, last_significant)) state = State::regex;
          out.push_back(c);
          last_significant = out.size() - 1;
        } else {
          if (c == '\'') state = State::single;
          if (c == '"') state = State::dbl;
          if (c == '`') state = State::templ;
          out.push_back(c);
          if (!std::isspace(static_cast<unsigned char>(c))) last_significant = out.size() - 1;
        }
        break;
      case State::line_comment:
        if (c == '\n' || c == '\r') {
          state = State::code;
          out.push_back(c);
        }
        break;
      case State::block_comment:
        if (c == '*' && next == '/') {
          ++i;
          state = State::code;
          // Keep tokens on both sides apart when joining them would form a
          // new comment opener.
          const char after = i + 1 < text.size() ? text[i + 1] : '\0';
          if (!out.empty() && out.back() == '/' && (after == '/' || after == '*')) out.push_back(' ');
        }
        break;
      case State::single:
      case State::dbl:
      case State::templ:
      case State::regex:
      case State::regex_class: {
        out.push_back(c);
        if (c == '\\' && i + 1 < text.size()) {
          out.push_back(text[++i]);
          break;
        }
        if (state == State::single && (c == '\'' || c == '\n')) state = State::code;
        else if (state == State::dbl && (c == '"' || c == '\n')) state = State::code;
        else if (state == State::templ && c == '`') state = State::code;
        else if (state == State::regex && c == '[') state = State::regex_class;
        else if (state == State::regex_class && c == ']') state = State::regex;
        else if ((state == State::regex || state == State::regex_class) && c == '\n') state = State::code;
        else if (state == State::regex && c == '/') state = State::code;
        if (state == State::code) last_significant = out.size() - 1;
        break;
      }
    }
  }
  result.unterminated_block_comment = state == State::block_comment;
  return result;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct Preprocessed {
  std::string text;
  std::vector<std::string> warnings;
};

/// normalize_encoding, then comment stripping and hex decoding repeated until
/// the text no longer changes. Each round that changes the text shortens it,
/// so the loop terminates, and its output is a fixed point of the pipeline.
inline Preprocessed preprocess(std::string_view body) {
  Preprocessed out;
  std::string text = normalize_encoding(body);
  bool unterminated = false;
  for (;;) {
    auto stripped = strip_comments(text);
    unterminated = unterminated || stripped.unterminated_block_comment;
    std::string decoded(detail::strip_leading_bom(decode_hex_literals(stripped.text)));
    if (decoded == text) break;
    text = std::move(decoded);
  }
  if (unterminated) out.warnings.emplace_back("unterminated block comment stripped to end of input");
  out.text = std::move(text);
  return out;
}

// ---------------------------------------------------------------------------
// Patterns

enum class PatternKind { literal, guarded, contextual };
enum class Target { selenium, openwpm };

inline std::string_view to_string(PatternKind k) {
  switch (k) {
    case PatternKind::literal: return "literal";
    case PatternKind::guarded: return "guarded";
    case PatternKind::contextual: return "contextual";
  }
  return "?";
}
inline std::string_view to_string(Target t) { return t == Target::selenium ? "selenium" : "openwpm"; }

struct Pattern {
  std::string id;
  PatternKind kind = PatternKind::literal;
  std::string expression;
  Target target = Target::selenium;
  bool fp_risk = false;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PatternSet {
 public:
  PatternSet() = default;

  /// Throws ConfigError naming the offending pattern on a duplicate id or an
  /// expression that does not compile.
  explicit PatternSet(std::vector<Pattern> patterns) {
    std::set<std::string> ids;
    for (auto& p : patterns) {
      if (p.id.empty()) throw ConfigError("pattern with empty id");
      if (!ids.insert(p.id).second) throw ConfigError("duplicate pattern id '" + p.id + "'");
      try {
        regexes_.emplace_back(p.expression, boost::regex::perl);
      } catch (const boost::regex_error& e) {
        throw ConfigError("pattern '" + p.id + "' does not compile: " + e.what());
      }
      patterns_.push_back(std::move(p));
    }
  }

  const std::vector<Pattern>& patterns() const { return patterns_; }
  const boost::regex& regex(std::size_t i) const { return regexes_[i]; }
  std::size_t size() const { return patterns_.size(); }
  bool empty() const { return patterns_.empty(); }

  const Pattern* find(std::string_view id) const {
    for (const auto& p : patterns_)
      if (p.id == id) return &p;
    return nullptr;
  }

 private:
  std::vector<Pattern> patterns_;
  std::vector<boost::regex> regexes_;
};

/// The patterns explored for Selenium and OpenWPM probes. The bare
/// "webdriver" literal matches unrelated uses of the word and is only
/// included on request.
inline std::vector<Pattern> default_patterns(bool enable_bare_literal = false) {
  std::vector<Pattern> p = {
      {"navigator-dot-webdriver", PatternKind::contextual, R"(navigator\.webdriver)", Target::selenium, false},
      {"navigator-bracket-webdriver", PatternKind::contextual, R"(navigator\[["']webdriver["']\])",
       Target::selenium, false},
      {"guarded-webdriver", PatternKind::guarded, R"((?<!_|-)webdriver(?!_|-))", Target::selenium, true},
      {"instrumentFingerprintingApis", PatternKind::literal, "instrumentFingerprintingApis", Target::openwpm, false},
      {"getInstrumentJS", PatternKind::literal, "getInstrumentJS", Target::openwpm, false},
      {"jsInstruments", PatternKind::literal, "jsInstruments", Target::openwpm, false},
  };
  if (enable_bare_literal)
    p.push_back({"bare-webdriver", PatternKind::literal, "webdriver", Target::selenium, true});
  return p;
}

inline Pattern pattern_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("pattern entry must be an object");
  Pattern p;
  const auto str = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) throw ConfigError(std::string("pattern entry lacks string '") + key + "'");
    return j[key].get<std::string>();
  };
  p.id = str("id");
  const auto kind = str("kind");
  if (kind == "literal") p.kind = PatternKind::literal;
  else if (kind == "guarded") p.kind = PatternKind::guarded;
  else if (kind == "contextual") p.kind = PatternKind::contextual;
  else throw ConfigError("pattern '" + p.id + "' has unknown kind '" + kind + "'");
  p.expression = str("expression");
  const auto target = str("target");
  if (target == "selenium") p.target = Target::selenium;
  else if (target == "openwpm") p.target = Target::openwpm;
  else throw ConfigError("pattern '" + p.id + "' has unknown target '" + target + "'");
  if (j.contains("fp_risk")) {
    if (!j["fp_risk"].is_boolean()) throw ConfigError("pattern '" + p.id + "' fp_risk must be boolean");
    p.fp_risk = j["fp_risk"].get<bool>();
  }
  return p;
}

inline json to_json(const Pattern& p) {
  return {{"id", p.id},
          {"kind", to_string(p.kind)},
          {"expression", p.expression},
          {"target", to_string(p.target)},
          {"fp_risk", p.fp_risk}};
}

/// Builds a PatternSet from a JSON array of {id, kind, expression, target, fp_risk}.
inline PatternSet compile_patterns(const json& config) {
  if (config.is_null()) return PatternSet{};
  if (!config.is_array()) throw ConfigError("pattern config must be a JSON array");
  std::vector<Pattern> patterns;
  for (const auto& entry : config) patterns.push_back(pattern_from_json(entry));
  return PatternSet(std::move(patterns));
}

inline PatternSet compile_patterns(std::string_view config_text) {
  json j;
  try {
    j = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("pattern config is not valid JSON: ") + e.what());
  }
  return compile_patterns(j);
}

// ---------------------------------------------------------------------------
// Scanning

struct PatternHit {
  std::string pattern_id;
  std::size_t byte_offset = 0;
  std::string matched_text;
  Target target = Target::selenium;
  bool fp_risk = false;

  friend bool operator==(const PatternHit&, const PatternHit&) = default;
};

/// All non-overlapping leftmost matches of every pattern, ordered by
/// (byte_offset, pattern_id).
inline std::vector<PatternHit> scan_script(std::string_view text, const PatternSet& set) {
  std::vector<PatternHit> hits;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& pattern = set.patterns()[i];
    boost::cregex_iterator it(text.data(), text.data() + text.size(), set.regex(i));
    for (const boost::cregex_iterator end; it != end; ++it) {
      const auto& m = *it;
      hits.push_back({pattern.id, static_cast<std::size_t>(m.position()), m.str(), pattern.target, pattern.fp_risk});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const PatternHit& a, const PatternHit& b) {
    return std::tie(a.byte_offset, a.pattern_id) < std::tie(b.byte_offset, b.pattern_id);
  });
  return hits;
}

enum class StaticLabel { selenium_detector, openwpm_detector, none };

inline std::string_view to_string(StaticLabel l) {
  switch (l) {
    case StaticLabel::selenium_detector: return "selenium_detector";
    case StaticLabel::openwpm_detector: return "openwpm_detector";
    case StaticLabel::none: return "none";
  }
  return "?";
}

inline std::optional<StaticLabel> parse_static_label(std::string_view s) {
  if (s == "selenium_detector") return StaticLabel::selenium_detector;
  if (s == "openwpm_detector") return StaticLabel::openwpm_detector;
  if (s == "none") return StaticLabel::none;
  return std::nullopt;
}

struct StaticVerdict {
  std::string sha256;
  StaticLabel label = StaticLabel::none;
  std::vector<PatternHit> hits;
  bool needs_manual_review = false;
};

inline StaticVerdict classify_static(std::string sha256, std::vector<PatternHit> hits) {
  StaticVerdict v;
  v.sha256 = std::move(sha256);
  const auto has = [&](Target t) {
    return std::any_of(hits.begin(), hits.end(), [t](const PatternHit& h) { return h.target == t; });
  };
  if (has(Target::openwpm)) v.label = StaticLabel::openwpm_detector;
  else if (has(Target::selenium)) v.label = StaticLabel::selenium_detector;
  v.needs_manual_review =
      !hits.empty() && std::all_of(hits.begin(), hits.end(), [](const PatternHit& h) { return h.fp_risk; });
  v.hits = std::move(hits);
  return v;
}

// ---------------------------------------------------------------------------
// Corpus scan

/// Where a scanned script was seen.
struct ScriptOccurrence {
  std::string site;
  std::int64_t site_rank = 0;
  std::string page_url;
  PageKind page_kind = PageKind::front;
  std::string script_url;
  std::optional<std::string> final_site;

  const std::string& effective_site() const { return final_site ? *final_site : site; }
};

/// A static verdict for one unique script with every place it was seen.
struct ScriptVerdict {
  StaticVerdict verdict;
  std::vector<ScriptOccurrence> occurrences;
  std::vector<std::string> warnings;
};

/// Deduplicates the manifest by content and scans every unique script, in
/// parallel. Output follows first-occurrence manifest order for any thread count.
inline std::vector<ScriptVerdict> scan_corpus(const std::vector<ScriptRecord>& records, const PatternSet& patterns,
                                              unsigned threads = 1) {
  const auto deduped = dedupe_scripts(records);
  std::map<std::string, std::vector<ScriptOccurrence>> occurrences;
  for (const auto& r : records)
    occurrences[r.sha256].push_back({r.site, r.site_rank, r.page_url, r.page_kind, r.script_url, r.final_site});

  auto verdicts = parallel_map(deduped.unique, threads, [&](const ScriptRecord& r) {
    auto pre = preprocess(r.body);
    ScriptVerdict sv;
    sv.verdict = classify_static(r.sha256, scan_script(pre.text, patterns));
    sv.warnings = std::move(pre.warnings);
    return sv;
  });
  for (auto& v : verdicts) v.occurrences = occurrences[v.verdict.sha256];
  return verdicts;
}

inline json to_json(const PatternHit& h) {
  return {{"pattern_id", h.pattern_id},
          {"byte_offset", h.byte_offset},
          {"matched_text", h.matched_text},
          {"target", to_string(h.target)},
          {"fp_risk", h.fp_risk}};
}

inline json to_json(const ScriptOccurrence& o) {
  json j = {{"site", o.site},
            {"site_rank", o.site_rank},
            {"page_url", o.page_url},
            {"page_kind", to_string(o.page_kind)},
            {"script_url", o.script_url}};
  if (o.final_site) j["final_site"] = *o.final_site;
  return j;
}

inline json to_json(const ScriptVerdict& sv) {
  json hits = json::array();
  for (const auto& h : sv.verdict.hits) hits.push_back(to_json(h));
  json occ = json::array();
  for (const auto& o : sv.occurrences) occ.push_back(to_json(o));
  json j = {{"sha256", sv.verdict.sha256},
            {"label", to_string(sv.verdict.label)},
            {"needs_manual_review", sv.verdict.needs_manual_review},
            {"hits", std::move(hits)},
            {"occurrences", std::move(occ)}};
  if (!sv.warnings.empty()) j["warnings"] = sv.warnings;
  return j;
}

inline ScriptVerdict parse_script_verdict(const json& j) {
  using namespace detail;
  ScriptVerdict sv;
  sv.verdict.sha256 = string_field(j, "sha256");
  sv.verdict.label = enum_field<StaticLabel>(j, "label", parse_static_label);
  sv.verdict.needs_manual_review = bool_field(j, "needs_manual_review");
  const json& hits = field(j, "hits");
  if (!hits.is_array()) fail(LoadErrorKind::invalid, "hits must be an array");
  for (const auto& h : hits) {
    PatternHit hit;
    hit.pattern_id = string_field(h, "pattern_id");
    hit.byte_offset = static_cast<std::size_t>(integer_field(h, "byte_offset"));
    hit.matched_text = string_field(h, "matched_text", true);
    const auto target = string_field(h, "target");
    if (target != "selenium" && target != "openwpm") fail(LoadErrorKind::invalid, "unknown target " + target);
    hit.target = target == "selenium" ? Target::selenium : Target::openwpm;
    hit.fp_risk = bool_field(h, "fp_risk");
    sv.verdict.hits.push_back(std::move(hit));
  }
  const json& occ = field(j, "occurrences");
  if (!occ.is_array()) fail(LoadErrorKind::invalid, "occurrences must be an array");
  for (const auto& o : occ) {
    ScriptOccurrence so;
    so.site = string_field(o, "site");
    so.site_rank = integer_field(o, "site_rank");
    so.page_url = string_field(o, "page_url");
    so.page_kind = enum_field<PageKind>(o, "page_kind", parse_page_kind);
    so.script_url = string_field(o, "script_url");
    so.final_site = optional_string(o, "final_site");
    sv.occurrences.push_back(std::move(so));
  }
  if (j.contains("warnings") && j["warnings"].is_array())
    for (const auto& w : j["warnings"]) sv.warnings.push_back(w.get<std::string>());
  return sv;
}

inline LoadResult<ScriptVerdict> load_static_verdicts(const std::filesystem::path& path, unsigned threads = 1) {
  return detail::load_jsonl<ScriptVerdict>(path, threads, parse_script_verdict);
}

}  // namespace botscope
