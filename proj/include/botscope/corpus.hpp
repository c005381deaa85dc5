#pragma once

// Data model and JSONL/JSON loaders for crawl artifacts: collected scripts,
// recorded JavaScript calls, property templates, cookies and HTTP requests.
//
// Loaders validate every line and collect errors instead of stopping at the
// first bad record. Serialization emits canonical form: sorted keys, compact
// separators, one record per line.

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "botscope/parallel.hpp"
#include "botscope/url.hpp"

namespace botscope {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enumerations

enum class PageKind { front, sub };
enum class Operation { get, set, call };
enum class Os { macos, ubuntu, other };
enum class RunMode { regular, headless, xvfb, docker, unknown };
enum class ValueKind { undefined, null, boolean, number, string, function, object };
enum class Party { first, third, unknown };

namespace detail {

template <typename E, std::size_t N>
struct EnumNames {
  std::array<std::pair<E, std::string_view>, N> names;

  constexpr std::string_view to_string(E e) const {
    for (const auto& [value, name] : names)
      if (value == e) return name;
    return "?";
  }
  std::optional<E> parse(std::string_view s) const {
    for (const auto& [value, name] : names)
      if (name == s) return value;
    return std::nullopt;
  }
};

inline constexpr EnumNames<PageKind, 2> kPageKind{
    {{{PageKind::front, "front"}, {PageKind::sub, "sub"}}}};
inline constexpr EnumNames<Operation, 3> kOperation{
    {{{Operation::get, "get"}, {Operation::set, "set"}, {Operation::call, "call"}}}};
inline constexpr EnumNames<Os, 3> kOs{
    {{{Os::macos, "macos"}, {Os::ubuntu, "ubuntu"}, {Os::other, "other"}}}};
inline constexpr EnumNames<RunMode, 5> kRunMode{{{{RunMode::regular, "regular"},
                                                  {RunMode::headless, "headless"},
                                                  {RunMode::xvfb, "xvfb"},
                                                  {RunMode::docker, "docker"},
                                                  {RunMode::unknown, "unknown"}}}};
inline constexpr EnumNames<ValueKind, 7> kValueKind{{{{ValueKind::undefined, "undefined"},
                                                      {ValueKind::null, "null"},
                                                      {ValueKind::boolean, "boolean"},
                                                      {ValueKind::number, "number"},
                                                      {ValueKind::string, "string"},
                                                      {ValueKind::function, "function"},
                                                      {ValueKind::object, "object"}}}};
inline constexpr EnumNames<Party, 3> kParty{
    {{{Party::first, "first"}, {Party::third, "third"}, {Party::unknown, "unknown"}}}};

}  // namespace detail

inline std::string_view to_string(PageKind v) { return detail::kPageKind.to_string(v); }
inline std::string_view to_string(Operation v) { return detail::kOperation.to_string(v); }
inline std::string_view to_string(Os v) { return detail::kOs.to_string(v); }
inline std::string_view to_string(RunMode v) { return detail::kRunMode.to_string(v); }
inline std::string_view to_string(ValueKind v) { return detail::kValueKind.to_string(v); }
inline std::string_view to_string(Party v) { return detail::kParty.to_string(v); }

inline std::optional<PageKind> parse_page_kind(std::string_view s) { return detail::kPageKind.parse(s); }
inline std::optional<Operation> parse_operation(std::string_view s) { return detail::kOperation.parse(s); }
inline std::optional<Os> parse_os(std::string_view s) { return detail::kOs.parse(s); }
inline std::optional<RunMode> parse_run_mode(std::string_view s) { return detail::kRunMode.parse(s); }
inline std::optional<ValueKind> parse_value_kind(std::string_view s) { return detail::kValueKind.parse(s); }
inline std::optional<Party> parse_party(std::string_view s) { return detail::kParty.parse(s); }

// ---------------------------------------------------------------------------
// Hashing

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

inline bool is_sha256_hex(std::string_view s) {
  if (s.size() != 64) return false;
  for (char c : s)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Records

struct ScriptRecord {
  std::string site;
  std::int64_t site_rank = 0;
  std::string page_url;
  PageKind page_kind = PageKind::front;
  std::string script_url;
  std::string sha256;
  std::string body_path;
  std::string body;
  // Registrable domain reached after redirects, when it differs from `site`.
  std::optional<std::string> final_site;

  const std::string& effective_site() const { return final_site ? *final_site : site; }
};

struct CallLogEntry {
  std::string visit_id;
  std::string site;
  std::string page_url;
  std::string script_url;
  std::string symbol;
  Operation operation = Operation::get;
  std::optional<std::string> value;
  std::uint64_t timestamp_ms = 0;
};

struct ValueDescriptor {
  ValueKind kind = ValueKind::undefined;
  std::string repr;

  friend bool operator==(const ValueDescriptor&, const ValueDescriptor&) = default;
};

struct PropertyTemplate {
  std::string client_label;
  Os os = Os::other;
  RunMode run_mode = RunMode::unknown;
  std::map<std::string, ValueDescriptor> properties;

  const ValueDescriptor* find(const std::string& path) const {
    const auto it = properties.find(path);
    return it == properties.end() ? nullptr : &it->second;
  }
};

struct CookieObservation {
  std::string site;
  std::string cookie_domain;
  std::string name;
  bool is_session = false;
  std::vector<std::optional<std::string>> values_per_visit;
};

struct RequestRecord {
  std::string site;
  std::string url;
  std::string resource_type;
  Party party = Party::unknown;
};

// ---------------------------------------------------------------------------
// Errors

enum class LoadErrorKind { malformed, truncated, invalid, hash_mismatch, missing_body, duplicate };

inline std::string_view to_string(LoadErrorKind k) {
  switch (k) {
    case LoadErrorKind::malformed: return "Malformed";
    case LoadErrorKind::truncated: return "Truncated";
    case LoadErrorKind::invalid: return "Invalid";
    case LoadErrorKind::hash_mismatch: return "HashMismatch";
    case LoadErrorKind::missing_body: return "MissingBody";
    case LoadErrorKind::duplicate: return "Duplicate";
  }
  return "?";
}

struct LoadError {
  std::size_t line = 0;  // 1-based; 0 when the error is not tied to a line
  LoadErrorKind kind = LoadErrorKind::invalid;
  std::string message;
};

inline std::string describe(const LoadError& e) {
  std::ostringstream os;
  if (e.line > 0) os << "line " << e.line << ": ";
  os << to_string(e.kind) << ": " << e.message;
  return os.str();
}

/// Thrown when an input file cannot be read at all.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct LoadResult {
  std::vector<T> records;
  std::vector<LoadError> errors;

  bool ok() const { return errors.empty(); }
};

namespace detail {

struct RecordError {
  LoadErrorKind kind;
  std::string message;
};

struct Line {
  std::size_t number = 0;
  std::string text;
  bool terminated = true;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<Line> split_lines(std::string_view content) {
  std::vector<Line> lines;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    ++number;
    Line line;
    line.number = number;
    if (nl == std::string_view::npos) {
      line.text = std::string(content.substr(pos));
      line.terminated = false;
      pos = content.size();
    } else {
      line.text = std::string(content.substr(pos, nl - pos));
      pos = nl + 1;
    }
    if (!line.text.empty() && line.text.back() == '\r') line.text.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

[[noreturn]] inline void fail(LoadErrorKind kind, std::string message) {
  throw RecordError{kind, std::move(message)};
}

inline const json& field(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) fail(LoadErrorKind::invalid, std::string("missing field '") + name + "'");
  return *it;
}

inline std::string string_field(const json& j, const char* name, bool allow_empty = false) {
  const json& v = field(j, name);
  if (!v.is_string()) fail(LoadErrorKind::invalid, std::string("field '") + name + "' must be a string");
  auto s = v.get<std::string>();
  if (!allow_empty && s.empty()) fail(LoadErrorKind::invalid, std::string("field '") + name + "' is empty");
  return s;
}

inline std::optional<std::string> optional_string(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) fail(LoadErrorKind::invalid, std::string("field '") + name + "' must be a string");
  return it->get<std::string>();
}

inline std::int64_t integer_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number_integer()) fail(LoadErrorKind::invalid, std::string("field '") + name + "' must be an integer");
  return v.get<std::int64_t>();
}

inline bool bool_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_boolean()) fail(LoadErrorKind::invalid, std::string("field '") + name + "' must be a boolean");
  return v.get<bool>();
}

template <typename E, typename Parse>
E enum_field(const json& j, const char* name, Parse parse) {
  const auto s = string_field(j, name);
  const auto v = parse(s);
  if (!v) fail(LoadErrorKind::invalid, std::string("field '") + name + "' has unknown value '" + s + "'");
  return *v;
}

inline void require_absolute_url(const std::string& url, const char* name) {
  if (!parse_url(url)) fail(LoadErrorKind::invalid, std::string("field '") + name + "' is not an absolute URL: " + url);
}

inline bool valid_symbol(std::string_view symbol) {
  if (symbol.empty() || symbol.front() == '.' || symbol.back() == '.') return false;
  return symbol.find("..") == std::string_view::npos;
}

/// Parses each non-blank line with parse(json, line) in parallel and keeps
/// input order. A final line without a newline that fails to parse is
/// reported as truncated.
template <typename T, typename Parse>
LoadResult<T> load_jsonl(const std::filesystem::path& path, unsigned threads, Parse&& parse) {
  const auto lines = split_lines(read_file(path));
  struct Outcome {
    std::optional<T> record;
    std::optional<LoadError> error;
  };
  auto outcomes = parallel_map(lines, threads, [&](const Line& line) -> Outcome {
    const auto first = line.text.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    json j;
    try {
      j = json::parse(line.text);
    } catch (const json::parse_error& e) {
      const auto kind = line.terminated ? LoadErrorKind::malformed : LoadErrorKind::truncated;
      std::string msg = line.terminated ? e.what() : std::string("partial last line: ") + e.what();
      return {std::nullopt, LoadError{line.number, kind, std::move(msg)}};
    }
    if (!j.is_object())
      return {std::nullopt, LoadError{line.number, LoadErrorKind::malformed, "line is not a JSON object"}};
    try {
      return {parse(j), std::nullopt};
    } catch (const RecordError& e) {
      return {std::nullopt, LoadError{line.number, e.kind, e.message}};
    }
  });
  LoadResult<T> result;
  for (auto& o : outcomes) {
    if (o.record) result.records.push_back(std::move(*o.record));
    if (o.error) result.errors.push_back(std::move(*o.error));
  }
  return result;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsing single records (exposed for tests and in-memory use)

inline ScriptRecord parse_manifest_record(const json& j, const std::filesystem::path& base_dir) {
  using namespace detail;
  ScriptRecord r;
  r.site = string_field(j, "site");
  r.site_rank = integer_field(j, "site_rank");
  if (r.site_rank <= 0) fail(LoadErrorKind::invalid, "site_rank must be positive");
  r.page_url = string_field(j, "page_url");
  require_absolute_url(r.page_url, "page_url");
  r.page_kind = enum_field<PageKind>(j, "page_kind", parse_page_kind);
  r.sha256 = string_field(j, "sha256");
  if (!is_sha256_hex(r.sha256)) fail(LoadErrorKind::invalid, "sha256 must be 64 lower-case hex characters");
  r.body_path = string_field(j, "body_path");
  r.final_site = optional_string(j, "final_site");
  if (r.final_site && r.final_site->empty()) r.final_site.reset();

  const auto script_url = optional_string(j, "script_url");
  if (!script_url || script_url->empty() || *script_url == "inline") {
    r.script_url = inline_marker(r.sha256);
  } else {
    r.script_url = *script_url;
    if (!is_inline_marker(r.script_url)) require_absolute_url(r.script_url, "script_url");
  }

  const auto body_file = base_dir / r.body_path;
  std::ifstream in(body_file, std::ios::binary);
  if (!in) fail(LoadErrorKind::missing_body, "cannot read body " + body_file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  r.body = ss.str();
  const auto digest = sha256_hex(r.body);
  if (digest != r.sha256)
    fail(LoadErrorKind::hash_mismatch, "sha256 " + r.sha256 + " does not match body digest " + digest);
  return r;
}

inline CallLogEntry parse_call_log_entry(const json& j) {
  using namespace detail;
  CallLogEntry e;
  e.visit_id = string_field(j, "visit_id");
  e.site = string_field(j, "site");
  e.page_url = string_field(j, "page_url");
  e.script_url = string_field(j, "script_url");
  e.symbol = string_field(j, "symbol");
  if (!valid_symbol(e.symbol)) fail(LoadErrorKind::invalid, "symbol must be a dot-separated path: " + e.symbol);
  e.operation = enum_field<Operation>(j, "operation", parse_operation);
  e.value = optional_string(j, "value");
  const json& ts = field(j, "timestamp_ms");
  if (!ts.is_number_integer() || ts.get<std::int64_t>() < 0)
    fail(LoadErrorKind::invalid, "timestamp_ms must be a non-negative integer");
  e.timestamp_ms = ts.get<std::uint64_t>();
  return e;
}

inline CookieObservation parse_cookie(const json& j) {
  using namespace detail;
  CookieObservation c;
  c.site = string_field(j, "site");
  c.cookie_domain = string_field(j, "cookie_domain");
  c.name = string_field(j, "name");
  c.is_session = bool_field(j, "is_session");
  const json& values = field(j, "values_per_visit");
  if (!values.is_array()) fail(LoadErrorKind::invalid, "values_per_visit must be an array");
  for (const auto& v : values) {
    if (v.is_null())
      c.values_per_visit.emplace_back(std::nullopt);
    else if (v.is_string())
      c.values_per_visit.emplace_back(v.get<std::string>());
    else
      fail(LoadErrorKind::invalid, "values_per_visit entries must be strings or null");
  }
  return c;
}

inline RequestRecord parse_request(const json& j) {
  using namespace detail;
  RequestRecord r;
  r.site = string_field(j, "site");
  r.url = string_field(j, "url");
  r.resource_type = string_field(j, "resource_type");
  if (j.contains("party") && !j["party"].is_null()) r.party = enum_field<Party>(j, "party", parse_party);
  return r;
}

// ---------------------------------------------------------------------------
// Loaders

/// Loads a script manifest; body_path entries are resolved relative to the
/// manifest's directory. Also rejects subpage records whose page_url equals
/// the front page URL recorded for the same site.
inline LoadResult<ScriptRecord> load_manifest(const std::filesystem::path& path,
                                              unsigned threads = 1) {
  const auto base = path.parent_path();
  auto result = detail::load_jsonl<ScriptRecord>(
      path, threads, [&](const json& j) { return parse_manifest_record(j, base); });

  std::set<std::pair<std::string, std::string>> front_pages;
  for (const auto& r : result.records)
    if (r.page_kind == PageKind::front) front_pages.emplace(r.site, r.page_url);
  if (front_pages.empty()) return result;

  std::vector<ScriptRecord> kept;
  kept.reserve(result.records.size());
  for (auto& r : result.records) {
    if (r.page_kind == PageKind::sub && front_pages.contains({r.site, r.page_url})) {
      result.errors.push_back({0, LoadErrorKind::invalid,
                               "subpage record for " + r.site + " uses the front page URL " + r.page_url});
      continue;
    }
    kept.push_back(std::move(r));
  }
  result.records = std::move(kept);
  return result;
}

inline LoadResult<CallLogEntry> load_call_log(const std::filesystem::path& path, unsigned threads = 1) {
  return detail::load_jsonl<CallLogEntry>(path, threads, parse_call_log_entry);
}

/// Loads cookie observations. When expected_visits is unset, the first valid
/// record fixes the visit count for the run.
inline LoadResult<CookieObservation> load_cookies(const std::filesystem::path& path,
                                                  std::optional<std::size_t> expected_visits = std::nullopt,
                                                  unsigned threads = 1) {
  auto result = detail::load_jsonl<CookieObservation>(path, threads, parse_cookie);
  if (result.records.empty()) return result;
  const std::size_t visits = expected_visits.value_or(result.records.front().values_per_visit.size());
  std::vector<CookieObservation> kept;
  for (auto& c : result.records) {
    if (c.values_per_visit.size() != visits) {
      result.errors.push_back({0, LoadErrorKind::invalid,
                               "cookie " + c.name + "@" + c.cookie_domain + " has " +
                                   std::to_string(c.values_per_visit.size()) + " visits, expected " +
                                   std::to_string(visits)});
      continue;
    }
    kept.push_back(std::move(c));
  }
  result.records = std::move(kept);
  return result;
}

inline LoadResult<RequestRecord> load_requests(const std::filesystem::path& path, unsigned threads = 1) {
  return detail::load_jsonl<RequestRecord>(path, threads, parse_request);
}

struct TemplateLoad {
  PropertyTemplate tmpl;
  std::vector<LoadError> errors;

  bool ok() const { return errors.empty(); }
};

/// Parses a template document. Duplicate property paths and invalid
/// descriptors are reported; the first occurrence of a duplicate path wins.
inline TemplateLoad parse_template(std::string_view text) {
  TemplateLoad out;
  std::map<std::string, int> path_counts;
  std::string top_key;
  json::parser_callback_t track = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key) {
      if (depth == 1) top_key = parsed.get<std::string>();
      if (depth == 2 && top_key == "properties") ++path_counts[parsed.get<std::string>()];
    }
    return true;
  };

  json doc;
  try {
    doc = json::parse(text, track);
  } catch (const json::parse_error& e) {
    out.errors.push_back({0, LoadErrorKind::malformed, e.what()});
    return out;
  }
  for (const auto& [path, count] : path_counts)
    if (count > 1)
      out.errors.push_back({0, LoadErrorKind::duplicate, "property path '" + path + "' appears " +
                                                             std::to_string(count) + " times"});
  try {
    using namespace detail;
    if (!doc.is_object()) fail(LoadErrorKind::malformed, "template must be a JSON object");
    out.tmpl.client_label = string_field(doc, "client_label", true);
    out.tmpl.os = enum_field<Os>(doc, "os", parse_os);
    out.tmpl.run_mode = enum_field<RunMode>(doc, "run_mode", parse_run_mode);
    const json& props = field(doc, "properties");
    if (!props.is_object()) fail(LoadErrorKind::invalid, "properties must be an object");
    for (const auto& [path, desc] : props.items()) {
      try {
        if (path.empty() || !valid_symbol(path)) fail(LoadErrorKind::invalid, "bad property path '" + path + "'");
        if (!desc.is_object()) fail(LoadErrorKind::invalid, "descriptor for '" + path + "' must be an object");
        ValueDescriptor d;
        d.kind = enum_field<ValueKind>(desc, "kind", parse_value_kind);
        d.repr = string_field(desc, "repr", true);
        if (d.kind == ValueKind::function && d.repr.empty())
          fail(LoadErrorKind::invalid, "function '" + path + "' has no string rendering");
        out.tmpl.properties.emplace(path, std::move(d));
      } catch (const RecordError& e) {
        out.errors.push_back({0, e.kind, e.message});
      }
    }
  } catch (const detail::RecordError& e) {
    out.errors.push_back({0, e.kind, e.message});
  }
  return out;
}

inline TemplateLoad load_template(const std::filesystem::path& path) {
  return parse_template(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Deduplication

struct Provenance {
  std::string site;
  std::string page_url;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct DedupeResult {
  std::vector<ScriptRecord> unique;
  std::map<std::string, std::vector<Provenance>> occurrence_index;
};

/// Keeps the first record per content digest, in input order.
inline DedupeResult dedupe_scripts(const std::vector<ScriptRecord>& records) {
  DedupeResult out;
  for (const auto& r : records) {
    auto [it, inserted] = out.occurrence_index.try_emplace(r.sha256);
    it->second.push_back({r.site, r.page_url});
    if (inserted) out.unique.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const ScriptRecord& r) {
  json j = {{"site", r.site},           {"site_rank", r.site_rank}, {"page_url", r.page_url},
            {"page_kind", to_string(r.page_kind)}, {"script_url", r.script_url},
            {"sha256", r.sha256},       {"body_path", r.body_path}};
  if (r.final_site) j["final_site"] = *r.final_site;
  return j;
}

inline json to_json(const CallLogEntry& e) {
  json j = {{"visit_id", e.visit_id},     {"site", e.site},     {"page_url", e.page_url},
            {"script_url", e.script_url}, {"symbol", e.symbol}, {"operation", to_string(e.operation)},
            {"timestamp_ms", e.timestamp_ms}};
  if (e.value) j["value"] = *e.value;
  return j;
}

inline json to_json(const PropertyTemplate& t) {
  json props = json::object();
  for (const auto& [path, d] : t.properties) props[path] = {{"kind", to_string(d.kind)}, {"repr", d.repr}};
  return {{"client_label", t.client_label},
          {"os", to_string(t.os)},
          {"run_mode", to_string(t.run_mode)},
          {"properties", std::move(props)}};
}

inline json to_json(const CookieObservation& c) {
  json values = json::array();
  for (const auto& v : c.values_per_visit) values.push_back(v ? json(*v) : json(nullptr));
  return {{"site", c.site},
          {"cookie_domain", c.cookie_domain},
          {"name", c.name},
          {"is_session", c.is_session},
          {"values_per_visit", std::move(values)}};
}

inline json to_json(const RequestRecord& r) {
  json j = {{"site", r.site}, {"url", r.url}, {"resource_type", r.resource_type}};
  if (r.party != Party::unknown) j["party"] = to_string(r.party);
  return j;
}

/// One canonical JSON document per line.
template <typename T>
std::string to_jsonl(const std::vector<T>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

}  // namespace botscope
