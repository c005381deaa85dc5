#pragma once

// First/third-party split via registrable domains (Public Suffix List) and
// attribution of detector scripts to known bot-detection providers.

#include <boost/regex.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "botscope/corpus.hpp"
#include "botscope/dynscan.hpp"
#include "botscope/staticscan.hpp"
#include "botscope/url.hpp"

namespace botscope {

// ---------------------------------------------------------------------------
// Public Suffix List

class PublicSuffixRules {
 public:
  /// Parses the Public Suffix List text format: one rule per line, "//"
  /// comments, rule text ends at the first whitespace. Wildcard rules start
  /// with "*.", exception rules with "!". Malformed rules are skipped.
  static PublicSuffixRules parse(std::string_view text) {
    PublicSuffixRules rules;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find_first_of("\r\n", pos);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty() || line.starts_with("//") || std::isspace(static_cast<unsigned char>(line.front()))) continue;
      const auto end = line.find_first_of(" \t");
      std::string rule = to_lower(line.substr(0, end));
      if (!rule.empty() && rule.back() == '.') rule.pop_back();
      if (rule.empty()) continue;
      if (rule.front() == '!') {
        rule.erase(0, 1);
        if (valid_rule(rule)) rules.exceptions_.insert(rule);
      } else if (rule.starts_with("*.")) {
        rule.erase(0, 2);
        if (valid_rule(rule)) rules.wildcards_.insert(rule);
      } else if (valid_rule(rule)) {
        rules.normal_.insert(rule);
      }
    }
    return rules;
  }

  bool empty() const { return normal_.empty() && wildcards_.empty() && exceptions_.empty(); }
  std::size_t size() const { return normal_.size() + wildcards_.size() + exceptions_.size(); }

  /// Number of trailing labels of `labels` forming the public suffix.
  std::size_t public_suffix_length(const std::vector<std::string_view>& labels) const {
    const std::size_t n = labels.size();
    std::vector<std::string> suffixes(n);
    for (std::size_t i = n; i-- > 0;)
      suffixes[i] = i + 1 < n ? std::string(labels[i]) + "." + suffixes[i + 1] : std::string(labels[i]);
    for (std::size_t i = 0; i < n; ++i)
      if (exceptions_.contains(suffixes[i])) return n - i - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (normal_.contains(suffixes[i])) return n - i;
      if (i + 1 < n && wildcards_.contains(suffixes[i + 1])) return n - i;
    }
    return 1;  // implicit "*" rule
  }

 private:
  static bool valid_rule(std::string_view rule) {
    return !rule.empty() && rule.front() != '.' && rule.find("..") == std::string_view::npos &&
           rule.find_first_of("!*/") == std::string_view::npos;
  }

  std::unordered_set<std::string> normal_;
  std::unordered_set<std::string> wildcards_;  // "*.X" stored as "X"
  std::unordered_set<std::string> exceptions_;  // "!X" stored as "X"
};

enum class DomainStatus { ok, ip_address, no_registrable_domain, invalid };

inline std::string_view to_string(DomainStatus s) {
  switch (s) {
    case DomainStatus::ok: return "ok";
    case DomainStatus::ip_address: return "ip_address";
    case DomainStatus::no_registrable_domain: return "NoRegistrableDomain";
    case DomainStatus::invalid: return "invalid";
  }
  return "?";
}

struct RegistrableDomain {
  std::string domain;  // empty unless status is ok or ip_address
  DomainStatus status = DomainStatus::invalid;

  bool ok() const { return status == DomainStatus::ok || status == DomainStatus::ip_address; }
};

namespace detail {

inline bool is_ipv4(std::string_view host) {
  int parts = 0;
  std::size_t pos = 0;
  while (pos <= host.size()) {
    auto dot = host.find('.', pos);
    if (dot == std::string_view::npos) dot = host.size();
    const auto label = host.substr(pos, dot - pos);
    if (label.empty() || label.size() > 3) return false;
    for (char c : label)
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    if (std::stoi(std::string(label)) > 255) return false;
    ++parts;
    pos = dot + 1;
  }
  return parts == 4;
}

}  // namespace detail

/// Registrable domain (eTLD+1): the public suffix per the prevailing rule
/// plus one more label. IP addresses are returned verbatim with status
/// ip_address; a host that is itself a public suffix yields
/// no_registrable_domain.
inline RegistrableDomain etld1(std::string_view hostname, const PublicSuffixRules& rules) {
  std::string host = to_lower(hostname);
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  if (!host.empty() && host.back() == '.') host.pop_back();
  if (host.empty() || host.front() == '.') return {"", DomainStatus::invalid};
  if (host.find(':') != std::string::npos || detail::is_ipv4(host)) return {host, DomainStatus::ip_address};

  std::vector<std::string_view> labels;
  std::string_view rest(host);
  while (true) {
    const auto dot = rest.find('.');
    const auto label = rest.substr(0, dot);
    if (label.empty()) return {"", DomainStatus::invalid};
    labels.push_back(label);
    if (dot == std::string_view::npos) break;
    rest.remove_prefix(dot + 1);
  }
  const std::size_t suffix = rules.public_suffix_length(labels);
  if (suffix >= labels.size()) return {"", DomainStatus::no_registrable_domain};
  std::string out;
  for (std::size_t i = labels.size() - suffix - 1; i < labels.size(); ++i) {
    if (!out.empty()) out += '.';
    out += labels[i];
  }
  return {out, DomainStatus::ok};
}

/// Host of an absolute URL, a scheme-less "host/path" reference or a bare host.
inline std::optional<std::string> host_of(std::string_view url_or_host) {
  if (const auto u = parse_url(url_or_host)) return u->host;
  if (url_or_host.find("://") != std::string_view::npos || url_or_host.empty()) return std::nullopt;
  if (const auto u = parse_url("http://" + std::string(url_or_host))) return u->host;
  return std::nullopt;
}

/// Registrable domain of a URL or bare host, falling back to the host itself
/// when no registrable domain exists.
inline std::string hosting_domain(std::string_view url_or_host, const PublicSuffixRules& rules) {
  const auto host = host_of(url_or_host);
  if (!host) return to_lower(url_or_host);
  const auto r = etld1(*host, rules);
  return r.ok() ? r.domain : *host;
}

/// first iff the script's registrable domain equals the site's; inline
/// scripts are first-party. unknown when no host can be read from the URL.
inline Party party_of(std::string_view script_url, std::string_view site, const PublicSuffixRules& rules) {
  if (is_inline_marker(script_url)) return Party::first;
  const auto host = host_of(script_url);
  if (!host) return Party::unknown;
  return hosting_domain(*host, rules) == hosting_domain(site, rules) ? Party::first : Party::third;
}

// ---------------------------------------------------------------------------
// Provider signatures

struct ProviderSignature {
  std::string provider;
  std::string path_pattern;
  std::string notes;
  std::set<std::string> sha256;  // optional known digests
};

class SignatureSet {
 public:
  SignatureSet() = default;
  explicit SignatureSet(std::vector<ProviderSignature> signatures) {
    for (auto& s : signatures) {
      if (s.provider.empty()) throw ConfigError("provider signature without provider name");
      try {
        regexes_.emplace_back(s.path_pattern, boost::regex::perl);
      } catch (const boost::regex_error& e) {
        throw ConfigError("signature for '" + s.provider + "' does not compile: " + e.what());
      }
      signatures_.push_back(std::move(s));
    }
  }

  const std::vector<ProviderSignature>& signatures() const { return signatures_; }
  const boost::regex& regex(std::size_t i) const { return regexes_[i]; }
  std::size_t size() const { return signatures_.size(); }

 private:
  std::vector<ProviderSignature> signatures_;
  std::vector<boost::regex> regexes_;
};

/// First-party detector URL shapes of commercial bot-detection services, in
/// priority order. Path patterns apply to path plus query.
inline std::vector<ProviderSignature> default_signatures() {
  return {
      {"Akamai", R"(^/akam/11/)", "domain/akam/11/...", {}},
      {"Incapsula", R"(^/_Incapsula_Resource\?)", "domain/_Incapsula_Resource?...", {}},
      {"Cloudflare", R"(/cdn-cgi/bm/cv/[0-9]+/api\.js$)", "domain/.../cdn-cgi/bm/cv/<id>/api.js", {}},
      {"PerimeterX", R"(/[A-Za-z0-9]{8}/init\.js$)", "domain/.../<8 characters>/init.js", {}},
      {"Unknown", R"(^/(assets|resources|public|static)/[A-Za-z0-9]{31,34}(?:[/.?]|$))",
       "domain/{assets|resources|public|static}/<31-34 character hash>", {}},
  };
}

inline SignatureSet signatures_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("signature config must be a JSON array");
  std::vector<ProviderSignature> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("provider") || !e.contains("path_pattern") || !e["provider"].is_string() ||
        !e["path_pattern"].is_string())
      throw ConfigError("signature entries need string 'provider' and 'path_pattern'");
    ProviderSignature s;
    s.provider = e["provider"].get<std::string>();
    s.path_pattern = e["path_pattern"].get<std::string>();
    if (e.contains("notes") && e["notes"].is_string()) s.notes = e["notes"].get<std::string>();
    if (e.contains("sha256") && e["sha256"].is_array())
      for (const auto& h : e["sha256"]) s.sha256.insert(h.get<std::string>());
    out.push_back(std::move(s));
  }
  return SignatureSet(std::move(out));
}

inline json to_json(const ProviderSignature& s) {
  json j = {{"provider", s.provider}, {"path_pattern", s.path_pattern}};
  if (!s.notes.empty()) j["notes"] = s.notes;
  if (!s.sha256.empty()) j["sha256"] = s.sha256;
  return j;
}

inline std::optional<std::string> match_provider(std::string_view script_url, std::string_view sha256,
                                                 const SignatureSet& signatures) {
  const auto u = parse_url(script_url);
  const std::string path = u ? u->path_query : std::string();
  for (std::size_t i = 0; i < signatures.size(); ++i) {
    const auto& s = signatures.signatures()[i];
    if (!sha256.empty() && s.sha256.contains(std::string(sha256))) return s.provider;
    if (u && boost::regex_search(path, signatures.regex(i))) return s.provider;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Detector inclusions

struct DetectorInclusion {
  std::string site;
  std::int64_t site_rank = 0;
  std::string script_url;
  std::string sha256;  // empty when only seen in call logs
  bool by_static = false;
  bool by_dynamic = false;
  bool front_page = false;
  bool sub_page = false;
  std::set<std::string> openwpm_symbols;
  Party party = Party::unknown;
  std::string hosting_domain;
  std::optional<std::string> provider;
};

struct AttributionOptions {
  // Also count needs_manual_review static verdicts and inconclusive dynamic ones.
  bool include_uncertain = false;
};

namespace detail {

inline std::string openwpm_symbol_for_pattern(const PatternHit& h) {
  if (h.target != Target::openwpm) return {};
  for (const auto* s : {"getInstrumentJS", "instrumentFingerprintingApis", "jsInstruments"})
    if (h.matched_text.find(s) != std::string::npos) return s;
  return h.pattern_id;
}

inline PageKind guess_page_kind(std::string_view page_url) {
  const auto u = parse_url(page_url);
  return (!u || u->path_query.empty() || u->path_query == "/") ? PageKind::front : PageKind::sub;
}

}  // namespace detail

/// One record per detector script per crawled site, merged across the static
/// and dynamic passes. Party is judged against the site reached after
/// redirects when the manifest records one.
inline std::vector<DetectorInclusion> collect_inclusions(const std::vector<ScriptVerdict>& statics,
                                                         const std::vector<DynamicVerdict>& dynamics,
                                                         const PublicSuffixRules& rules, const SignatureSet& signatures,
                                                         AttributionOptions options = {}) {
  std::map<ScriptKey, DetectorInclusion> merged;
  std::map<std::string, std::string> final_sites;
  std::map<std::pair<std::string, std::string>, PageKind> page_kinds;
  for (const auto& v : statics)
    for (const auto& o : v.occurrences) page_kinds.emplace(std::pair{o.site, o.page_url}, o.page_kind);

  for (const auto& v : statics) {
    if (!is_static_detector(v.verdict.label)) continue;
    if (v.verdict.needs_manual_review && !options.include_uncertain) continue;
    for (const auto& o : v.occurrences) {
      auto& inc = merged[{o.site, o.script_url}];
      inc.site = o.site;
      if (o.final_site) final_sites.emplace(o.site, *o.final_site);
      if (o.site_rank > 0 && (inc.site_rank == 0 || o.site_rank < inc.site_rank)) inc.site_rank = o.site_rank;
      inc.script_url = o.script_url;
      inc.sha256 = v.verdict.sha256;
      inc.by_static = true;
      (o.page_kind == PageKind::front ? inc.front_page : inc.sub_page) = true;
      for (const auto& h : v.verdict.hits)
        if (auto sym = detail::openwpm_symbol_for_pattern(h); !sym.empty()) inc.openwpm_symbols.insert(sym);
    }
  }
  for (const auto& d : dynamics) {
    const bool counts = d.category == DynamicCategory::detector ||
                        (options.include_uncertain && d.category == DynamicCategory::inconclusive);
    if (!counts) continue;
    auto& inc = merged[{d.site, d.script_url}];
    inc.site = d.site;
    if (d.site_rank > 0 && (inc.site_rank == 0 || d.site_rank < inc.site_rank)) inc.site_rank = d.site_rank;
    inc.script_url = d.script_url;
    inc.by_dynamic = true;
    for (const auto& page : d.page_urls) {
      const auto it = page_kinds.find({d.site, page});
      const auto kind = it != page_kinds.end() ? it->second : detail::guess_page_kind(page);
      (kind == PageKind::front ? inc.front_page : inc.sub_page) = true;
    }
    for (const auto& s : d.accessed_surface)
      if (is_openwpm_symbol(s)) inc.openwpm_symbols.insert(s);
  }

  std::vector<DetectorInclusion> out;
  for (auto& [key, inc] : merged) {
    const auto fs = final_sites.find(inc.site);
    const std::string& party_site = fs != final_sites.end() ? fs->second : inc.site;
    inc.party = party_of(inc.script_url, party_site, rules);
    inc.hosting_domain = is_inline_marker(inc.script_url) ? hosting_domain(party_site, rules)
                                                          : hosting_domain(inc.script_url, rules);
    inc.provider = match_provider(inc.script_url, inc.sha256, signatures);
    out.push_back(std::move(inc));
  }
  std::stable_sort(out.begin(), out.end(), [](const DetectorInclusion& a, const DetectorInclusion& b) {
    const auto ra = a.site_rank > 0 ? a.site_rank : std::numeric_limits<std::int64_t>::max();
    const auto rb = b.site_rank > 0 ? b.site_rank : std::numeric_limits<std::int64_t>::max();
    return std::tie(ra, a.site, a.script_url) < std::tie(rb, b.site, b.script_url);
  });
  return out;
}

inline json to_json(const DetectorInclusion& inc) {
  json j = {{"site", inc.site},
            {"site_rank", inc.site_rank},
            {"script_url", inc.script_url},
            {"sha256", inc.sha256},
            {"static", inc.by_static},
            {"dynamic", inc.by_dynamic},
            {"front_page", inc.front_page},
            {"sub_page", inc.sub_page},
            {"openwpm_symbols", inc.openwpm_symbols},
            {"party", to_string(inc.party)},
            {"hosting_domain", inc.hosting_domain}};
  j["provider"] = inc.provider ? json(*inc.provider) : json(nullptr);
  return j;
}

inline DetectorInclusion parse_inclusion(const json& j) {
  using namespace detail;
  DetectorInclusion inc;
  inc.site = string_field(j, "site");
  inc.site_rank = integer_field(j, "site_rank");
  inc.script_url = string_field(j, "script_url");
  inc.sha256 = string_field(j, "sha256", true);
  inc.by_static = bool_field(j, "static");
  inc.by_dynamic = bool_field(j, "dynamic");
  inc.front_page = bool_field(j, "front_page");
  inc.sub_page = bool_field(j, "sub_page");
  for (const auto& s : field(j, "openwpm_symbols")) inc.openwpm_symbols.insert(s.get<std::string>());
  inc.party = enum_field<Party>(j, "party", parse_party);
  inc.hosting_domain = string_field(j, "hosting_domain");
  inc.provider = optional_string(j, "provider");
  return inc;
}

inline LoadResult<DetectorInclusion> load_inclusions(const std::filesystem::path& path) {
  return detail::load_jsonl<DetectorInclusion>(path, 1, parse_inclusion);
}

// ---------------------------------------------------------------------------
// Tallies

struct TallyRow {
  std::string domain;
  std::size_t sites = 0;
  double percent = 0.0;  // of all (domain, site) inclusions
};

struct ThirdPartyTally {
  std::vector<TallyRow> rows;  // by sites descending, then domain
  std::size_t total = 0;
};

/// Counts each third-party hosting domain once per including site.
inline ThirdPartyTally tally_third_party(const std::vector<DetectorInclusion>& inclusions) {
  std::map<std::string, std::set<std::string>> sites_by_domain;
  for (const auto& inc : inclusions)
    if (inc.party == Party::third) sites_by_domain[inc.hosting_domain].insert(inc.site);
  ThirdPartyTally t;
  for (const auto& [domain, sites] : sites_by_domain) {
    t.rows.push_back({domain, sites.size(), 0.0});
    t.total += sites.size();
  }
  for (auto& r : t.rows) r.percent = t.total ? 100.0 * static_cast<double>(r.sites) / static_cast<double>(t.total) : 0.0;
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const TallyRow& a, const TallyRow& b) { return a.sites > b.sites; });
  return t;
}

struct HashCluster {
  std::string sha256;
  std::vector<std::string> sites;  // sorted
};

/// Sites sharing a byte-identical detector script. Singletons are omitted;
/// clusters come largest first, ties by digest.
inline std::vector<HashCluster> cluster_by_hash(const std::vector<DetectorInclusion>& inclusions) {
  std::map<std::string, std::set<std::string>> by_hash;
  for (const auto& inc : inclusions)
    if (!inc.sha256.empty()) by_hash[inc.sha256].insert(inc.site);
  std::vector<HashCluster> out;
  for (const auto& [hash, sites] : by_hash)
    if (sites.size() >= 2) out.push_back({hash, std::vector<std::string>(sites.begin(), sites.end())});
  std::stable_sort(out.begin(), out.end(),
                   [](const HashCluster& a, const HashCluster& b) { return a.sites.size() > b.sites.size(); });
  return out;
}

struct ProviderRow {
  std::string provider;
  std::size_t sites = 0;
};

/// Distinct first-party sites per matched provider.
inline std::vector<ProviderRow> provider_tally(const std::vector<DetectorInclusion>& inclusions) {
  std::map<std::string, std::set<std::string>> by_provider;
  for (const auto& inc : inclusions)
    if (inc.provider && inc.party == Party::first) by_provider[*inc.provider].insert(inc.site);
  std::vector<ProviderRow> out;
  for (const auto& [p, sites] : by_provider) out.push_back({p, sites.size()});
  std::stable_sort(out.begin(), out.end(), [](const ProviderRow& a, const ProviderRow& b) { return a.sites > b.sites; });
  return out;
}

}  // namespace botscope
