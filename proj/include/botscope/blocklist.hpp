#pragma once

// Adblock Plus filter subset used to tag requests as ads or trackers:
// "||host^" domain anchors, "|" start anchors, trailing "|" end anchors,
// plain substrings, the "^" separator class and "*" wildcards. Comments,
// element hiding, exception and regular-expression rules are counted and
// skipped; "$options" are dropped and the remaining pattern kept.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "botscope/url.hpp"

namespace botscope {

enum class ListName { easylist, easyprivacy };
enum class Anchor { domain_anchor, left_anchor, plain };

inline std::string_view to_string(ListName l) { return l == ListName::easylist ? "easylist" : "easyprivacy"; }
inline std::string_view to_string(Anchor a) {
  switch (a) {
    case Anchor::domain_anchor: return "domain_anchor";
    case Anchor::left_anchor: return "left_anchor";
    case Anchor::plain: return "plain";
  }
  return "?";
}

struct FilterRule {
  std::string raw;
  Anchor anchor = Anchor::plain;
  std::string pattern;  // lower-cased; '^' separator, '*' wildcard
  bool end_anchor = false;
  ListName list_name = ListName::easylist;
  std::size_t line = 0;
};

struct BlocklistStats {
  std::size_t rules = 0;
  std::size_t comments = 0;
  std::size_t element_hiding = 0;
  std::size_t exceptions = 0;
  std::size_t regex_rules = 0;
  std::size_t options_ignored = 0;
  std::size_t unsupported = 0;
};

struct ParsedBlocklist {
  std::vector<FilterRule> rules;
  BlocklistStats stats;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline ParsedBlocklist parse_blocklist(std::string_view text, ListName list_name) {
  ParsedBlocklist out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '!' || line.front() == '[') {
      ++out.stats.comments;
      continue;
    }
    if (line.find("##") != std::string_view::npos || line.find("#@#") != std::string_view::npos ||
        line.find("#?#") != std::string_view::npos || line.find("#$#") != std::string_view::npos) {
      ++out.stats.element_hiding;
      continue;
    }
    if (line.starts_with("@@")) {
      ++out.stats.exceptions;
      continue;
    }
    std::string_view body = line;
    if (const auto dollar = body.rfind('$'); dollar != std::string_view::npos) {
      body = body.substr(0, dollar);
      ++out.stats.options_ignored;
    }
    if (body.size() > 2 && body.front() == '/' && body.back() == '/') {
      ++out.stats.regex_rules;
      continue;
    }
    FilterRule rule;
    rule.raw = std::string(line);
    rule.list_name = list_name;
    rule.line = line_no;
    if (body.starts_with("||")) {
      rule.anchor = Anchor::domain_anchor;
      body.remove_prefix(2);
    } else if (body.starts_with("|")) {
      rule.anchor = Anchor::left_anchor;
      body.remove_prefix(1);
    }
    if (body.ends_with("|")) {
      rule.end_anchor = true;
      body.remove_suffix(1);
    }
    if (body.empty() || body.find('|') != std::string_view::npos ||
        body.find_first_not_of('*') == std::string_view::npos) {
      ++out.stats.unsupported;
      continue;
    }
    rule.pattern = to_lower(body);
    out.rules.push_back(std::move(rule));
    ++out.stats.rules;
  }
  return out;
}

namespace detail {

inline bool is_separator(char c) {
  const auto u = static_cast<unsigned char>(c);
  return !(std::isalnum(u) || c == '_' || c == '-' || c == '.' || c == '%');
}

class GlobMatcher {
 public:
  GlobMatcher(std::string_view pattern, std::string_view url, bool end_anchor)
      : p_(pattern), u_(url), end_anchor_(end_anchor), failed_((pattern.size() + 1) * (url.size() + 2), 0) {}

  bool at(std::size_t ui) { return match(0, ui); }

 private:
  bool match(std::size_t pi, std::size_t ui) {
    if (pi == p_.size()) return !end_anchor_ || ui == u_.size();
    char& memo = failed_[pi * (u_.size() + 2) + ui];
    if (memo) return false;
    bool ok = false;
    const char c = p_[pi];
    if (c == '*') {
      for (std::size_t k = ui; k <= u_.size() && !ok; ++k) ok = match(pi + 1, k);
    } else if (c == '^') {
      if (ui == u_.size()) ok = match(pi + 1, ui);
      else ok = is_separator(u_[ui]) && match(pi + 1, ui + 1);
    } else {
      ok = ui < u_.size() && u_[ui] == c && match(pi + 1, ui + 1);
    }
    if (!ok) memo = 1;
    return ok;
  }

  std::string_view p_;
  std::string_view u_;
  bool end_anchor_;
  std::vector<char> failed_;
};

// Longest run of plain characters, used to skip rules cheaply.
inline std::string_view literal_core(std::string_view pattern) {
  std::string_view best;
  std::size_t i = 0;
  while (i < pattern.size()) {
    const auto j = pattern.find_first_of("*^", i);
    const auto run = pattern.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i);
    if (run.size() > best.size()) best = run;
    if (j == std::string_view::npos) break;
    i = j + 1;
  }
  return best;
}

}  // namespace detail

/// Whether one rule matches a lower-cased URL.
inline bool rule_matches(const FilterRule& rule, std::string_view lower_url) {
  if (const auto core = detail::literal_core(rule.pattern); !core.empty() && lower_url.find(core) == std::string_view::npos)
    return false;
  detail::GlobMatcher m(rule.pattern, lower_url, rule.end_anchor);
  switch (rule.anchor) {
    case Anchor::left_anchor:
      return m.at(0);
    case Anchor::plain:
      for (std::size_t i = 0; i <= lower_url.size(); ++i)
        if (m.at(i)) return true;
      return false;
    case Anchor::domain_anchor: {
      const auto scheme = lower_url.find("://");
      if (scheme == std::string_view::npos) return false;
      std::size_t host_start = scheme + 3;
      std::size_t host_end = lower_url.find_first_of("/?#", host_start);
      if (host_end == std::string_view::npos) host_end = lower_url.size();
      if (const auto at = lower_url.substr(host_start, host_end - host_start).rfind('@'); at != std::string_view::npos)
        host_start += at + 1;
      for (std::size_t i = host_start; i < host_end; ++i)
        if ((i == host_start || lower_url[i - 1] == '.') && m.at(i)) return true;
      return false;
    }
  }
  return false;
}

struct BlocklistHit {
  const FilterRule* rule = nullptr;
  ListName list_name = ListName::easylist;
};

/// Rules from any number of lists, ordered for matching: domain anchors
/// first, then start anchors, then plain rules; insertion order within a class.
class Blocklist {
 public:
  Blocklist() = default;
  explicit Blocklist(std::vector<FilterRule> rules) { add(std::move(rules)); }

  void add(std::vector<FilterRule> rules) {
    for (auto& r : rules) rules_.push_back(std::move(r));
    order_.resize(rules_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return static_cast<int>(rules_[a].anchor) < static_cast<int>(rules_[b].anchor);
    });
  }

  const std::vector<FilterRule>& rules() const { return rules_; }
  bool empty() const { return rules_.empty(); }

  std::optional<BlocklistHit> match(std::string_view url) const {
    const auto lower = to_lower(url);
    for (const auto i : order_)
      if (rule_matches(rules_[i], lower)) return BlocklistHit{&rules_[i], rules_[i].list_name};
    return std::nullopt;
  }

 private:
  std::vector<FilterRule> rules_;
  std::vector<std::size_t> order_;
};

inline std::optional<BlocklistHit> blocklist_match(std::string_view url, const Blocklist& rules) {
  return rules.match(url);
}

}  // namespace botscope
