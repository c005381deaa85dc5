#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace botscope {

struct UrlParts {
  std::string scheme;
  std::string host;  // lower-cased, no port, no brackets
  std::string port;
  std::string path_query;  // starts with '/' (or is empty), fragment removed
};

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

/// Splits an absolute "scheme://authority/path?query" URL. Returns nullopt for
/// relative references or an empty host.
inline std::optional<UrlParts> parse_url(std::string_view url) {
  const auto colon = url.find("://");
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  UrlParts parts;
  parts.scheme = to_lower(url.substr(0, colon));
  for (char c : parts.scheme) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.')
      return std::nullopt;
  }
  std::string_view rest = url.substr(colon + 3);
  const auto hash = rest.find('#');
  if (hash != std::string_view::npos) rest = rest.substr(0, hash);
  const auto path_start = rest.find_first_of("/?");
  std::string_view authority = rest.substr(0, path_start);
  if (path_start != std::string_view::npos) {
    parts.path_query = std::string(rest.substr(path_start));
    if (parts.path_query.front() == '?') parts.path_query.insert(0, "/");
  }
  if (const auto at = authority.rfind('@'); at != std::string_view::npos)
    authority = authority.substr(at + 1);
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    parts.host = to_lower(authority.substr(1, close - 1));
    if (close + 1 < authority.size() && authority[close + 1] == ':')
      parts.port = std::string(authority.substr(close + 2));
  } else {
    const auto port = authority.rfind(':');
    if (port != std::string_view::npos) {
      parts.port = std::string(authority.substr(port + 1));
      authority = authority.substr(0, port);
    }
    parts.host = to_lower(authority);
  }
  if (parts.host.empty()) return std::nullopt;
  return parts;
}

inline bool is_inline_marker(std::string_view script_url) {
  return script_url.starts_with("inline:") || script_url == "inline";
}

inline std::string inline_marker(std::string_view sha256) {
  return "inline:" + std::string(sha256.substr(0, 12));
}

}  // namespace botscope
