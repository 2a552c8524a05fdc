#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace nellab {

// Minimal absolute-URL splitter for http(s) URLs. Only what the reporting
// pipeline needs: scheme, host, port, path, query and fragment.
struct Url {
  std::string scheme;    // lowercase
  std::string host;      // lowercase, no trailing dot, IPv6 without brackets
  std::string port;      // empty when absent
  std::string path;      // always starts with '/'
  std::string query;     // without '?'; empty when absent
  std::string fragment;  // without '#'; empty when absent
  bool has_query = false;
  bool has_fragment = false;

  static std::optional<Url> parse(std::string_view text);

  bool secure() const { return scheme == "https"; }

  // scheme://host[:port]
  std::string origin() const;
  std::string to_string() const;
};

// Lowercase and strip a single trailing dot.
std::string canonical_host(std::string_view host);

// Host of an absolute URL, or empty when unparseable.
std::string host_of(std::string_view url);

bool iequals(std::string_view a, std::string_view b);

}  // namespace nellab
