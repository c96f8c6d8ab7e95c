#pragma once

#include <stdexcept>
#include <string>

namespace batchgate {

// (scheme://host:port, /path) halves of an http URL, shaped for
// httplib::Client(base) + Post(path, ...).
struct UrlParts {
  std::string base;
  std::string path;
};

inline UrlParts split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("not an absolute http URL: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace batchgate
