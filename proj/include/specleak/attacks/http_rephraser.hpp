#pragma once

#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "specleak/attacks/suffix_search.hpp"
#include "specleak/common.hpp"

namespace specleak::attacks {

/// Rephraser backed by a remote service.
///   request:  POST <url>  {"template": "...", "n": 9}
///   response: 200         {"variants": ["...", ...]}
class HttpRephraser : public Rephraser {
 public:
  /// `url` is "http://host[:port][/path]"; the path defaults to "/rephrase".
  explicit HttpRephraser(const std::string& url, int timeout_s = 30) : timeout_s_(timeout_s) {
    const auto scheme = url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = url.find('/', host_start);
    base_ = slash == std::string::npos ? url : url.substr(0, slash);
    path_ = slash == std::string::npos ? "/rephrase" : url.substr(slash);
    if (base_.size() <= host_start) throw Error("bad-config", ErrorKind::config, "rephraser url has no host: " + url);
  }

  std::vector<std::string> rephrase(const std::string& tmpl, std::size_t n) override {
    httplib::Client cli(base_);
    cli.set_connection_timeout(timeout_s_);
    cli.set_read_timeout(timeout_s_);
    const nlohmann::json body{{"template", tmpl}, {"n", n}};
    const auto res = cli.Post(path_, body.dump(), "application/json");
    if (!res) throw Error("rephraser-unreachable", ErrorKind::data, base_ + path_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error("rephraser-failed", ErrorKind::data, "HTTP " + std::to_string(res->status) + " from " + base_ + path_);
    std::vector<std::string> out;
    try {
      const auto reply = nlohmann::json::parse(res->body);
      for (const auto& v : reply.at("variants")) out.push_back(v.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error("rephraser-failed", ErrorKind::data, std::string("malformed reply: ") + e.what());
    }
    if (out.size() > n) out.resize(n);
    ++calls_;
    return out;
  }

  std::size_t calls() const { return calls_; }

 private:
  std::string base_, path_;
  int timeout_s_;
  std::size_t calls_ = 0;
};

}  // namespace specleak::attacks
