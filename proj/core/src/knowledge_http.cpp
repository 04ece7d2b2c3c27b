#include <thread>

#include <json.hpp>

#include "vlce/error.hpp"
#include "vlce/io.hpp"
#include "vlce/knowledge.hpp"

#ifdef VLCE_WITH_HTTP
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#endif

namespace vlce {

HttpConceptSource::HttpConceptSource(HttpConceptOptions options) : options_(std::move(options)) {}

std::vector<ConceptEdge> HttpConceptSource::parse_response(std::string_view body) {
  std::vector<ConceptEdge> out;
  try {
    auto j = nlohmann::json::parse(body);
    for (const auto& e : j.value("edges", nlohmann::json::array())) {
      ConceptEdge edge;
      edge.relation = e.at("rel").value("label", "");
      edge.start = normalize_concept_term(e.at("start").value("term", ""));
      edge.end = normalize_concept_term(e.at("end").value("term", ""));
      edge.weight = e.value("weight", 1.0);
      if (edge.start.empty() || edge.end.empty() || edge.start == edge.end) continue;
      out.push_back(std::move(edge));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("ConceptNet response: ") + e.what());
  }
  return out;
}

std::vector<ConceptEdge> HttpConceptSource::edges(std::string_view term) {
  const std::string key(term);
  std::filesystem::path cache_file;
  if (!options_.cache_dir.empty()) {
    cache_file = options_.cache_dir / (key + ".json");
    if (std::filesystem::exists(cache_file)) return parse_response(io::read_file(cache_file));
  }
#ifdef VLCE_WITH_HTTP
  std::lock_guard lock(mutex_);
  const std::string path = "/c/en/" + key + "?limit=" + std::to_string(options_.limit);
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    const auto wait_until = last_request_ + options_.min_interval;
    if (std::chrono::steady_clock::now() < wait_until) std::this_thread::sleep_until(wait_until);
    last_request_ = std::chrono::steady_clock::now();

    httplib::SSLClient client(options_.host);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    auto res = client.Get(path);
    if (res && res->status == 200) {
      if (!cache_file.empty()) io::write_file(cache_file, res->body);
      return parse_response(res->body);
    }
  }
  fail(ErrorKind::kIo, "ConceptNet request for '" + key + "' failed after " + std::to_string(options_.retries + 1) +
                           " attempts");
#else
  fail(ErrorKind::kIo, "built without HTTP support; ConceptNet term '" + key + "' is not cached");
#endif
}

}  // namespace vlce
