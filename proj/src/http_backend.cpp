#include <httplib.h>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "generation.hpp"
#include "util.hpp"

namespace discosyn {

using nlohmann::json;

HttpBackend::HttpBackend(std::string model, std::string endpoint, std::optional<std::string> api_key,
                         int timeout_seconds)
    : model_(std::move(model)), api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {
  static constexpr std::string_view kScheme = "http://";
  if (!std::string_view(endpoint).starts_with(kScheme)) {
    fail(ErrorCode::kConfig, "backend endpoint must be an http:// URL, got '" + endpoint + "'");
  }
  const auto slash = endpoint.find('/', kScheme.size());
  base_ = endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
}

std::string HttpBackend::complete(const std::string& prompt, const DecodingParams& decoding) {
  httplib::Client client(base_);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  httplib::Headers headers;
  if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);
  const json body = {{"model", model_},
                     {"prompt", prompt},
                     {"max_new_tokens", decoding.max_new_tokens},
                     {"temperature", decoding.temperature},
                     {"seed", decoding.seed}};
  const auto response = client.Post(path_, headers, body.dump(), "application/json");
  if (!response) {
    fail(ErrorCode::kTransport, "cannot reach " + base_ + ": " + httplib::to_string(response.error()));
  }
  if (response->status >= 500) {
    fail(ErrorCode::kTransport, "backend returned HTTP " + std::to_string(response->status));
  }
  if (response->status != 200) {
    fail(ErrorCode::kConfig, "backend rejected request with HTTP " + std::to_string(response->status));
  }
  try {
    return json::parse(response->body).at("text").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kTransport, std::string("malformed backend response: ") + e.what());
  }
}

namespace {

}  // namespace

std::unique_ptr<TextBackend> make_backend(const BackendDescriptor& descriptor) {
  const std::string& endpoint = descriptor.endpoint;
  if (endpoint == "mock") return std::make_unique<MockBackend>();
  if (endpoint.starts_with("mock:")) {
    try {
      return std::make_unique<MockBackend>(std::stod(endpoint.substr(5)));
    } catch (const std::logic_error&) {
      fail(ErrorCode::kConfig, "bad mock fidelity in '" + endpoint + "'");
    }
  }
  auto key = getenv_string(("DISCOSYN_API_KEY_" + env_suffix(descriptor.name)).c_str());
  if (!key) key = getenv_string("DISCOSYN_API_KEY");
  return std::make_unique<HttpBackend>(descriptor.name, endpoint, key);
}

}  // namespace discosyn
