// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "rat/llm.hpp"

#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace rat {

using nlohmann::json;

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(const std::string& base_url, std::chrono::seconds timeout) {
    // Split "scheme://host[:port]/prefix" into the client root and the path prefix.
    const auto scheme_end = base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = base_url.find('/', host_start);
    root_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    client_ = std::make_unique<httplib::Client>(root_);
    client_->set_connection_timeout(timeout);
    client_->set_read_timeout(timeout);
    client_->set_write_timeout(timeout);
  }

  HttpResponse post(const std::string& path, const std::string& body,
                    const HttpHeaders& headers) override {
    httplib::Headers h(headers.begin(), headers.end());
    std::lock_guard lock(mutex_);
    auto res = client_->Post(prefix_ + "/" + path, h, body, "application/json");
    if (!res) {
      throw Error(ErrorCode::Transport,
                  "request to " + root_ + prefix_ + "/" + path + " failed: " + httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
  }

 private:
  std::string root_;
  std::string prefix_;
  std::mutex mutex_;
  std::unique_ptr<httplib::Client> client_;
};

HttpHeaders auth_headers(const std::string& api_key) {
  HttpHeaders h;
  if (!api_key.empty()) h.emplace("Authorization", "Bearer " + api_key);
  return h;
}

json parse_reply(const HttpResponse& res) {
  try {
    return json::parse(res.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedReply, std::string("provider reply is not JSON: ") + e.what());
  }
}

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout) {
  return std::make_shared<HttplibTransport>(base_url, timeout);
}

HttpResponse post_with_retry(HttpTransport& transport, const std::string& path,
                             const std::string& body, const HttpHeaders& headers,
                             const RetryPolicy& retry) {
  const int attempts = std::max(retry.attempts, 1);
  auto backoff = retry.initial_backoff;
  std::string last_failure;
  int last_status = 0;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    try {
      HttpResponse res = transport.post(path, body, headers);
      if (res.status >= 200 && res.status < 300) return res;
      if (res.status < 500) {
        throw TransportError("provider rejected request with HTTP " + std::to_string(res.status) +
                                 ": " + res.body.substr(0, 200),
                             attempt, res.status);
      }
      last_status = res.status;
      last_failure = "HTTP " + std::to_string(res.status);
    } catch (const TransportError&) {
      throw;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Transport) throw;
      last_failure = e.what();
      last_status = 0;
    }
    if (attempt < attempts) {
      if (retry.sleep) {
        retry.sleep(backoff);
      } else {
        std::this_thread::sleep_for(backoff);
      }
      backoff *= 2;
    }
  }
  throw TransportError("giving up after " + std::to_string(attempts) + " attempts: " + last_failure,
                       attempts, last_status);
}

HttpChatBackend::HttpChatBackend(std::shared_ptr<HttpTransport> transport, std::string model,
                                 std::string api_key, RetryPolicy retry)
    : transport_(std::move(transport)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      retry_(std::move(retry)) {}

std::vector<std::string> HttpChatBackend::complete(const Conversation& conv,
                                                   const DecodingParams& params) {
  json messages = json::array();
  for (const auto& m : conv.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json request = {{"model", model_},
                  {"messages", std::move(messages)},
                  {"temperature", params.temperature},
                  {"max_tokens", params.max_tokens},
                  {"n", params.sample_count}};
  if (params.seed) request["seed"] = *params.seed;

  const auto res = post_with_retry(*transport_, "chat/completions", request.dump(),
                                   auth_headers(api_key_), retry_);
  const json reply = parse_reply(res);
  std::vector<std::string> out;
  try {
    for (const auto& choice : reply.at("choices")) {
      out.push_back(choice.at("message").at("content").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedReply, std::string("unexpected chat reply shape: ") + e.what());
  }
  return out;
}

HttpEmbedBackend::HttpEmbedBackend(std::shared_ptr<HttpTransport> transport, std::string model,
                                   std::string api_key, Eigen::Index dimension, RetryPolicy retry)
    : transport_(std::move(transport)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      dimension_(dimension),
      retry_(std::move(retry)) {}

EmbeddingVector HttpEmbedBackend::embed(std::string_view text) {
  const json request = {{"model", model_}, {"input", std::string(text)}};
  const auto res = post_with_retry(*transport_, "embeddings", request.dump(),
                                   auth_headers(api_key_), retry_);
  const json reply = parse_reply(res);
  std::vector<double> values;
  try {
    values = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedReply, std::string("unexpected embedding reply shape: ") + e.what());
  }
  if (static_cast<Eigen::Index>(values.size()) != dimension_) {
    throw Error(ErrorCode::DimensionMismatch,
                "provider returned dimension " + std::to_string(values.size()) + ", configured " +
                    std::to_string(dimension_));
  }
  return Eigen::Map<const EmbeddingVector>(values.data(), dimension_);
}

}  // namespace rat
