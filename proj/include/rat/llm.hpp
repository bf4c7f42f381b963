#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rat/error.hpp"

namespace rat {

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using EmbeddingVector = Embedding<double>;

enum class Role { System, User, Assistant };

const char* to_string(Role role);
Role role_from_string(std::string_view name);

struct Message {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

struct Conversation {
  std::vector<Message> messages;

  /// All message contents joined with newlines; handy for transcript searches.
  std::string text() const;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

/// Throws InvalidArgument unless the conversation is non-empty and only the
/// trailing assistant slot has empty content.
void validate(const Conversation& conv);

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 1024;
  int sample_count = 1;
  std::optional<std::uint64_t> seed;
};

void validate(const DecodingParams& params);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Returns exactly params.sample_count completions.
  virtual std::vector<std::string> complete(const Conversation& conv,
                                            const DecodingParams& params) = 0;

  /// True when identical requests at temperature 0 always produce identical text.
  virtual bool deterministic() const { return false; }
};

class EmbedBackend {
 public:
  virtual ~EmbedBackend() = default;

  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual Eigen::Index dimension() const = 0;
};

// Checked entry points. They validate inputs, collapse temperature-0 requests
// on deterministic backends to a single call and verify the reply shape.
std::vector<std::string> complete(ChatBackend& backend, const Conversation& conv,
                                  const DecodingParams& params);
EmbeddingVector embed(EmbedBackend& backend, std::string_view text);

/// Replays a fixed list of responses in order and records every conversation.
/// Each sample consumes one script entry. Thread-safe; the transcript is
/// totally ordered.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> script);

  std::vector<std::string> complete(const Conversation& conv,
                                    const DecodingParams& params) override;

  std::vector<Conversation> transcript() const;
  std::size_t remaining() const;

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> script_;
  std::vector<Conversation> transcript_;
};

/// Token-hash bag embedding: every whitespace token increments one of
/// `dimension` buckets chosen by a stable 64-bit FNV-1a hash.
class HashEmbedder final : public EmbedBackend {
 public:
  explicit HashEmbedder(Eigen::Index dimension = 64);

  EmbeddingVector embed(std::string_view text) override;
  Eigen::Index dimension() const override { return dimension_; }

 private:
  Eigen::Index dimension_;
};

// ---------------------------------------------------------------------------
// HTTP providers

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::multimap<std::string, std::string>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws Error(Transport) when no response could be obtained at all.
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const HttpHeaders& headers) = 0;
};

/// cpp-httplib backed transport rooted at a base URL such as
/// "https://api.example.com/v1".
std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout = std::chrono::seconds(120));

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

class HttpChatBackend final : public ChatBackend {
 public:
  HttpChatBackend(std::shared_ptr<HttpTransport> transport, std::string model,
                  std::string api_key, RetryPolicy retry = {});

  std::vector<std::string> complete(const Conversation& conv,
                                    const DecodingParams& params) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string model_;
  std::string api_key_;
  RetryPolicy retry_;
};

class HttpEmbedBackend final : public EmbedBackend {
 public:
  HttpEmbedBackend(std::shared_ptr<HttpTransport> transport, std::string model,
                   std::string api_key, Eigen::Index dimension, RetryPolicy retry = {});

  EmbeddingVector embed(std::string_view text) override;
  Eigen::Index dimension() const override { return dimension_; }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string model_;
  std::string api_key_;
  Eigen::Index dimension_;
  RetryPolicy retry_;
};

/// POST with the shared retry policy: up to `attempts` tries, exponential
/// backoff, retrying only transport failures and 5xx replies.
HttpResponse post_with_retry(HttpTransport& transport, const std::string& path,
                             const std::string& body, const HttpHeaders& headers,
                             const RetryPolicy& retry);

// ---------------------------------------------------------------------------
// Provider configuration

enum class BackendKind { HttpChat, HttpEmbed, Scripted };

const char* to_string(BackendKind kind);

struct BackendDescriptor {
  BackendKind kind = BackendKind::Scripted;
  std::string endpoint;
  std::string model_id;
  std::string auth_env;  // name of the environment variable holding the key
  Eigen::Index dimension = 64;
  std::vector<std::string> script;
};

void validate(const BackendDescriptor& desc);

/// Descriptor for a scripted chat backend paired with the hash embedder.
BackendDescriptor scripted_backend(std::vector<std::string> script);

/// Reads a provider config file. ".json" files are parsed as JSON, anything
/// else as flat TOML. A scripted config may point at `script_file` (a JSON
/// array of strings, resolved relative to the config file).
BackendDescriptor load_backend_config(const std::filesystem::path& path);

std::shared_ptr<ChatBackend> make_chat_backend(const BackendDescriptor& desc);
std::shared_ptr<EmbedBackend> make_embed_backend(const BackendDescriptor& desc);

/// Stable 64-bit FNV-1a, used wherever a platform-independent hash is needed.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace rat
