#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "rat/flat_toml.hpp"
#include "rat/llm.hpp"

namespace rat {

using nlohmann::json;

const char* to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::HttpChat: return "http-chat";
    case BackendKind::HttpEmbed: return "http-embed";
    case BackendKind::Scripted: return "scripted";
  }
  return "scripted";
}

namespace {

BackendKind kind_from_string(const std::string& name) {
  if (name == "http-chat") return BackendKind::HttpChat;
  if (name == "http-embed") return BackendKind::HttpEmbed;
  if (name == "scripted") return BackendKind::Scripted;
  throw Error(ErrorCode::Config, "unknown backend kind '" + name + "'");
}

std::string api_key(const BackendDescriptor& desc) {
  if (desc.auth_env.empty()) return {};
  const char* value = std::getenv(desc.auth_env.c_str());
  if (value == nullptr) {
    throw Error(ErrorCode::Config, "environment variable " + desc.auth_env + " is not set");
  }
  return value;
}

}  // namespace

void validate(const BackendDescriptor& desc) {
  switch (desc.kind) {
    case BackendKind::HttpChat:
    case BackendKind::HttpEmbed:
      if (desc.endpoint.empty() || desc.model_id.empty()) {
        throw Error(ErrorCode::Config, std::string(to_string(desc.kind)) +
                                           " backend requires endpoint and model");
      }
      break;
    case BackendKind::Scripted:
      break;
  }
  if (desc.dimension < 1) throw Error(ErrorCode::Config, "dimension must be positive");
}

BackendDescriptor scripted_backend(std::vector<std::string> script) {
  BackendDescriptor d;
  d.kind = BackendKind::Scripted;
  d.model_id = "scripted";
  d.script = std::move(script);
  return d;
}

BackendDescriptor load_backend_config(const std::filesystem::path& path) {
  const json cfg = load_config_file(path);
  BackendDescriptor d;
  try {
    d.kind = kind_from_string(cfg.at("kind").get<std::string>());
    d.endpoint = cfg.value("endpoint", "");
    d.model_id = cfg.value("model", cfg.value("model_id", ""));
    d.auth_env = cfg.value("auth_env", "");
    d.dimension = cfg.value("dimension", 64);
    if (cfg.contains("script")) {
      d.script = cfg.at("script").get<std::vector<std::string>>();
    }
    if (cfg.contains("script_file")) {
      const auto script_path = path.parent_path() / cfg.at("script_file").get<std::string>();
      std::ifstream in(script_path);
      if (!in) throw Error(ErrorCode::Io, "cannot open script file " + script_path.string());
      const auto extra = json::parse(in).get<std::vector<std::string>>();
      d.script.insert(d.script.end(), extra.begin(), extra.end());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  if (d.kind == BackendKind::Scripted && !cfg.contains("script") && !cfg.contains("script_file")) {
    throw Error(ErrorCode::Config, path.string() + ": scripted backend requires a script");
  }
  validate(d);
  return d;
}

std::shared_ptr<ChatBackend> make_chat_backend(const BackendDescriptor& desc) {
  validate(desc);
  switch (desc.kind) {
    case BackendKind::Scripted:
      return std::make_shared<ScriptedBackend>(desc.script);
    case BackendKind::HttpChat:
      return std::make_shared<HttpChatBackend>(make_http_transport(desc.endpoint), desc.model_id,
                                               api_key(desc));
    case BackendKind::HttpEmbed:
      break;
  }
  throw Error(ErrorCode::Config, "backend kind http-embed cannot complete chats");
}

std::shared_ptr<EmbedBackend> make_embed_backend(const BackendDescriptor& desc) {
  validate(desc);
  switch (desc.kind) {
    case BackendKind::Scripted:
      return std::make_shared<HashEmbedder>(desc.dimension);
    case BackendKind::HttpEmbed:
      return std::make_shared<HttpEmbedBackend>(make_http_transport(desc.endpoint), desc.model_id,
                                                api_key(desc), desc.dimension);
    case BackendKind::HttpChat:
      break;
  }
  throw Error(ErrorCode::Config, "backend kind http-chat cannot embed text");
}

}  // namespace rat
