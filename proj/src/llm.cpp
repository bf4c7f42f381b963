#include "rat/llm.hpp"

#include <cmath>
#include <sstream>

namespace rat {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Transport: return "transport";
    case ErrorCode::ScriptExhausted: return "scripted-exhaustion";
    case ErrorCode::MalformedReply: return "malformed-reply";
    case ErrorCode::EmptyText: return "empty-text";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::ZeroVector: return "zero-vector";
    case ErrorCode::DuplicateId: return "duplicate-id";
    case ErrorCode::EmptyIndex: return "empty-index";
    case ErrorCode::EmptyDocument: return "empty-document";
    case ErrorCode::MissingBinding: return "missing-binding";
    case ErrorCode::UnknownBinding: return "unknown-binding";
    case ErrorCode::UnknownTemplate: return "unknown-template";
    case ErrorCode::NoThoughts: return "no-thoughts";
    case ErrorCode::NoDecisiveMatches: return "no-decisive-matches";
    case ErrorCode::UnknownItem: return "unknown-item";
    case ErrorCode::UnknownMatch: return "unknown-match";
    case ErrorCode::DuplicateVote: return "duplicate-vote";
    case ErrorCode::EmptyPool: return "empty-pool";
    case ErrorCode::Io: return "io";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

const char* to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw Error(ErrorCode::InvalidArgument, "unknown role '" + std::string(name) + "'");
}

std::string Conversation::text() const {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += '\n';
    out += m.content;
  }
  return out;
}

void validate(const Conversation& conv) {
  if (conv.messages.empty()) {
    throw Error(ErrorCode::InvalidArgument, "conversation is empty");
  }
  for (std::size_t i = 0; i < conv.messages.size(); ++i) {
    const auto& m = conv.messages[i];
    const bool trailing_assistant = i + 1 == conv.messages.size() && m.role == Role::Assistant;
    if (m.content.empty() && !trailing_assistant) {
      throw Error(ErrorCode::InvalidArgument,
                  "message " + std::to_string(i) + " has empty content");
    }
  }
}

void validate(const DecodingParams& params) {
  if (!(params.temperature >= 0.0) || !std::isfinite(params.temperature)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be a non-negative real");
  }
  if (params.max_tokens < 1) {
    throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
  }
  if (params.sample_count < 1) {
    throw Error(ErrorCode::InvalidArgument, "sample_count must be at least 1");
  }
}

std::vector<std::string> complete(ChatBackend& backend, const Conversation& conv,
                                  const DecodingParams& params) {
  validate(conv);
  validate(params);

  if (params.temperature == 0.0 && params.sample_count > 1 && backend.deterministic()) {
    DecodingParams single = params;
    single.sample_count = 1;
    auto one = backend.complete(conv, single);
    if (one.size() != 1) {
      throw Error(ErrorCode::MalformedReply, "backend returned " + std::to_string(one.size()) +
                                                 " completions, expected 1");
    }
    return std::vector<std::string>(static_cast<std::size_t>(params.sample_count), one.front());
  }

  auto out = backend.complete(conv, params);
  if (out.size() != static_cast<std::size_t>(params.sample_count)) {
    throw Error(ErrorCode::MalformedReply,
                "backend returned " + std::to_string(out.size()) + " completions, expected " +
                    std::to_string(params.sample_count));
  }
  return out;
}

namespace {

bool is_blank(std::string_view text) {
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

EmbeddingVector embed(EmbedBackend& backend, std::string_view text) {
  if (is_blank(text)) {
    throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  }
  EmbeddingVector v = backend.embed(text);
  if (v.size() != backend.dimension()) {
    throw Error(ErrorCode::DimensionMismatch,
                "embedding has length " + std::to_string(v.size()) + ", backend declares " +
                    std::to_string(backend.dimension()));
  }
  if (!v.allFinite()) {
    throw Error(ErrorCode::MalformedReply, "embedding contains non-finite values");
  }
  return v;
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<std::string> script)
    : script_(std::make_move_iterator(script.begin()), std::make_move_iterator(script.end())) {}

std::vector<std::string> ScriptedBackend::complete(const Conversation& conv,
                                                   const DecodingParams& params) {
  std::lock_guard lock(mutex_);
  const auto wanted = static_cast<std::size_t>(std::max(params.sample_count, 1));
  if (script_.size() < wanted) {
    throw Error(ErrorCode::ScriptExhausted,
                "script has " + std::to_string(script_.size()) + " response(s) left, " +
                    std::to_string(wanted) + " requested");
  }
  transcript_.push_back(conv);
  std::vector<std::string> out;
  out.reserve(wanted);
  for (std::size_t i = 0; i < wanted; ++i) {
    out.push_back(std::move(script_.front()));
    script_.pop_front();
  }
  return out;
}

std::vector<Conversation> ScriptedBackend::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mutex_);
  return script_.size();
}

HashEmbedder::HashEmbedder(Eigen::Index dimension) : dimension_(dimension) {
  if (dimension < 1) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be positive");
}

EmbeddingVector HashEmbedder::embed(std::string_view text) {
  if (is_blank(text)) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  EmbeddingVector v = EmbeddingVector::Zero(dimension_);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) {
      const auto bucket = fnv1a64(text.substr(start, i - start)) % static_cast<std::uint64_t>(dimension_);
      v[static_cast<Eigen::Index>(bucket)] += 1.0;
    }
  }
  return v;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << value;
  return os.str();
}

}  // namespace rat
