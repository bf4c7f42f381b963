#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rat/corpus.hpp"
#include "rat/error.hpp"
#include "rat/llm.hpp"

namespace rat {

/// Cosine of the angle between a and b, clamped to [-1, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cosine_similarity: lengths " + std::to_string(a.size()) +
                                                  " and " + std::to_string(b.size()));
  }
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) {
    throw Error(ErrorCode::ZeroVector, "cosine_similarity: zero vector");
  }
  const Scalar s = a.dot(b.template cast<Scalar>()) / (na * nb);
  return std::clamp(s, Scalar(-1), Scalar(1));
}

struct ScoredChunk {
  std::string chunk_id;
  double score = 0.0;
  std::string body;

  friend bool operator==(const ScoredChunk&, const ScoredChunk&) = default;
};

/// Ranked by descending score, ties (within 1e-12) broken by ascending chunk id.
using RetrievedSet = std::vector<ScoredChunk>;

/// Immutable exact-search index. Vectors are stored column-wise, one column
/// per chunk, alongside their precomputed norms.
class VectorIndex {
 public:
  VectorIndex() = default;
  VectorIndex(std::vector<std::string> ids, std::vector<std::string> bodies, Eigen::MatrixXd vectors);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  Eigen::Index dimension() const { return vectors_.rows(); }

  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::string& body(std::size_t i) const { return bodies_[i]; }
  auto vector(std::size_t i) const { return vectors_.col(static_cast<Eigen::Index>(i)); }
  const Eigen::MatrixXd& vectors() const { return vectors_; }

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> bodies_;
  Eigen::MatrixXd vectors_;
  Eigen::VectorXd norms_;

  friend RetrievedSet top_k(const VectorIndex&, const EmbeddingVector&, std::size_t);
};

/// Embeds every chunk body; the entry order equals the input order.
VectorIndex build_index(const std::vector<Chunk>& chunks, EmbedBackend& embedder);

RetrievedSet top_k(const VectorIndex& index, const EmbeddingVector& query, std::size_t k);

void save_index(const std::filesystem::path& path, const VectorIndex& index);
VectorIndex load_index(const std::filesystem::path& path);

// Query formation ------------------------------------------------------------

enum class QueryMode { EmbedDraft, LlmGenerated };

const char* to_string(QueryMode mode);
QueryMode query_mode_from_string(std::string_view name);

struct Query {
  std::string text;
  std::optional<EmbeddingVector> vector;  // set when an embedder was supplied
  QueryMode mode = QueryMode::EmbedDraft;
  std::optional<Conversation> conversation;  // sent for llm-generated queries
};

inline constexpr std::size_t kDefaultMaxQueryTokens = 8192;

struct QueryOptions {
  QueryMode mode = QueryMode::EmbedDraft;
  std::string joiner = "\n\n";  // separator between revised steps
  std::size_t max_query_tokens = kDefaultMaxQueryTokens;
  DecodingParams decoding;  // for query generation; sample_count is forced to 1
};

/// Builds the retrieval query for one revision round from the task, the
/// revised steps so far and the current original step. Embed-draft mode
/// concatenates them with newlines; llm-generated mode asks the chat
/// backend to summarise them into a search query. The text is truncated
/// from the front to max_query_tokens before embedding.
Query to_query(std::string_view task, const std::vector<std::string>& revised_prefix,
               std::string_view current_step, const QueryOptions& options, EmbedBackend* embedder,
               ChatBackend* chat = nullptr);

// Retrieval sources ------------------------------------------------------------

/// Search engines plug in here and must return the same ranked shape.
class WebSearch {
 public:
  virtual ~WebSearch() = default;
  virtual RetrievedSet search(std::string_view query, std::size_t k) = 0;
};

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual RetrievedSet retrieve(const Query& query, std::size_t k) = 0;
  /// Whether queries must carry an embedding vector.
  virtual bool needs_vector() const = 0;
};

class IndexRetriever final : public Retriever {
 public:
  explicit IndexRetriever(const VectorIndex& index) : index_(index) {}
  RetrievedSet retrieve(const Query& query, std::size_t k) override;
  bool needs_vector() const override { return true; }
  const VectorIndex& index() const { return index_; }

 private:
  const VectorIndex& index_;
};

class WebSearchRetriever final : public Retriever {
 public:
  explicit WebSearchRetriever(WebSearch& engine) : engine_(engine) {}
  RetrievedSet retrieve(const Query& query, std::size_t k) override { return engine_.search(query.text, k); }
  bool needs_vector() const override { return false; }

 private:
  WebSearch& engine_;
};

}  // namespace rat
