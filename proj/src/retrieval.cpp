#include "rat/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "rat/prompts.hpp"

namespace rat {

using nlohmann::json;

namespace {

constexpr std::string_view kIndexFormat = "rat-vector-index";
constexpr int kIndexVersion = 1;

}  // namespace

VectorIndex::VectorIndex(std::vector<std::string> ids, std::vector<std::string> bodies,
                         Eigen::MatrixXd vectors)
    : ids_(std::move(ids)), bodies_(std::move(bodies)), vectors_(std::move(vectors)) {
  if (ids_.size() != bodies_.size() || static_cast<Eigen::Index>(ids_.size()) != vectors_.cols()) {
    throw Error(ErrorCode::InvalidArgument, "index ids, bodies and vectors differ in count");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "duplicate chunk id '" + id + "'");
  }
  if (!vectors_.allFinite()) throw Error(ErrorCode::InvalidArgument, "index contains non-finite values");
  norms_ = vectors_.colwise().norm().transpose();
  for (Eigen::Index i = 0; i < norms_.size(); ++i) {
    if (norms_[i] == 0.0) {
      throw Error(ErrorCode::ZeroVector, "chunk '" + ids_[static_cast<std::size_t>(i)] + "' has a zero vector");
    }
  }
}

VectorIndex build_index(const std::vector<Chunk>& chunks, EmbedBackend& embedder) {
  if (chunks.empty()) throw Error(ErrorCode::EmptyIndex, "cannot build an index from zero chunks");
  std::unordered_set<std::string> seen;
  for (const auto& c : chunks) {
    if (!seen.insert(c.id).second) throw Error(ErrorCode::DuplicateId, "duplicate chunk id '" + c.id + "'");
  }

  Eigen::MatrixXd vectors(embedder.dimension(), static_cast<Eigen::Index>(chunks.size()));
  std::vector<std::string> ids;
  std::vector<std::string> bodies;
  ids.reserve(chunks.size());
  bodies.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    try {
      vectors.col(static_cast<Eigen::Index>(i)) = embed(embedder, chunks[i].body);
    } catch (const Error& e) {
      throw Error(e.code(), "embedding chunk '" + chunks[i].id + "': " + e.what());
    }
    ids.push_back(chunks[i].id);
    bodies.push_back(chunks[i].body);
  }
  return VectorIndex(std::move(ids), std::move(bodies), std::move(vectors));
}

RetrievedSet top_k(const VectorIndex& index, const EmbeddingVector& query, std::size_t k) {
  if (index.empty()) throw Error(ErrorCode::EmptyIndex, "top_k on an empty index");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (query.size() != index.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "query dimension " + std::to_string(query.size()) +
                                                  " does not match index dimension " +
                                                  std::to_string(index.dimension()));
  }
  const double qn = query.norm();
  if (qn == 0.0) throw Error(ErrorCode::ZeroVector, "query vector is zero");

  const Eigen::VectorXd scores =
      ((index.vectors_.transpose() * query).array() / (index.norms_.array() * qn)).cwiseMax(-1.0).cwiseMin(1.0);

  // Parallel vectors have equal cosines that can round apart by an ulp; treat
  // scores this close as tied so the id order decides.
  constexpr double kTieEps = 1e-12;
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto score = [&](std::size_t e) { return scores[static_cast<Eigen::Index>(e)]; };
  const auto by_score = [&](std::size_t a, std::size_t b) {
    if (score(a) != score(b)) return score(a) > score(b);
    return index.id(a) < index.id(b);
  };
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), by_score);

  // Anything past the cut that ties the last kept score competes on id.
  const double floor = score(order[take - 1]) - kTieEps;
  auto tail = std::partition(order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                             [&](std::size_t e) { return score(e) >= floor; });
  std::vector<std::size_t> candidates(order.begin(), tail);
  std::sort(candidates.begin(), candidates.end(), by_score);
  for (std::size_t lo = 0; lo < candidates.size();) {
    std::size_t hi = lo + 1;
    while (hi < candidates.size() && score(candidates[hi - 1]) - score(candidates[hi]) <= kTieEps) ++hi;
    std::sort(candidates.begin() + static_cast<std::ptrdiff_t>(lo), candidates.begin() + static_cast<std::ptrdiff_t>(hi),
              [&](std::size_t a, std::size_t b) { return index.id(a) < index.id(b); });
    lo = hi;
  }

  RetrievedSet out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t e = candidates[i];
    out.push_back({index.id(e), scores[static_cast<Eigen::Index>(e)], index.body(e)});
  }
  return out;
}

void save_index(const std::filesystem::path& path, const VectorIndex& index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write index " + path.string());
  const json header{{"format", kIndexFormat},
                    {"version", kIndexVersion},
                    {"dimension", index.dimension()},
                    {"count", index.size()}};
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto col = index.vector(i);
    const std::vector<double> values(col.data(), col.data() + col.size());
    out << json{{"chunk_id", index.id(i)}, {"vector", values}, {"body", index.body(i)}}.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing index " + path.string());
}

VectorIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open index " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, path.string() + ": missing index header");
  try {
    const json header = json::parse(line);
    if (header.at("format").get<std::string>() != kIndexFormat) {
      throw Error(ErrorCode::Io, path.string() + ": not a vector index file");
    }
    if (header.at("version").get<int>() != kIndexVersion) {
      throw Error(ErrorCode::Io, path.string() + ": unsupported index version " +
                                     std::to_string(header.at("version").get<int>()));
    }
    const auto dim = header.at("dimension").get<Eigen::Index>();
    const auto count = header.at("count").get<std::size_t>();
    Eigen::MatrixXd vectors(dim, static_cast<Eigen::Index>(count));
    std::vector<std::string> ids;
    std::vector<std::string> bodies;
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::getline(in, line)) {
        throw Error(ErrorCode::Io, path.string() + ": expected " + std::to_string(count) + " entries");
      }
      const json entry = json::parse(line);
      const auto values = entry.at("vector").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != dim) {
        throw Error(ErrorCode::DimensionMismatch, path.string() + ": entry " + std::to_string(i) +
                                                      " has dimension " + std::to_string(values.size()));
      }
      vectors.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(values.data(), dim);
      ids.push_back(entry.at("chunk_id").get<std::string>());
      bodies.push_back(entry.at("body").get<std::string>());
    }
    return VectorIndex(std::move(ids), std::move(bodies), std::move(vectors));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

const char* to_string(QueryMode mode) {
  return mode == QueryMode::EmbedDraft ? "embed-draft" : "llm-generated";
}

QueryMode query_mode_from_string(std::string_view name) {
  if (name == "embed-draft") return QueryMode::EmbedDraft;
  if (name == "llm-generated") return QueryMode::LlmGenerated;
  throw Error(ErrorCode::InvalidArgument, "unknown query mode '" + std::string(name) + "'");
}

Query to_query(std::string_view task, const std::vector<std::string>& revised_prefix,
               std::string_view current_step, const QueryOptions& options, EmbedBackend* embedder,
               ChatBackend* chat) {
  if (current_step.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw Error(ErrorCode::InvalidArgument, "to_query: current step is empty");
  }
  std::string prefix;
  for (const auto& step : revised_prefix) {
    if (!prefix.empty()) prefix += options.joiner;
    prefix += step;
  }

  Query q;
  q.mode = options.mode;
  if (options.mode == QueryMode::EmbedDraft) {
    q.text = std::string(task);
    if (!prefix.empty()) q.text += "\n" + prefix;
    q.text += "\n";
    q.text += current_step;
  } else {
    if (chat == nullptr) throw Error(ErrorCode::InvalidArgument, "llm-generated queries need a chat backend");
    std::string answer = prefix;
    if (!answer.empty()) answer += options.joiner;
    answer += current_step;
    q.conversation = render_prompt(templates::kQuery, {{"question", std::string(task)}, {"answer", answer}});
    DecodingParams params = options.decoding;
    params.sample_count = 1;
    q.text = complete(*chat, *q.conversation, params).front();
  }
  q.text = truncate_front(q.text, options.max_query_tokens);
  if (embedder != nullptr) q.vector = embed(*embedder, q.text);
  return q;
}

RetrievedSet IndexRetriever::retrieve(const Query& query, std::size_t k) {
  if (!query.vector) throw Error(ErrorCode::InvalidArgument, "index retrieval needs an embedded query");
  return top_k(index_, *query.vector, k);
}

}  // namespace rat
