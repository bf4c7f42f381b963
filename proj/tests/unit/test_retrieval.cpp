#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "rat/prompts.hpp"
#include "rat/retrieval.hpp"

using namespace rat;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

VectorIndex random_index(std::mt19937_64& rng, Eigen::Index dim, std::size_t n) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < dim; ++r) m(r, c) = g(rng);
  std::vector<std::string> ids, bodies;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("c" + std::to_string((i * 7919) % 100003));
    bodies.push_back("body " + std::to_string(i));
  }
  return VectorIndex(ids, bodies, m);
}

// Full sort over scalar loops; shares no code with top_k.
std::vector<std::string> oracle(const VectorIndex& idx, const Eigen::VectorXd& q, std::size_t k) {
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    double dot = 0, na = 0, nb = 0;
    for (Eigen::Index r = 0; r < q.size(); ++r) {
      dot += idx.vectors()(r, static_cast<Eigen::Index>(i)) * q[r];
      na += idx.vectors()(r, static_cast<Eigen::Index>(i)) * idx.vectors()(r, static_cast<Eigen::Index>(i));
      nb += q[r] * q[r];
    }
    all.push_back({dot / std::sqrt(na * nb), idx.id(i)});
  }
  std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

std::vector<std::string> ids_of(const RetrievedSet& set) {
  std::vector<std::string> out;
  for (const auto& s : set) out.push_back(s.chunk_id);
  return out;
}

}  // namespace

TEST_CASE("cosine similarity") {
  CHECK(cosine_similarity(vec({1, 0}), vec({1, 0})) == doctest::Approx(1.0));
  CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0));
  CHECK(std::abs(cosine_similarity(vec({1, 2, 3}), vec({4, 5, 6})) - 32.0 / (std::sqrt(14.0) * std::sqrt(77.0))) < 1e-12);
  CHECK(std::abs(cosine_similarity(vec({1, 2, 3}), vec({4, 5, 6})) - 0.974632) < 1e-6);
  CHECK(code_of([] { cosine_similarity(vec({1, 2}), vec({1, 2, 3})); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([] { cosine_similarity(vec({0, 0}), vec({1, 2})); }) == ErrorCode::ZeroVector);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int t = 0; t < 500; ++t) {
    Eigen::VectorXd a(8), b(8);
    for (int i = 0; i < 8; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
    }
    CHECK(std::abs(cosine_similarity(a, a) - 1.0) < 1e-9);
    CHECK(cosine_similarity(a, b) == cosine_similarity(b, a));
    const double s = cosine_similarity(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("index construction") {
  HashEmbedder emb(16);
  const std::vector<Chunk> one{{"a#0000", "a", "alpha beta", 2}};
  CHECK(build_index(one, emb).size() == 1);

  const std::vector<Chunk> three{{"z", "", "one", 1}, {"a", "", "two", 1}, {"m", "", "three", 1}};
  const auto idx = build_index(three, emb);
  CHECK(idx.id(0) == "z");
  CHECK(idx.id(1) == "a");
  CHECK(idx.id(2) == "m");
  CHECK(idx.dimension() == 16);

  const std::vector<Chunk> dup{{"x", "", "one", 1}, {"x", "", "two", 1}};
  try {
    build_index(dup, emb);
    FAIL("duplicate accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateId);
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
  CHECK(code_of([&] { build_index({}, emb); }) == ErrorCode::EmptyIndex);
  // A chunk of pure whitespace has nothing to embed; the error names the chunk.
  try {
    build_index({{"blank", "", "   ", 0}}, emb);
    FAIL("blank chunk accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("blank") != std::string::npos);
  }
}

TEST_CASE("top_k basics") {
  Eigen::MatrixXd m(2, 3);
  m << 1, 0, 1,
       0, 1, 1;
  const VectorIndex idx({"b", "a", "c"}, {"B", "A", "C"}, m);
  const auto all = top_k(idx, vec({1, 0}), 10);
  REQUIRE(all.size() == 3);
  CHECK(all[0].chunk_id == "b");
  CHECK(all[0].score == doctest::Approx(1.0));
  CHECK(all[0].body == "B");
  CHECK(all[1].chunk_id == "c");
  CHECK(all[2].chunk_id == "a");

  // Equal scores fall back to ascending id.
  const auto tie = top_k(idx, vec({1, 1}), 3);
  CHECK(tie[0].chunk_id == "c");
  CHECK(tie[1].chunk_id == "a");
  CHECK(tie[2].chunk_id == "b");

  CHECK(code_of([&] { top_k(idx, vec({1, 0, 0}), 1); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { top_k(idx, vec({0, 0}), 1); }) == ErrorCode::ZeroVector);
  CHECK(code_of([&] { top_k(idx, vec({1, 0}), 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { top_k(VectorIndex{}, vec({1, 0}), 1); }) == ErrorCode::EmptyIndex);
}

TEST_CASE("parallel chunks tie even when rounding separates their scores") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g;
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd base(5);
    for (Eigen::Index i = 0; i < 5; ++i) base[i] = std::round(g(rng) * 3);
    if (base.squaredNorm() == 0) base[0] = 1;
    Eigen::MatrixXd m(5, 3);
    m.col(0) = base * 3.0;
    m.col(1) = base * 7.0;
    m.col(2) = base;
    const VectorIndex idx({"z", "m", "a"}, {"Z", "M", "A"}, m);
    Eigen::VectorXd q(5);
    for (Eigen::Index i = 0; i < 5; ++i) q[i] = g(rng);
    CHECK(ids_of(top_k(idx, q, 3)) == std::vector<std::string>{"a", "m", "z"});
    // The cut at k still prefers the smaller id.
    CHECK(ids_of(top_k(idx, q, 1)) == std::vector<std::string>{"a"});
  }
}

TEST_CASE("top_k agrees with a brute-force sort and is scale invariant") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index dim = 1 + static_cast<Eigen::Index>(rng() % 64);
    const std::size_t n = 1 + rng() % 200;
    const auto idx = random_index(rng, dim, n);
    std::normal_distribution<double> g;
    Eigen::VectorXd q(dim);
    for (Eigen::Index i = 0; i < dim; ++i) q[i] = g(rng);
    const std::size_t k = 1 + rng() % 12;
    const auto got = top_k(idx, q, k);
    CHECK(ids_of(got) == oracle(idx, q, k));
    for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].score >= got[i].score);
    CHECK(ids_of(top_k(idx, q * 37.5, k)) == ids_of(got));
  }
}

TEST_CASE("index persistence round-trips") {
  std::mt19937_64 rng(5);
  const auto idx = random_index(rng, 9, 20);
  const auto path = std::filesystem::temp_directory_path() / ("rat_index_" + std::to_string(::getpid()) + ".jsonl");
  save_index(path, idx);
  const auto back = load_index(path);
  REQUIRE(back.size() == idx.size());
  CHECK(back.dimension() == 9);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    CHECK(back.id(i) == idx.id(i));
    CHECK(back.body(i) == idx.body(i));
    CHECK(back.vector(i).isApprox(idx.vector(i), 0.0));
  }
  std::ofstream(path) << "{\"format\":\"other\"}\n";
  CHECK(code_of([&] { load_index(path); }) == ErrorCode::Io);
  std::ofstream(path) << "{\"format\":\"rat-vector-index\",\"version\":1,\"dimension\":2,\"count\":1}\n"
                      << "{\"chunk_id\":\"x\",\"vector\":[1,2,3],\"body\":\"b\"}\n";
  CHECK(code_of([&] { load_index(path); }) == ErrorCode::DimensionMismatch);
  std::filesystem::remove(path);
  CHECK(code_of([&] { load_index(path); }) == ErrorCode::Io);
}

TEST_CASE("query formation") {
  HashEmbedder emb(32);
  QueryOptions opts;
  SUBCASE("embed-draft concatenates") {
    auto q = to_query("TASK", {}, "T1", opts, &emb);
    CHECK(q.text == "TASK\nT1");
    REQUIRE(q.vector);
    CHECK(q.vector->size() == 32);
    q = to_query("TASK", {"R1", "R2"}, "T3", opts, &emb);
    CHECK(q.text == "TASK\nR1\n\nR2\nT3");
    CHECK_FALSE(q.conversation);
  }
  SUBCASE("front truncation keeps the tail") {
    opts.max_query_tokens = 2;
    CHECK(to_query("a b c", {}, "d e", opts, nullptr).text == "d e");
  }
  SUBCASE("llm-generated uses the query template") {
    opts.mode = QueryMode::LlmGenerated;
    ScriptedBackend chat({"QUERY-X"});
    const auto q = to_query("the task", {"done step"}, "next step", opts, &emb, &chat);
    CHECK(q.text == "QUERY-X");
    CHECK(q.mode == QueryMode::LlmGenerated);
    REQUIRE(q.conversation);
    const auto expected = render_prompt(templates::kQuery, {{"question", "the task"}, {"answer", "done step\n\nnext step"}});
    CHECK(*q.conversation == expected);
    REQUIRE(chat.transcript().size() == 1);
    CHECK(chat.transcript()[0] == expected);
    CHECK(code_of([&] { to_query("t", {}, "s", opts, &emb, nullptr); }) == ErrorCode::InvalidArgument);
  }
  CHECK(code_of([&] { to_query("t", {}, "  \n", opts, &emb); }) == ErrorCode::InvalidArgument);
  CHECK(query_mode_from_string(to_string(QueryMode::LlmGenerated)) == QueryMode::LlmGenerated);
  CHECK(code_of([] { query_mode_from_string("semantic"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("retrievers") {
  HashEmbedder emb(32);
  const auto idx = build_index({{"a", "", "apples and pears", 3}, {"b", "", "rockets and engines", 3}}, emb);
  IndexRetriever r(idx);
  CHECK(r.needs_vector());
  const auto q = to_query("fruit", {}, "apples and pears", QueryOptions{}, &emb);
  CHECK(r.retrieve(q, 1).front().chunk_id == "a");
  Query bare;
  bare.text = "x";
  CHECK(code_of([&] { r.retrieve(bare, 1); }) == ErrorCode::InvalidArgument);

  struct FakeSearch final : WebSearch {
    std::string seen;
    RetrievedSet search(std::string_view query, std::size_t k) override {
      seen = std::string(query);
      return RetrievedSet(k, ScoredChunk{"web", 0.5, "page"});
    }
  } engine;
  WebSearchRetriever web(engine);
  CHECK_FALSE(web.needs_vector());
  CHECK(web.retrieve(bare, 2).size() == 2);
  CHECK(engine.seen == "x");
}
