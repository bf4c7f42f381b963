// Prints one PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "rat/arena.hpp"
#include "rat/corpus.hpp"
#include "rat/eval.hpp"
#include "rat/pipeline.hpp"
#include "rat/prompts.hpp"
#include "rat/rating.hpp"
#include "rat/retrieval.hpp"

using namespace rat;
namespace fs = std::filesystem;

namespace {

// Tolerances and time limits.
constexpr double kCosineExpected = 0.974632;
constexpr double kCosineTol = 1e-6;
constexpr double kEnumTol = 1e-12;
constexpr double kMonteCarloTol = 0.01;
constexpr double kRelImprovementTol = 0.02;
constexpr double kTrueSkillTol = 0.05;
constexpr double kAlgorithmSeconds = 1.0;
constexpr double kRetrievalSeconds = 10.0;
constexpr double kPassAtKSeconds = 30.0;
constexpr double kTrueSkillSeconds = 10.0;

struct Failure {
  std::string why;
};

void expect(bool ok, const std::string& why) {
  if (!ok) throw Failure{why};
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  expect(static_cast<bool>(in), "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<void()>& body) {
  const auto start = std::chrono::steady_clock::now();
  std::string why;
  try {
    body();
  } catch (const Failure& f) {
    why = f.why;
  } catch (const std::exception& e) {
    why = std::string("unexpected exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (why.empty() && limit_seconds > 0 && secs > limit_seconds) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "took %.2f s, limit %.0f s", secs, limit_seconds);
    why = buf;
  }
  if (why.empty()) {
    std::printf("PASS %s (%.3f s)\n", name.c_str(), secs);
  } else {
    ++failures;
    std::printf("FAIL %s: %s\n", name.c_str(), why.c_str());
  }
  std::fflush(stdout);
}

// Ten short documents on distinct topics.
std::vector<Chunk> fixture_chunks() {
  const char* bodies[] = {
      "apples grow on trees in orchards", "rockets burn fuel to reach orbit",   "rivers carry water to the sea",
      "bread rises because yeast makes gas", "volcanoes erupt molten rock",     "bees make honey from nectar",
      "glaciers carve deep valleys slowly", "magnets attract iron and steel",    "owls hunt mice at night",
      "coral reefs host many fish species"};
  std::vector<Chunk> out;
  for (int i = 0; i < 10; ++i) out.push_back({"doc" + std::to_string(i) + "#0000", "doc" + std::to_string(i), bodies[i], 0});
  return out;
}

// ---------------------------------------------------------------------------

void algorithm_structure() {
  HashEmbedder emb(64);
  const VectorIndex index = build_index(fixture_chunks(), emb);
  IndexRetriever retriever(index);
  const std::vector<std::string> revisions{"R1 apples", "R1 apples\n\nR2 rockets", "R1 apples\n\nR2 rockets\n\nR3 rivers"};
  ScriptedBackend chat({"T1 apples orchards\n\nT2 rockets orbit\n\nT3 rivers sea", revisions[0], revisions[1], revisions[2]});
  PipelineConfig config;
  config.k = 3;
  config.query_mode = QueryMode::EmbedDraft;
  const TaskPrompt task{"alg", "Describe apples, rockets and rivers", TaskKind::Writing};
  const RunTrace t = run_rat(task, Engine{chat, &emb, &retriever}, config);

  expect(t.counts.retrievals == 3, "retrievals = " + std::to_string(t.counts.retrievals));
  std::size_t revise = 0;
  for (const auto& c : t.completions) revise += c.stage == "revise";
  expect(revise == 3, "revision completions = " + std::to_string(revise));
  const auto transcript = chat.transcript();
  expect(transcript.size() == 4, "backend saw " + std::to_string(transcript.size()) + " calls");

  const std::vector<std::string> originals{"T1 apples orchards", "T2 rockets orbit", "T3 rivers sea"};
  const std::vector<std::string> revised{"R1 apples", "R2 rockets"};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string& sent = transcript[i + 1].messages.back().content;
    const std::string round = "round " + std::to_string(i + 1);
    // Retrieved set i, computed here from the round's own query.
    const auto expected_set = top_k(index, emb.embed(t.rounds[i].query_text), config.k);
    expect(expected_set == t.rounds[i].retrieved, round + ": retrieved set differs from top_k");
    for (const auto& hit : expected_set) expect(contains(sent, hit.body), round + ": retrieved body missing from prompt");
    for (std::size_t j = 0; j < i; ++j) expect(contains(sent, revised[j]), round + ": revised step missing");
    expect(contains(sent, originals[i]), round + ": current original step missing");
    for (std::size_t j = 0; j < i; ++j) expect(!contains(sent, originals[j]), round + ": stale original step present");
    // Nothing retrieved for a later round leaks into this one.
    for (std::size_t later = i + 1; later < 3; ++later) {
      for (const auto& hit : t.rounds[later].retrieved) {
        const bool also_now = std::any_of(expected_set.begin(), expected_set.end(),
                                          [&](const ScoredChunk& s) { return s.chunk_id == hit.chunk_id; });
        expect(also_now || !contains(sent, hit.body), round + ": later retrieval leaked");
      }
    }
  }
  expect(t.answer() == revisions[2], "final answer is not the last revision");
}

void ablation_separations() {
  HashEmbedder emb(64);
  const VectorIndex index = build_index(fixture_chunks(), emb);
  IndexRetriever retriever(index);
  const TaskPrompt task{"abl", "Why do bees make honey and owls hunt at night?", TaskKind::Writing};

  {
    ScriptedBackend chat({"bees nectar\n\nowls mice\n\nreefs fish", "revised whole"});
    PipelineConfig c;
    c.rat_mode = RatMode::NonCausal;
    c.query_mode = QueryMode::EmbedDraft;
    const auto t = run_rat(task, Engine{chat, &emb, &retriever}, c);
    expect(t.counts.retrievals == 1, "non-causal retrievals = " + std::to_string(t.counts.retrievals));
    expect(t.rounds.size() == 1, "non-causal rounds != 1");
  }
  {
    ScriptedBackend a({"same answer"}), b({"same answer"});
    PipelineConfig rat_c;
    rat_c.query_strategy = QueryStrategy::QuestionOnly;
    rat_c.k = 4;
    PipelineConfig rag_c;
    rag_c.method = Method::Rag;
    rag_c.n_shots = 4;
    const auto qo = run_rat(task, Engine{a, &emb, &retriever}, rat_c);
    const auto rag = run_rag(task, Engine{b, &emb, &retriever}, rag_c);
    expect(qo.counts == rag.counts, "question-only call counts differ from RAG-n");
    expect(qo.rounds.size() == 1 && rag.rounds.size() == 1, "question-only or RAG-n round count != 1");
    expect(qo.rounds[0].retrieved == rag.rounds[0].retrieved, "question-only retrieved set differs from RAG-n");
    expect(qo.rounds[0].retrieved.size() == 4, "RAG-n set size != n");
    expect(qo.rounds[0].conversation == rag.rounds[0].conversation, "question-only prompt differs from RAG-n");
    expect(a.transcript() == b.transcript(), "question-only transcript differs from RAG-n");
    expect(qo.answer() == rag.answer(), "answers differ");
  }
  {
    ScriptedBackend chat({"d", "c"});
    PipelineConfig c;
    c.method = Method::Direct;
    const auto d = run_pipeline(task, Engine{chat, &emb, &retriever}, c);
    c.method = Method::Cot;
    const auto cot = run_pipeline(task, Engine{chat, &emb, &retriever}, c);
    expect(d.counts.retrievals == 0 && cot.counts.retrievals == 0, "DIRECT/COT retrieved");
    expect(d.counts.embeddings == 0 && cot.counts.embeddings == 0, "DIRECT/COT embedded");
  }
}

void retrieval_exactness() {
  const Eigen::Vector3d a(1, 2, 3), b(4, 5, 6);
  const double cos = cosine_similarity(a, b);
  expect(std::abs(cos - kCosineExpected) <= kCosineTol, "cosine([1,2,3],[4,5,6]) = " + std::to_string(cos));

  std::mt19937_64 rng(20260101);
  std::normal_distribution<double> g;
  for (int inst = 0; inst < 1000; ++inst) {
    const int dim = 1 + static_cast<int>(rng() % 64);
    const std::size_t n = 1 + rng() % 500;
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(n));
    std::vector<std::string> ids, bodies;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t c = 0; c < n; ++c) {
      // Coarse values make exact score ties common.
      for (int r = 0; r < dim; ++r) m(r, static_cast<Eigen::Index>(c)) = static_cast<double>(static_cast<int>(g(rng) * 2));
      if (m.col(static_cast<Eigen::Index>(c)).squaredNorm() == 0) m(0, static_cast<Eigen::Index>(c)) = 1;
      ids.push_back("id" + std::to_string(perm[c]));
      bodies.push_back("b");
    }
    const VectorIndex index(ids, bodies, m);
    Eigen::VectorXd q(dim);
    for (int r = 0; r < dim; ++r) q[r] = g(rng);
    if (q.squaredNorm() == 0) q[0] = 1;
    const std::size_t k = 1 + rng() % std::min<std::size_t>(n + 5, 50);

    // Oracle: scalar cosine, full sort, ascending id on ties.
    std::vector<std::pair<double, std::string>> all;
    double qn = 0;
    for (int r = 0; r < dim; ++r) qn += q[r] * q[r];
    for (std::size_t c = 0; c < n; ++c) {
      double dot = 0, cn = 0;
      for (int r = 0; r < dim; ++r) {
        dot += m(r, static_cast<Eigen::Index>(c)) * q[r];
        cn += m(r, static_cast<Eigen::Index>(c)) * m(r, static_cast<Eigen::Index>(c));
      }
      all.push_back({dot / std::sqrt(cn * qn), ids[c]});
    }
    const auto got = top_k(index, q, k);
    // Scores equal up to rounding are ties; order those by id.
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t lo = 0; lo < all.size();) {
      std::size_t hi = lo + 1;
      while (hi < all.size() && all[hi - 1].first - all[hi].first <= 1e-12) ++hi;
      std::sort(all.begin() + static_cast<long>(lo), all.begin() + static_cast<long>(hi),
                [](const auto& x, const auto& y) { return x.second < y.second; });
      lo = hi;
    }
    expect(got.size() == std::min(k, n), "instance " + std::to_string(inst) + ": wrong result size");
    for (std::size_t i = 0; i < got.size(); ++i) {
      expect(got[i].chunk_id == all[i].second, "instance " + std::to_string(inst) + ": rank " + std::to_string(i) +
                                                   " is " + got[i].chunk_id + ", oracle " + all[i].second);
    }
  }
}

double binom_pass(std::size_t n, std::size_t c, std::size_t k) {
  std::size_t hit = 0, total = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
    ++total;
    hit += (mask & ((1u << c) - 1)) != 0;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

void pass_at_k_check() {
  for (std::size_t n = 1; n <= 8; ++n)
    for (std::size_t c = 0; c <= n; ++c)
      for (std::size_t k = 1; k <= n; ++k) {
        const double got = pass_at_k(n, c, k), want = binom_pass(n, c, k);
        expect(std::abs(got - want) <= kEnumTol, "n=" + std::to_string(n) + " c=" + std::to_string(c) +
                                                     " k=" + std::to_string(k) + ": " + std::to_string(got) +
                                                     " vs " + std::to_string(want));
      }
  std::mt19937_64 rng(77);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 9 + rng() % 32;
    const std::size_t c = rng() % (n + 1);
    const std::size_t k = 1 + rng() % n;
    std::vector<int> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i < c;
    std::size_t hits = 0;
    const int trials = 100000;
    for (int trial = 0; trial < trials; ++trial) {
      bool any = false;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng() % (n - i);
        std::swap(pool[i], pool[j]);
        any = any || pool[i];
      }
      hits += any;
    }
    const double mc = static_cast<double>(hits) / trials;
    const double got = pass_at_k(n, c, k);
    expect(std::abs(mc - got) <= kMonteCarloTol, "n=" + std::to_string(n) + " c=" + std::to_string(c) + " k=" +
                                                     std::to_string(k) + ": estimator " + std::to_string(got) +
                                                     ", simulation " + std::to_string(mc));
  }
}

void relative_improvement_cells() {
  struct Cell {
    const char* label;
    double direct, rat, printed;
  };
  // Absolute DIRECT and RAT rows with the printed relative row, per base model.
  const Cell cells[] = {
      {"GPT-3.5 HumanEval pass@1", 50.49, 59.27, 17.39},  {"GPT-3.5 HumanEval pass@5", 72.56, 80.49, 10.93},
      {"GPT-3.5 HumanEval+ pass@1", 48.09, 56.31, 17.09}, {"GPT-3.5 HumanEval+ pass@5", 70.55, 76.07, 7.82},
      {"GPT-3.5 MBPP pass@1", 60.84, 59.31, -2.51},       {"GPT-3.5 MBPP pass@5", 72.95, 74.74, 2.45},
      {"GPT-3.5 MBPP+ pass@1", 54.92, 59.10, 7.61},       {"GPT-3.5 MBPP+ pass@5", 64.09, 72.61, 13.29},
      {"GPT-3.5 Average pass@1", 53.59, 58.50, 9.17},     {"GPT-3.5 Average pass@5", 70.04, 75.98, 8.48},
      {"GPT-4 HumanEval pass@1", 57.32, 69.33, 20.94},    {"GPT-4 HumanEval pass@5", 78.66, 88.40, 12.38},
      {"GPT-4 HumanEval+ pass@1", 54.36, 64.63, 18.89},   {"GPT-4 HumanEval+ pass@5", 76.69, 82.21, 7.20},
      {"GPT-4 MBPP pass@1", 60.00, 68.90, 14.83},         {"GPT-4 MBPP pass@5", 76.07, 79.85, 4.97},
      {"GPT-4 MBPP+ pass@1", 66.13, 67.36, 1.86},         {"GPT-4 MBPP+ pass@5", 78.53, 82.14, 4.60},
      {"GPT-4 Average pass@1", 59.45, 67.55, 13.63},      {"GPT-4 Average pass@5", 77.49, 83.15, 7.31},
  };
  for (const auto& c : cells) {
    const double got = relative_improvement(c.direct, c.rat);
    expect(std::abs(got - c.printed) <= kRelImprovementTol,
           std::string(c.label) + ": " + std::to_string(got) + " vs printed " + std::to_string(c.printed));
  }
}

// Truncated-normal moments by Simpson quadrature for the oracle.
std::pair<double, double> moments(double t, double lo, double hi) {
  lo = std::max(lo, t - 40.0);
  hi = std::min(hi, t + 40.0);
  const int n = 40000;
  const double h = (hi - lo) / n;
  double m0 = 0, m1 = 0, m2 = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    const double d = std::exp(-0.5 * (x - t) * (x - t));
    m0 += w * d;
    m1 += w * d * x;
    m2 += w * d * x * x;
  }
  const double mean = m1 / m0;
  return {mean, m2 / m0 - mean * mean};
}

std::pair<Rating, Rating> oracle_update(Rating a, Rating b, Outcome o, const RatingParams& p) {
  if (o == Outcome::BWins) {
    auto r = oracle_update(b, a, Outcome::AWins, p);
    return {r.second, r.first};
  }
  const double va = a.sigma * a.sigma + p.tau * p.tau, vb = b.sigma * b.sigma + p.tau * p.tau;
  const double c = std::sqrt(2 * p.beta * p.beta + va + vb);
  double lo = -10, hi = 10;  // inverse cdf by bisection
  for (int i = 0; i < 200; ++i) {
    const double mid = (lo + hi) / 2;
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < (p.draw_probability + 1) / 2 ? lo : hi) = mid;
  }
  const double eps = lo * std::sqrt(2.0) * p.beta / c;
  const double t = (a.mu - b.mu) / c;
  const auto [mean, var] = o == Outcome::AWins ? moments(t, eps, INFINITY) : moments(t, -eps, eps);
  const double v = mean - t, w = 1 - var;
  return {{a.mu + va / c * v, std::sqrt(va * (1 - va / (c * c) * w))},
          {b.mu - vb / c * v, std::sqrt(vb * (1 - vb / (c * c) * w))}};
}

void trueskill_check() {
  const RatingParams params;
  const std::vector<std::string> methods{"direct", "cot", "rag", "rat"};
  std::mt19937_64 rng(8);
  const RawVote votes[] = {RawVote::A, RawVote::B, RawVote::Tie, RawVote::BothBad};
  std::vector<MatchRecord> log;
  std::map<std::string, Rating> oracle;
  for (const auto& m : methods) oracle[m] = params.prior;
  for (int i = 0; i < 20; ++i) {
    const std::size_t a = rng() % 4, b = (a + 1 + rng() % 3) % 4;
    const RawVote v = votes[rng() % 4];
    log.push_back({"m0-" + std::to_string(i + 1), "t", methods[a], methods[b], v, outcome_of(v)});
    auto [ra, rb] = oracle_update(oracle[methods[a]], oracle[methods[b]], outcome_of(v), params);
    oracle[methods[a]] = ra;
    oracle[methods[b]] = rb;
  }
  const auto board = leaderboard(log, params, methods);
  for (const auto& m : methods) {
    const auto& got = board.at(m).rating;
    expect(std::abs(got.mu - oracle[m].mu) <= kTrueSkillTol && std::abs(got.sigma - oracle[m].sigma) <= kTrueSkillTol,
           m + ": (" + std::to_string(got.mu) + ", " + std::to_string(got.sigma) + ") vs oracle (" +
               std::to_string(oracle[m].mu) + ", " + std::to_string(oracle[m].sigma) + ")");
  }

  std::uniform_real_distribution<double> mu(0, 50), sig(0.5, 10);
  const Outcome outcomes[] = {Outcome::AWins, Outcome::BWins, Outcome::Tie};
  for (int i = 0; i < 10000; ++i) {
    const Rating a{mu(rng), sig(rng)}, b{mu(rng), sig(rng)};
    const Outcome o = outcomes[i % 3];
    const Outcome mirrored = o == Outcome::AWins ? Outcome::BWins : o == Outcome::BWins ? Outcome::AWins : Outcome::Tie;
    const auto ab = trueskill_update(a, b, o, params);
    const auto ba = trueskill_update(b, a, mirrored, params);
    expect(std::abs(ab.first.mu - ba.second.mu) < 1e-9 && std::abs(ab.first.sigma - ba.second.sigma) < 1e-9,
           "swapping sides changed the update (match " + std::to_string(i) + ")");
    const double prior_a = std::sqrt(a.sigma * a.sigma + params.tau * params.tau);
    const double prior_b = std::sqrt(b.sigma * b.sigma + params.tau * params.tau);
    expect(ab.first.sigma <= prior_a && ab.second.sigma <= prior_b, "sigma grew (match " + std::to_string(i) + ")");
    if (o == Outcome::AWins) expect(ab.first.mu >= a.mu && ab.second.mu <= b.mu, "winner lost mu");
  }

  const auto empty = leaderboard({}, params, methods);
  for (const auto& m : methods) {
    const auto& r = empty.at(m).rating;
    expect(r.mu == 25.0 && std::abs(r.sigma - 25.0 / 3.0) < 1e-12, m + " is not at (25, 25/3) on an empty log");
  }
}

void plan_checker() {
  const fs::path dir = fs::path(RAT_FIXTURE_DIR) / "plans";
  const RecipeTable recipes = load_recipes(fs::path(RAT_DATA_DIR) / "recipes.json");
  const ItemCount goal{"golden_apple", 1};

  const auto rat_steps = parse_plan(read(dir / "golden_apple_rat.txt"));
  expect(rat_steps.size() == 13, "RAT plan parsed to " + std::to_string(rat_steps.size()) + " steps");
  const auto rat = check_plan(rat_steps, recipes, goal);
  expect(!rat.executable, "RAT plan verified executable");
  expect(rat.first_violation && rat.first_violation->step_index == 8,
         "RAT plan first violation not at STEP 8");
  expect(contains(rat.first_violation->reason, "furnace"), "RAT plan violation is not the furnace: " + rat.first_violation->reason);

  const auto fixed = check_plan(parse_plan(read(dir / "golden_apple_rat_fixed.txt")), recipes, goal);
  expect(fixed.executable, "corrected plan not executable: " + (fixed.first_violation ? fixed.first_violation->reason : ""));

  const auto cot_steps = parse_plan(read(dir / "golden_apple_cot.txt"));
  const auto cot = check_plan(cot_steps, recipes, goal);
  expect(!cot.executable && cot.first_violation && cot.first_violation->step_index, "CoT plan not rejected at a step");
  const auto& bad = cot_steps[static_cast<std::size_t>(*cot.first_violation->step_index - 1)];
  expect(recipes.canonical(bad.item) == "crafting_table",
         "CoT plan fails at STEP " + std::to_string(*cot.first_violation->step_index) + " (" + bad.item +
             "), not the crafting table");
}

void prompt_goldens() {
  const fs::path dir = fs::path(RAT_FIXTURE_DIR) / "prompts";
  const std::vector<std::pair<std::string, Bindings>> cases{
      {"draft", {{"question", "Q-ALPHA"}}},
      {"query", {{"question", "Q-BETA"}, {"answer", "A-BETA"}}},
      {"revise", {{"question", "Q-GAMMA"}, {"answer", "A-GAMMA"}, {"content", "C-GAMMA"}}}};
  for (const auto& [id, bindings] : cases) {
    std::string expected = read(dir / (id + ".golden.txt"));
    for (const auto& [k, v] : bindings) {
      const std::string marker = "{" + k + "}";
      const auto pos = expected.find(marker);
      expect(pos != std::string::npos, id + " golden lacks " + marker);
      expected.replace(pos, marker.size(), v);
    }
    const auto conv = render_prompt(id, bindings);
    expect(conv.messages.size() == 1, id + " renders to more than one message");
    expect(conv.messages[0].content == expected, id + " differs from its golden");
  }
}

void decontamination() {
  std::mt19937_64 rng(4242);
  auto text = [&](std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += "w" + std::to_string(rng() % 8) + (rng() % 5 ? " " : ", ");
    return s;
  };
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<BenchmarkText> benches;
    for (int b = 0; b < 1 + static_cast<int>(rng() % 3); ++b) benches.push_back({"b" + std::to_string(b), text(1 + rng() % 12)});
    std::vector<Chunk> chunks;
    for (int c = 0; c < 6; ++c) chunks.push_back({"c" + std::to_string(c), "d", text(rng() % 20), 0});
    const std::size_t verbatim = chunks.size();
    chunks.push_back({"copy", "d", text(3) + benches[rng() % benches.size()].text + text(2), 0});

    const auto result = decontaminate(chunks, benches, n);
    std::set<std::string> removed;
    for (const auto& r : result.removed) removed.insert(r.chunk_id);
    expect(result.kept.size() + result.removed.size() == chunks.size(), "partition lost chunks");
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
      const auto toks = token_strings(chunks[ci].body);
      bool shares = false;
      for (const auto& b : benches) {
        const auto bt = token_strings(b.text);
        const std::size_t size = std::min(n, bt.size());
        for (std::size_t i = 0; !shares && size > 0 && i + size <= bt.size(); ++i)
          for (std::size_t j = 0; !shares && j + size <= toks.size(); ++j)
            shares = std::equal(bt.begin() + i, bt.begin() + i + size, toks.begin() + j);
      }
      expect(shares == (removed.count(chunks[ci].id) == 1),
             "instance " + std::to_string(inst) + ": chunk " + chunks[ci].id + " disagrees with the oracle");
      if (ci == verbatim) expect(shares, "verbatim copy kept");
    }
  }
}

void arena_replay() {
  const fs::path dir = fs::temp_directory_path() / ("rat_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "events.jsonl";
  std::vector<PoolTask> pool;
  for (int i = 0; i < 5; ++i) {
    pool.push_back({"t" + std::to_string(i), "task " + std::to_string(i),
                    {{"direct", "d" + std::to_string(i)}, {"cot", "c" + std::to_string(i)},
                     {"rag", "g" + std::to_string(i)}, {"rat", "r" + std::to_string(i)}}});
  }
  ArenaOptions opts;
  opts.seed = 11;
  std::string before;
  std::string both_bad_id;
  {
    ArenaService svc(pool, log, opts);
    std::mt19937_64 rng(12);
    const VoteChoice choices[] = {VoteChoice::A, VoteChoice::B, VoteChoice::Tie, VoteChoice::BothBad};
    while (svc.events().size() < 200) {
      const auto m = svc.next_match();
      const auto e = svc.record_vote(m.match_id, choices[rng() % 4]);
      if (e && e->record.raw_vote == RawVote::BothBad) {
        expect(e->record.outcome == Outcome::Tie, "BOTH_BAD not recorded as TIE");
        both_bad_id = m.match_id;
      }
    }
    before = svc.leaderboard_csv();
    expect(!both_bad_id.empty(), "no BOTH_BAD vote in 200 events");
    bool rejected = false;
    try {
      svc.record_vote(both_bad_id, VoteChoice::A);
    } catch (const Error& e) {
      rejected = e.code() == ErrorCode::DuplicateVote;
    }
    expect(rejected, "duplicate vote accepted");
    expect(svc.events().size() == 200, "duplicate vote changed the log");
  }
  // Crash mid-append: a partial line at the tail.
  { std::ofstream(log, std::ios::app) << "{\"seq\":201,\"ts\":\"20"; }
  {
    ArenaService restarted(pool, log, opts);
    expect(restarted.events().size() == 200, "replay found " + std::to_string(restarted.events().size()) + " events");
    expect(restarted.leaderboard_csv() == before, "leaderboard export differs after replay");
  }
  const auto replayed = read_event_log(log);
  std::size_t ties_from_both_bad = 0;
  for (const auto& e : replayed) ties_from_both_bad += e.record.raw_vote == RawVote::BothBad && e.record.outcome == Outcome::Tie;
  expect(ties_from_both_bad > 0, "BOTH_BAD events not persisted as TIE");
  expect(leaderboard_csv(leaderboard(match_records(replayed), {}, {"cot", "direct", "rag", "rat"})) == before,
         "offline replay differs from the service export");
  fs::remove_all(dir);
}

}  // namespace

int main() {
  criterion("algorithm-structure", kAlgorithmSeconds, algorithm_structure);
  criterion("ablation-separations", 0, ablation_separations);
  criterion("retrieval-exactness", kRetrievalSeconds, retrieval_exactness);
  criterion("pass-at-k", kPassAtKSeconds, pass_at_k_check);
  criterion("relative-improvement-table", 0, relative_improvement_cells);
  criterion("trueskill", kTrueSkillSeconds, trueskill_check);
  criterion("plan-checker", 0, plan_checker);
  criterion("prompt-goldens", 0, prompt_goldens);
  criterion("decontamination", 0, decontamination);
  criterion("arena-replay", 0, arena_replay);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
