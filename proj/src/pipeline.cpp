#include "rat/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

namespace rat {

using nlohmann::json;

// Names -----------------------------------------------------------------------

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Code: return "code";
    case TaskKind::Math: return "math";
    case TaskKind::Plan: return "plan";
    case TaskKind::Writing: return "writing";
  }
  return "writing";
}

const char* to_string(Method method) {
  switch (method) {
    case Method::Direct: return "direct";
    case Method::Cot: return "cot";
    case Method::Rag: return "rag";
    case Method::Rat: return "rat";
  }
  return "rat";
}

const char* to_string(RatMode mode) { return mode == RatMode::Causal ? "causal" : "non-causal"; }

const char* to_string(QueryStrategy strategy) {
  switch (strategy) {
    case QueryStrategy::QuestionOnly: return "question-only";
    case QueryStrategy::FullCot: return "full-cot";
    case QueryStrategy::Stepwise: return "stepwise";
  }
  return "stepwise";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

[[noreturn]] void bad_name(const char* what, std::string_view name) {
  throw Error(ErrorCode::InvalidArgument, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

}  // namespace

TaskKind task_kind_from_string(std::string_view name) {
  const auto n = lower(name);
  if (n == "code") return TaskKind::Code;
  if (n == "math") return TaskKind::Math;
  if (n == "plan") return TaskKind::Plan;
  if (n == "writing") return TaskKind::Writing;
  bad_name("task kind", name);
}

Method method_from_string(std::string_view name) {
  const auto n = lower(name);
  if (n == "direct") return Method::Direct;
  if (n == "cot") return Method::Cot;
  if (n == "rag") return Method::Rag;
  if (n == "rat") return Method::Rat;
  bad_name("method", name);
}

RatMode rat_mode_from_string(std::string_view name) {
  const auto n = lower(name);
  if (n == "causal") return RatMode::Causal;
  if (n == "non-causal") return RatMode::NonCausal;
  bad_name("rat mode", name);
}

QueryStrategy query_strategy_from_string(std::string_view name) {
  const auto n = lower(name);
  if (n == "question-only") return QueryStrategy::QuestionOnly;
  if (n == "full-cot") return QueryStrategy::FullCot;
  if (n == "stepwise") return QueryStrategy::Stepwise;
  bad_name("query strategy", name);
}

// Config ----------------------------------------------------------------------

json to_json(const PipelineConfig& c) {
  json j{{"method", to_string(c.method)},
         {"n_shots", c.n_shots},
         {"rat_mode", to_string(c.rat_mode)},
         {"query_strategy", to_string(c.query_strategy)},
         {"k", c.k},
         {"temperature", c.decoding.temperature},
         {"max_tokens", c.decoding.max_tokens},
         {"sample_count", c.decoding.sample_count},
         {"template_set", c.template_set},
         {"context_budget_tokens", c.context_budget_tokens},
         {"max_query_tokens", c.max_query_tokens}};
  j["seed"] = c.decoding.seed ? json(*c.decoding.seed) : json(nullptr);
  j["query_mode"] = c.query_mode ? json(to_string(*c.query_mode)) : json(nullptr);
  j["synthesize"] = c.synthesize ? json(*c.synthesize) : json(nullptr);
  return j;
}

PipelineConfig apply_config(const PipelineConfig& base, const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "pipeline config must be an object");
  PipelineConfig c = base;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "method") c.method = method_from_string(value.get<std::string>());
      else if (key == "n_shots") c.n_shots = value.get<std::size_t>();
      else if (key == "rat_mode") c.rat_mode = rat_mode_from_string(value.get<std::string>());
      else if (key == "query_strategy") c.query_strategy = query_strategy_from_string(value.get<std::string>());
      else if (key == "k") c.k = value.get<std::size_t>();
      else if (key == "temperature") c.decoding.temperature = value.get<double>();
      else if (key == "max_tokens") c.decoding.max_tokens = value.get<int>();
      else if (key == "sample_count") c.decoding.sample_count = value.get<int>();
      else if (key == "seed") c.decoding.seed = value.is_null() ? std::nullopt : std::optional(value.get<std::uint64_t>());
      else if (key == "template_set") c.template_set = value.get<std::string>();
      else if (key == "query_mode") c.query_mode = value.is_null() ? std::nullopt : std::optional(query_mode_from_string(value.get<std::string>()));
      else if (key == "synthesize") c.synthesize = value.is_null() ? std::nullopt : std::optional(value.get<bool>());
      else if (key == "context_budget_tokens") c.context_budget_tokens = value.get<std::size_t>();
      else if (key == "max_query_tokens") c.max_query_tokens = value.get<std::size_t>();
      else throw Error(ErrorCode::Config, "unknown pipeline config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("pipeline config: ") + e.what());
  }
  if (c.template_set != kDefaultTemplateSet) {
    throw Error(ErrorCode::Config, "unknown template set '" + c.template_set + "'");
  }
  if (c.k < 1 || c.n_shots < 1) throw Error(ErrorCode::Config, "k and n_shots must be at least 1");
  validate(c.decoding);
  return c;
}

QueryMode effective_query_mode(const PipelineConfig& config, TaskKind kind) {
  if (config.query_mode) return *config.query_mode;
  return kind == TaskKind::Code || kind == TaskKind::Math ? QueryMode::EmbedDraft : QueryMode::LlmGenerated;
}

bool effective_synthesize(const PipelineConfig& config, TaskKind kind) {
  if (config.synthesize) return *config.synthesize;
  return kind == TaskKind::Code;
}

std::string_view step_joiner(TaskKind kind) { return kind == TaskKind::Plan ? "\n" : "\n\n"; }

// Traces ----------------------------------------------------------------------

const std::string& RunTrace::answer() const {
  if (answers.empty()) throw Error(ErrorCode::InvalidArgument, "run produced no answer");
  return answers.front();
}

namespace {

json conversation_json(const Conversation& conv) {
  json arr = json::array();
  for (const auto& m : conv.messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

json retrieved_json(const RetrievedSet& set) {
  json arr = json::array();
  for (const auto& r : set) arr.push_back({{"chunk_id", r.chunk_id}, {"score", r.score}});
  return arr;
}

}  // namespace

json to_json(const RunTrace& t, bool include_wall_time) {
  json completions = json::array();
  for (const auto& c : t.completions) {
    completions.push_back({{"stage", c.stage},
                           {"sample", c.sample},
                           {"round", c.round ? json(*c.round) : json(nullptr)},
                           {"conversation", conversation_json(c.conversation)},
                           {"outputs", c.outputs}});
  }
  json rounds = json::array();
  for (const auto& r : t.rounds) {
    rounds.push_back({{"sample", r.sample},
                      {"round", r.index},
                      {"query", r.query_text},
                      {"query_mode", to_string(r.query_mode)},
                      {"retrieved", retrieved_json(r.retrieved)},
                      {"conversation", conversation_json(r.conversation)},
                      {"output", r.output}});
  }
  json thoughts = json::array();
  for (const auto& chain : t.initial_thoughts) thoughts.push_back(chain.steps);

  json j{{"task", {{"task_id", t.task.id}, {"instruction", t.task.instruction}, {"kind", to_string(t.task.kind)}}},
         {"config", to_json(t.config)},
         {"initial_thoughts", std::move(thoughts)},
         {"completions", std::move(completions)},
         {"rounds", std::move(rounds)},
         {"answers", t.answers},
         {"answer", t.answers.empty() ? json(nullptr) : json(t.answers.front())},
         {"counts",
          {{"completions", t.counts.completions},
           {"embeddings", t.counts.embeddings},
           {"retrievals", t.counts.retrievals}}}};
  if (include_wall_time) j["wall_time_ms"] = t.wall_time_ms;
  return j;
}

// Thought segmentation ----------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool starts_step_marker(std::string_view line) {
  const auto b = line.find_first_not_of(" \t");
  if (b == std::string_view::npos) return false;
  line.remove_prefix(b);
  if (line.size() < 4) return false;
  if (lower(line.substr(0, 4)) != "step") return false;
  return line.size() == 4 || !std::isalpha(static_cast<unsigned char>(line[4]));
}

std::vector<std::string> split_paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty()) out.push_back(std::move(t));
    current.clear();
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      flush();
    } else {
      // A literal "/n/n" is also a paragraph break.
      std::size_t at = 0;
      std::size_t hit;
      while ((hit = line.find("/n/n", at)) != std::string_view::npos) {
        current.append(line.substr(at, hit - at));
        flush();
        at = hit + 4;
      }
      current.append(line.substr(at));
      current += '\n';
    }
    if (eol == text.size()) break;
    pos = eol + 1;
  }
  flush();
  return out;
}

}  // namespace

ThoughtChain split_thoughts(std::string_view draft, TaskKind kind) {
  ThoughtChain chain;
  if (kind == TaskKind::Plan) {
    std::string current;
    bool in_step = false;
    std::size_t pos = 0;
    while (pos <= draft.size()) {
      std::size_t eol = draft.find('\n', pos);
      if (eol == std::string_view::npos) eol = draft.size();
      const std::string_view line = draft.substr(pos, eol - pos);
      if (starts_step_marker(line)) {
        if (in_step) {
          auto t = trim(current);
          if (!t.empty()) chain.steps.push_back(std::move(t));
        }
        current.clear();
        in_step = true;
      }
      if (in_step) {
        current.append(line);
        current += '\n';
      }
      if (eol == draft.size()) break;
      pos = eol + 1;
    }
    if (in_step) {
      auto t = trim(current);
      if (!t.empty()) chain.steps.push_back(std::move(t));
    }
    if (!chain.steps.empty()) return chain;
  }
  chain.steps = split_paragraphs(draft);
  if (chain.steps.empty()) throw Error(ErrorCode::NoThoughts, "draft contains no thought steps");
  return chain;
}

std::string format_context(const RetrievedSet& retrieved, std::size_t budget_tokens) {
  static constexpr std::string_view kRule = "\n---\n";
  std::vector<std::string_view> bodies;
  std::size_t used = 0;
  for (const auto& r : retrieved) {
    const std::size_t t = count_tokens(r.body) + (bodies.empty() ? 0 : count_tokens(kRule));
    if (used + t > budget_tokens) break;
    bodies.push_back(r.body);
    used += t;
  }
  if (bodies.empty()) {
    return retrieved.empty() ? std::string() : truncate_back(retrieved.front().body, budget_tokens);
  }
  std::string out;
  for (const auto& b : bodies) {
    if (!out.empty()) out += kRule;
    out += b;
  }
  return out;
}

// Runs --------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

// Per-run bookkeeping shared by every method.
class Recorder {
 public:
  Recorder(const TaskPrompt& task, const PipelineConfig& config) : start_(Clock::now()) {
    trace_.task = task;
    trace_.config = config;
  }

  std::vector<std::string> complete(ChatBackend& chat, std::string stage, std::size_t sample,
                                    std::optional<std::size_t> round, Conversation conv,
                                    const DecodingParams& params) {
    auto outputs = rat::complete(chat, conv, params);
    ++trace_.counts.completions;
    trace_.completions.push_back({std::move(stage), sample, round, std::move(conv), outputs});
    return outputs;
  }

  std::string complete_one(ChatBackend& chat, std::string stage, std::size_t sample,
                           std::optional<std::size_t> round, Conversation conv, DecodingParams params) {
    params.sample_count = 1;
    return complete(chat, std::move(stage), sample, round, std::move(conv), params).front();
  }

  Query query(const Engine& engine, std::string_view task, const std::vector<std::string>& prefix,
              std::string_view step, const QueryOptions& options, std::size_t sample, std::size_t round) {
    EmbedBackend* embedder = engine.retriever->needs_vector() ? engine.embedder : nullptr;
    if (engine.retriever->needs_vector() && embedder == nullptr) {
      throw Error(ErrorCode::InvalidArgument, "retriever needs an embedding backend");
    }
    Query q = to_query(task, prefix, step, options, embedder, &engine.chat);
    if (q.conversation) {
      ++trace_.counts.completions;
      trace_.completions.push_back({"query", sample, round, *q.conversation, {q.text}});
    }
    if (q.vector) ++trace_.counts.embeddings;
    return q;
  }

  RetrievedSet retrieve(const Engine& engine, const Query& q, std::size_t k) {
    auto set = engine.retriever->retrieve(q, k);
    ++trace_.counts.retrievals;
    return set;
  }

  RunTrace& trace() { return trace_; }

  RunTrace finish() {
    trace_.wall_time_ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    return std::move(trace_);
  }

  template <typename Fn>
  RunTrace guarded(Fn&& body) {
    try {
      body();
    } catch (const PipelineError&) {
      throw;
    } catch (const Error& e) {
      const std::string where = round_ ? "round " + std::to_string(*round_) + ": " : std::string();
      throw PipelineError(e.code(), where + e.what(), finish(), round_);
    }
    return finish();
  }

  void enter_round(std::optional<std::size_t> round) { round_ = round; }

 private:
  RunTrace trace_;
  Clock::time_point start_;
  std::optional<std::size_t> round_;
};

std::string_view draft_template(TaskKind kind) {
  switch (kind) {
    case TaskKind::Code: return templates::kDraftCode;
    case TaskKind::Math: return templates::kDraftMath;
    case TaskKind::Plan: return templates::kDraftPlan;
    case TaskKind::Writing: return templates::kDraft;
  }
  return templates::kDraft;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

void require_retriever(const Engine& engine) {
  if (engine.retriever == nullptr) throw Error(ErrorCode::EmptyIndex, "method needs a retrieval source");
  if (auto* ir = dynamic_cast<IndexRetriever*>(engine.retriever); ir != nullptr && ir->index().empty()) {
    throw Error(ErrorCode::EmptyIndex, "retrieval index is empty");
  }
}

// One RAG generation: query from the instruction alone, retrieve `depth`, answer.
void rag_body(Recorder& rec, const TaskPrompt& task, const Engine& engine, const PipelineConfig& config,
              std::size_t depth) {
  rec.enter_round(1);
  QueryOptions opts;
  opts.mode = QueryMode::EmbedDraft;
  opts.max_query_tokens = config.max_query_tokens;
  Query q;
  q.mode = QueryMode::EmbedDraft;
  q.text = truncate_front(task.instruction, config.max_query_tokens);
  if (engine.retriever->needs_vector()) {
    if (engine.embedder == nullptr) throw Error(ErrorCode::InvalidArgument, "retriever needs an embedding backend");
    q.vector = embed(*engine.embedder, q.text);
    ++rec.trace().counts.embeddings;
  }
  auto retrieved = rec.retrieve(engine, q, depth);
  Conversation conv = render_prompt(
      templates::kRag, {{"content", format_context(retrieved, config.context_budget_tokens)},
                        {"question", task.instruction}});
  auto outputs = rec.complete(engine.chat, "rag", 0, 1, conv, config.decoding);
  rec.trace().rounds.push_back({0, 1, q.text, q.mode, std::move(retrieved), conv, outputs.front()});
  rec.trace().answers = std::move(outputs);
}

void rat_sample(Recorder& rec, const TaskPrompt& task, const Engine& engine, const PipelineConfig& config,
                std::size_t sample) {
  const std::string joiner(step_joiner(task.kind));
  QueryOptions opts;
  opts.mode = effective_query_mode(config, task.kind);
  opts.joiner = joiner;
  opts.max_query_tokens = config.max_query_tokens;
  opts.decoding = config.decoding;

  rec.enter_round(std::nullopt);
  const std::string draft = rec.complete_one(engine.chat, "draft", sample, std::nullopt,
                                             render_prompt(draft_template(task.kind), {{"question", task.instruction}}),
                                             config.decoding);
  const ThoughtChain chain = split_thoughts(draft, task.kind);
  rec.trace().initial_thoughts.push_back(chain);

  auto revise = [&](std::size_t round, const std::vector<std::string>& prefix, const std::string& step,
                    const std::string& draft_text) {
    rec.enter_round(round);
    Query q = rec.query(engine, task.instruction, prefix, step, opts, sample, round);
    auto retrieved = rec.retrieve(engine, q, config.k);
    Conversation conv = render_prompt(
        templates::kRevise, {{"content", format_context(retrieved, config.context_budget_tokens)},
                             {"question", task.instruction},
                             {"answer", draft_text}});
    std::string revision = rec.complete_one(engine.chat, "revise", sample, round, conv, config.decoding);
    rec.trace().rounds.push_back({sample, round, q.text, q.mode, std::move(retrieved), std::move(conv), revision});
    return revision;
  };

  const bool causal = config.rat_mode == RatMode::Causal && config.query_strategy == QueryStrategy::Stepwise;
  std::string final_draft;
  if (causal) {
    std::vector<std::string> prefix;  // revised steps T*_1..T*_{i-1}
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const std::string& step = chain.steps[i];
      std::string current = join(prefix, joiner);
      if (!current.empty()) current += joiner;
      current += step;
      final_draft = revise(i + 1, prefix, step, current);
      // The next step is appended only while one remains.
      if (i + 1 < chain.size()) prefix = split_thoughts(final_draft, task.kind).steps;
    }
  } else {
    std::vector<std::string> head(chain.steps.begin(), chain.steps.end() - 1);
    final_draft = revise(1, head, chain.steps.back(), join(chain.steps, joiner));
  }

  std::string answer = trim(final_draft);
  if (effective_synthesize(config, task.kind)) {
    rec.enter_round(std::nullopt);
    answer = rec.complete_one(engine.chat, "synthesize", sample, std::nullopt,
                              render_prompt(templates::kSynthesize, {{"question", task.instruction}, {"answer", answer}}),
                              config.decoding);
  }
  rec.trace().answers.push_back(std::move(answer));
}

void check_task(const TaskPrompt& task) {
  if (task.instruction.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "task '" + task.id + "' has an empty instruction");
  }
}

}  // namespace

RunTrace run_direct(const TaskPrompt& task, ChatBackend& chat, const PipelineConfig& config) {
  check_task(task);
  Recorder rec(task, config);
  return rec.guarded([&] {
    rec.trace().answers = rec.complete(chat, "direct", 0, std::nullopt,
                                       render_prompt(templates::kDirect, {{"question", task.instruction}}),
                                       config.decoding);
  });
}

RunTrace run_cot(const TaskPrompt& task, ChatBackend& chat, const PipelineConfig& config) {
  check_task(task);
  Recorder rec(task, config);
  return rec.guarded([&] {
    rec.trace().answers = rec.complete(chat, "draft", 0, std::nullopt,
                                       render_prompt(draft_template(task.kind), {{"question", task.instruction}}),
                                       config.decoding);
  });
}

RunTrace run_rag(const TaskPrompt& task, const Engine& engine, const PipelineConfig& config) {
  check_task(task);
  require_retriever(engine);
  Recorder rec(task, config);
  return rec.guarded([&] { rag_body(rec, task, engine, config, config.n_shots); });
}

RunTrace run_rat(const TaskPrompt& task, const Engine& engine, const PipelineConfig& config) {
  check_task(task);
  require_retriever(engine);
  Recorder rec(task, config);
  return rec.guarded([&] {
    if (config.query_strategy == QueryStrategy::QuestionOnly) {
      rag_body(rec, task, engine, config, config.k);
      return;
    }
    for (int s = 0; s < config.decoding.sample_count; ++s) {
      rat_sample(rec, task, engine, config, static_cast<std::size_t>(s));
    }
  });
}

RunTrace run_pipeline(const TaskPrompt& task, const Engine& engine, const PipelineConfig& config) {
  switch (config.method) {
    case Method::Direct: return run_direct(task, engine.chat, config);
    case Method::Cot: return run_cot(task, engine.chat, config);
    case Method::Rag: return run_rag(task, engine, config);
    case Method::Rat: return run_rat(task, engine, config);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown method");
}

// Batch -------------------------------------------------------------------------

std::vector<TaskRequest> load_task_requests(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open task file " + path.string());
  std::vector<TaskRequest> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TaskRequest r;
      r.task.id = j.at("task_id").get<std::string>();
      r.task.instruction = j.at("instruction").get<std::string>();
      r.task.kind = task_kind_from_string(j.value("kind", "writing"));
      if (j.contains("method")) r.method = method_from_string(j.at("method").get<std::string>());
      if (j.contains("config")) r.config = j.at("config");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<BatchOutcome> run_batch(const std::vector<TaskRequest>& requests, const Engine& engine,
                                    const std::function<PipelineConfig(const TaskRequest&)>& configure,
                                    std::size_t workers) {
  std::vector<BatchOutcome> out(requests.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      const auto& req = requests[i];
      out[i].task_id = req.task.id;
      try {
        out[i].trace = run_pipeline(req.task, engine, configure(req));
      } catch (const PipelineError& e) {
        out[i].trace = e.partial_trace();
        out[i].error = e.what();
        out[i].error_round = e.round();
      } catch (const Error& e) {
        out[i].error = e.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, requests.size()));
  if (n == 1) {
    work();
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace rat
