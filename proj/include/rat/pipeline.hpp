#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rat/llm.hpp"
#include "rat/prompts.hpp"
#include "rat/retrieval.hpp"

namespace rat {

enum class TaskKind { Code, Math, Plan, Writing };
enum class Method { Direct, Cot, Rag, Rat };
enum class RatMode { Causal, NonCausal };
// Table-3 style ablation of what the retrieval query is built from.
enum class QueryStrategy { QuestionOnly, FullCot, Stepwise };

const char* to_string(TaskKind kind);
const char* to_string(Method method);
const char* to_string(RatMode mode);
const char* to_string(QueryStrategy strategy);
TaskKind task_kind_from_string(std::string_view name);
Method method_from_string(std::string_view name);
RatMode rat_mode_from_string(std::string_view name);
QueryStrategy query_strategy_from_string(std::string_view name);

struct TaskPrompt {
  std::string id;
  std::string instruction;
  TaskKind kind = TaskKind::Writing;
};

struct ThoughtChain {
  std::vector<std::string> steps;

  std::size_t size() const { return steps.size(); }
};

struct PipelineConfig {
  Method method = Method::Rat;
  std::size_t n_shots = 1;  // RAG-n
  RatMode rat_mode = RatMode::Causal;
  QueryStrategy query_strategy = QueryStrategy::Stepwise;
  std::size_t k = 5;  // retrieval depth per RAT round
  DecodingParams decoding;
  std::string template_set{kDefaultTemplateSet};
  std::optional<QueryMode> query_mode;  // default depends on task kind
  std::optional<bool> synthesize;       // default: on for code only
  std::size_t context_budget_tokens = 6000;
  std::size_t max_query_tokens = kDefaultMaxQueryTokens;
};

nlohmann::json to_json(const PipelineConfig& config);
/// Applies the keys present in `j` on top of `base`; unknown keys are rejected.
PipelineConfig apply_config(const PipelineConfig& base, const nlohmann::json& j);

QueryMode effective_query_mode(const PipelineConfig& config, TaskKind kind);
bool effective_synthesize(const PipelineConfig& config, TaskKind kind);

/// Separator used when re-joining thought steps of a given task kind.
std::string_view step_joiner(TaskKind kind);

struct CallCounts {
  std::size_t completions = 0;
  std::size_t embeddings = 0;
  std::size_t retrievals = 0;

  friend bool operator==(const CallCounts&, const CallCounts&) = default;
};

struct CompletionRecord {
  std::string stage;  // direct | draft | query | revise | rag | synthesize
  std::size_t sample = 0;
  std::optional<std::size_t> round;  // 1-based retrieval round, when inside one
  Conversation conversation;
  std::vector<std::string> outputs;
};

struct RoundRecord {
  std::size_t sample = 0;
  std::size_t index = 0;  // 1-based
  std::string query_text;
  QueryMode query_mode = QueryMode::EmbedDraft;
  RetrievedSet retrieved;
  Conversation conversation;  // the generation/revision request of this round
  std::string output;
};

struct RunTrace {
  TaskPrompt task;
  PipelineConfig config;
  std::vector<ThoughtChain> initial_thoughts;  // one per sample (RAT only)
  std::vector<CompletionRecord> completions;
  std::vector<RoundRecord> rounds;
  std::vector<std::string> answers;  // one per sample
  CallCounts counts;
  double wall_time_ms = 0.0;

  const std::string& answer() const;
};

nlohmann::json to_json(const RunTrace& trace, bool include_wall_time = true);

/// Failure inside a run; keeps the trace recorded up to the failure.
class PipelineError : public Error {
 public:
  PipelineError(ErrorCode code, const std::string& what, RunTrace partial, std::optional<std::size_t> round)
      : Error(code, what), partial_(std::move(partial)), round_(round) {}

  const RunTrace& partial_trace() const noexcept { return partial_; }
  std::optional<std::size_t> round() const noexcept { return round_; }

 private:
  RunTrace partial_;
  std::optional<std::size_t> round_;
};

/// Splits a draft into thought steps: plan drafts at line-initial "STEP"
/// markers, everything else at blank lines (or a literal "/n/n"). A plan draft
/// without any STEP marker falls back to paragraph splitting.
ThoughtChain split_thoughts(std::string_view draft, TaskKind kind);

/// Concatenates retrieved bodies in rank order, separated by a "---" line,
/// dropping the lowest-ranked bodies until the budget fits.
std::string format_context(const RetrievedSet& retrieved, std::size_t budget_tokens);

/// What a run needs besides the task and config. `embedder` may be null when
/// the retriever does not need vectors; `retriever` may be null for DIRECT/COT.
struct Engine {
  ChatBackend& chat;
  EmbedBackend* embedder = nullptr;
  Retriever* retriever = nullptr;
};

RunTrace run_direct(const TaskPrompt& task, ChatBackend& chat, const PipelineConfig& config);
RunTrace run_cot(const TaskPrompt& task, ChatBackend& chat, const PipelineConfig& config);
RunTrace run_rag(const TaskPrompt& task, const Engine& engine, const PipelineConfig& config);
RunTrace run_rat(const TaskPrompt& task, const Engine& engine, const PipelineConfig& config);

/// Dispatches on config.method.
RunTrace run_pipeline(const TaskPrompt& task, const Engine& engine, const PipelineConfig& config);

// Batch execution ---------------------------------------------------------------

struct TaskRequest {
  TaskPrompt task;
  std::optional<Method> method;
  nlohmann::json config = nlohmann::json::object();  // per-task overrides
};

/// JSON-Lines of {"task_id","instruction","kind","method"?,"config"?}.
std::vector<TaskRequest> load_task_requests(const std::filesystem::path& path);

struct BatchOutcome {
  std::string task_id;
  std::optional<RunTrace> trace;
  std::string error;  // empty on success
  std::optional<std::size_t> error_round;
};

/// Runs independent tasks on a bounded pool of `workers` threads. `configure`
/// maps each request to its effective config. Results keep the input order.
std::vector<BatchOutcome> run_batch(const std::vector<TaskRequest>& requests, const Engine& engine,
                                    const std::function<PipelineConfig(const TaskRequest&)>& configure,
                                    std::size_t workers);

}  // namespace rat
