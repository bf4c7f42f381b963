#include "rat/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rat/arena.hpp"
#include "rat/corpus.hpp"
#include "rat/eval.hpp"
#include "rat/flat_toml.hpp"
#include "rat/llm.hpp"
#include "rat/pipeline.hpp"
#include "rat/prompts.hpp"
#include "rat/rating.hpp"
#include "rat/retrieval.hpp"

namespace rat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Thrown for argument combinations CLI11 cannot express; exits with kExitUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Task ids become file names; anything outside [A-Za-z0-9._-] maps to '_'.
std::string file_stem(std::string_view id) {
  std::string out;
  for (const char ch : id) {
    const auto u = static_cast<unsigned char>(ch);
    out += (std::isalnum(u) || ch == '.' || ch == '_' || ch == '-') ? ch : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::vector<Chunk> load_or_chunk(const std::optional<std::string>& corpus, const std::optional<std::string>& chunks,
                                 std::size_t max_tokens) {
  if (chunks) return read_chunks(*chunks);
  std::vector<Chunk> out;
  for (const auto& doc : load_documents(*corpus)) {
    auto part = chunk_document(doc, max_tokens);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

json backend_summary(const BackendDescriptor& d) {
  json j{{"kind", to_string(d.kind)}};
  if (d.kind == BackendKind::Scripted) {
    j["script_entries"] = d.script.size();
    j["dimension"] = d.dimension;
  } else {
    j["endpoint"] = d.endpoint;
    j["model_id"] = d.model_id;
    if (d.kind == BackendKind::HttpEmbed) j["dimension"] = d.dimension;
  }
  return j;
}

// Verbs ------------------------------------------------------------------------

struct IndexBuildArgs {
  std::optional<std::string> corpus;
  std::optional<std::string> chunks;
  std::string backend;
  std::string out;
  std::size_t max_tokens = kDefaultChunkTokens;
};

int index_build(const IndexBuildArgs& a, std::ostream& out) {
  const auto chunks = load_or_chunk(a.corpus, a.chunks, a.max_tokens);
  const auto embedder = make_embed_backend(load_backend_config(a.backend));
  const VectorIndex index = build_index(chunks, *embedder);
  save_index(a.out, index);
  out << "indexed " << index.size() << " chunks (dimension " << index.dimension() << ") -> " << a.out << '\n';
  return kExitOk;
}

struct RunArgs {
  std::string tasks;
  std::string backend;
  std::optional<std::string> embed_backend;
  std::optional<std::string> index;
  std::optional<std::string> config;
  std::string out_dir = "rat-out";
  std::size_t workers = 1;
  // Pipeline overrides, applied last.
  std::optional<std::string> method;
  std::optional<std::size_t> k;
  std::optional<std::size_t> n_shots;
  std::optional<std::string> rat_mode;
  std::optional<std::string> query_strategy;
  std::optional<std::string> query_mode;
  std::optional<std::string> synthesize;
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  std::optional<int> samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> context_budget;
};

json flag_overrides(const RunArgs& a) {
  json j = json::object();
  if (a.method) j["method"] = *a.method;
  if (a.k) j["k"] = *a.k;
  if (a.n_shots) j["n_shots"] = *a.n_shots;
  if (a.rat_mode) j["rat_mode"] = *a.rat_mode;
  if (a.query_strategy) j["query_strategy"] = *a.query_strategy;
  if (a.query_mode) j["query_mode"] = *a.query_mode;
  if (a.synthesize) j["synthesize"] = *a.synthesize == "on";
  if (a.temperature) j["temperature"] = *a.temperature;
  if (a.max_tokens) j["max_tokens"] = *a.max_tokens;
  if (a.samples) j["sample_count"] = *a.samples;
  if (a.seed) j["seed"] = *a.seed;
  if (a.context_budget) j["context_budget_tokens"] = *a.context_budget;
  return j;
}

int run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  const json flags = flag_overrides(a);
  // Fail on bad flag values before touching any file.
  PipelineConfig base = apply_config(PipelineConfig{}, flags);
  json file_config = json::object();
  if (a.config) {
    file_config = load_config_file(*a.config);
    base = apply_config(apply_config(PipelineConfig{}, file_config), flags);
  }
  const auto requests = load_task_requests(a.tasks);
  auto configure = [&](const TaskRequest& r) {
    PipelineConfig c = apply_config(PipelineConfig{}, file_config);
    if (r.method) c.method = *r.method;
    c = apply_config(c, r.config);
    return apply_config(c, flags);
  };
  std::vector<PipelineConfig> effective;
  bool needs_index = false;
  for (const auto& r : requests) {
    effective.push_back(configure(r));
    needs_index = needs_index || effective.back().method == Method::Rag || effective.back().method == Method::Rat;
  }
  if (needs_index && !a.index) throw UsageError("--index is required for rag and rat runs");

  const BackendDescriptor chat_desc = load_backend_config(a.backend);
  const BackendDescriptor embed_desc = a.embed_backend ? load_backend_config(*a.embed_backend) : chat_desc;
  const auto chat = make_chat_backend(chat_desc);
  std::shared_ptr<EmbedBackend> embedder;
  std::optional<VectorIndex> index;
  std::optional<IndexRetriever> retriever;
  std::string index_hash;
  if (needs_index) {
    embedder = make_embed_backend(embed_desc);
    index_hash = hex64(fnv1a64(read_file(*a.index)));
    index.emplace(load_index(*a.index));
    if (index->dimension() != embedder->dimension()) {
      throw Error(ErrorCode::DimensionMismatch, "index dimension " + std::to_string(index->dimension()) +
                                                    " differs from the embedding backend's " +
                                                    std::to_string(embedder->dimension()));
    }
    retriever.emplace(*index);
  }
  Engine engine{*chat, embedder.get(), retriever ? &*retriever : nullptr};

  const auto outcomes = run_batch(requests, engine, configure, a.workers);

  fs::create_directories(a.out_dir);
  json tasks = json::array();
  int failures = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    const std::string name = file_stem(o.task_id) + ".trace.json";
    json trace = o.trace ? to_json(*o.trace) : json{{"task", {{"task_id", o.task_id}}}, {"config", to_json(effective[i])}};
    if (!o.error.empty()) {
      trace["error"] = o.error;
      trace["error_round"] = o.error_round ? json(*o.error_round) : json(nullptr);
      ++failures;
      err << "task " << o.task_id << " failed: " << o.error << '\n';
    }
    write_file(fs::path(a.out_dir) / name, trace.dump(2) + "\n");
    tasks.push_back({{"task_id", o.task_id},
                     {"trace", name},
                     {"status", o.error.empty() ? "ok" : "error"},
                     {"config_hash", hex64(fnv1a64(to_json(effective[i]).dump()))}});
  }

  const json base_json = to_json(base);
  json manifest{{"created_at", utc_timestamp()},
                {"tasks_file", a.tasks},
                {"config", base_json},
                {"config_hash", hex64(fnv1a64(base_json.dump()))},
                {"config_file", a.config ? json(*a.config) : json(nullptr)},
                {"flag_overrides", flags},
                {"index", a.index && needs_index ? json(*a.index) : json(nullptr)},
                {"corpus_hash", needs_index ? json(index_hash) : json(nullptr)},
                {"template_set", std::string(kDefaultTemplateSet)},
                {"template_set_hash", template_set_hash()},
                {"chat_backend", backend_summary(chat_desc)},
                {"embed_backend", needs_index ? backend_summary(embed_desc) : json(nullptr)},
                {"workers", a.workers},
                {"tasks", tasks}};
  const fs::path manifest_path = fs::path(a.out_dir) / "manifest.json";
  write_file(manifest_path, manifest.dump(2) + "\n");
  out << manifest_path.string() << '\n';
  return failures == 0 ? kExitOk : kExitFailure;
}

struct EvalArgs {
  std::string traces;
  std::string gold;
  std::string out;
  std::string checker = "exact";
  std::optional<std::string> recipes;
};

int eval(const EvalArgs& a, std::ostream& out) {
  std::unique_ptr<SolutionChecker> checker;
  if (a.checker == "exact") {
    checker = std::make_unique<ExactMatchChecker>();
  } else if (a.checker == "numeric") {
    checker = std::make_unique<NumericMatchChecker>();
  } else {
    checker = std::make_unique<PlanChecker>(std::make_shared<const RecipeTable>(load_recipes(fs::path(*a.recipes))));
  }

  std::map<std::string, json> gold;
  {
    std::istringstream in(read_file(a.gold));
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j = json::parse(line);
      auto id = j.at("task_id").get<std::string>();
      gold[std::move(id)] = std::move(j);
    }
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.traces)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.ends_with(".trace.json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<EvalRecord> records;
  for (const auto& f : files) {
    const json t = json::parse(read_file(f));
    EvalRecord r;
    r.task_id = t.at("task").at("task_id").get<std::string>();
    r.method = t.at("config").at("method").get<std::string>();
    r.checker = checker->name();
    const auto g = gold.find(r.task_id);
    if (g == gold.end()) throw Error(ErrorCode::InvalidArgument, "no gold record for task '" + r.task_id + "'");
    const auto answers = t.value("answers", std::vector<std::string>{});
    for (const auto& ans : answers) r.attempts.push_back(checker->check(ans, g->second));
    if (r.attempts.empty()) {
      // A failed run counts as failed attempts.
      const int samples = t.at("config").value("sample_count", 1);
      r.attempts.assign(static_cast<std::size_t>(std::max(samples, 1)), false);
    }
    records.push_back(std::move(r));
  }
  write_eval_records(a.out, records);
  out << "wrote " << records.size() << " eval records -> " << a.out << '\n';
  return kExitOk;
}

struct ReportArgs {
  std::optional<std::string> records;
  std::optional<std::string> arena_log;
  std::string out_dir = "report";
  std::string baseline = "direct";
};

int report(const ReportArgs& a, std::ostream& out) {
  fs::create_directories(a.out_dir);
  if (a.records) {
    const Report r = render_report(summarize(read_eval_records(*a.records)), a.baseline);
    write_file(fs::path(a.out_dir) / "report.csv", r.csv);
    write_file(fs::path(a.out_dir) / "report.md", r.markdown);
    out << (fs::path(a.out_dir) / "report.csv").string() << '\n';
  }
  if (a.arena_log) {
    const auto board = leaderboard(match_records(read_event_log(*a.arena_log)));
    write_file(fs::path(a.out_dir) / "leaderboard.csv", leaderboard_csv(board));
    write_file(fs::path(a.out_dir) / "leaderboard.md", leaderboard_markdown(board));
    out << (fs::path(a.out_dir) / "leaderboard.csv").string() << '\n';
  }
  return kExitOk;
}

struct ServeArgs {
  std::string pool;
  std::string log;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;
};

int arena_serve(const ServeArgs& a, std::ostream& out) {
  ArenaOptions options;
  options.seed = a.seed;
  ArenaService service(load_task_pool(a.pool), a.log, options);
  ArenaServer server(service);
  out << "serving arena on http://" << a.host << ':' << a.port << '\n' << std::flush;
  server.run(a.host, a.port);
  return kExitOk;
}

struct DecontaminateArgs {
  std::optional<std::string> corpus;
  std::optional<std::string> chunks;
  std::string benchmarks;
  std::size_t ngram = kDefaultNgram;
  std::size_t max_tokens = kDefaultChunkTokens;
  std::string out;
  std::optional<std::string> report;
};

int decontaminate_verb(const DecontaminateArgs& a, std::ostream& out) {
  const auto chunks = load_or_chunk(a.corpus, a.chunks, a.max_tokens);
  const auto result = decontaminate(chunks, load_benchmarks(a.benchmarks), a.ngram);
  write_chunks(a.out, result.kept);
  if (a.report) write_removals(*a.report, result.removed);
  out << "kept " << result.kept.size() << " chunks, removed " << result.removed.size() << '\n';
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-augmented thought pipelines: indexing, runs, evaluation and a rating arena", "ratctl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every verb");

  const std::vector<std::string> methods{"direct", "cot", "rag", "rat"};

  IndexBuildArgs ib;
  auto* ib_cmd = app.add_subcommand("index-build", "Chunk a corpus, embed it and write a vector index");
  auto* ib_corpus = ib_cmd->add_option("--corpus", ib.corpus, "Directory of .md/.txt files or documents JSON-Lines");
  auto* ib_chunks = ib_cmd->add_option("--chunks", ib.chunks, "Pre-chunked JSON-Lines (skips chunking)");
  ib_corpus->excludes(ib_chunks);
  ib_cmd->add_option("--backend", ib.backend, "Embedding backend config file")->required();
  ib_cmd->add_option("--out", ib.out, "Index file to write")->required();
  ib_cmd->add_option("--max-tokens", ib.max_tokens, "Chunk size in tokens")->check(CLI::PositiveNumber);

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "Run a method over a task file and write one trace per task");
  run_cmd->add_option("--tasks", ra.tasks, "Tasks JSON-Lines")->required();
  run_cmd->add_option("--backend", ra.backend, "Chat backend config file")->required();
  run_cmd->add_option("--embed-backend", ra.embed_backend, "Embedding backend config (default: --backend)");
  run_cmd->add_option("--index", ra.index, "Vector index file (rag, rat)");
  run_cmd->add_option("--config", ra.config, "Pipeline config file (.json or flat TOML)");
  run_cmd->add_option("--out", ra.out_dir, "Output directory")->capture_default_str();
  run_cmd->add_option("--workers", ra.workers, "Concurrent tasks")->check(CLI::PositiveNumber)->capture_default_str();
  run_cmd->add_option("--method", ra.method, "direct | cot | rag | rat")->check(CLI::IsMember(methods));
  run_cmd->add_option("--k", ra.k, "Retrieved chunks per revision round")->check(CLI::PositiveNumber);
  run_cmd->add_option("--n-shots", ra.n_shots, "Retrieved chunks for rag")->check(CLI::PositiveNumber);
  run_cmd->add_option("--rat-mode", ra.rat_mode, "causal | non-causal")->check(CLI::IsMember({"causal", "non-causal"}));
  run_cmd->add_option("--query-strategy", ra.query_strategy, "stepwise | full-cot | question-only")
      ->check(CLI::IsMember({"stepwise", "full-cot", "question-only"}));
  run_cmd->add_option("--query-mode", ra.query_mode, "embed-draft | llm-generated")
      ->check(CLI::IsMember({"embed-draft", "llm-generated"}));
  run_cmd->add_option("--synthesize", ra.synthesize, "on | off: final synthesis completion")
      ->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_option("--temperature", ra.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--max-tokens", ra.max_tokens, "Completion token limit")->check(CLI::PositiveNumber);
  run_cmd->add_option("--samples", ra.samples, "Samples per task")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", ra.seed, "Sampling seed passed to the backend");
  run_cmd->add_option("--context-budget", ra.context_budget, "Token budget for retrieved context")
      ->check(CLI::PositiveNumber);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score run traces against gold answers");
  eval_cmd->add_option("--traces", ea.traces, "Directory of *.trace.json files")->required();
  eval_cmd->add_option("--gold", ea.gold, "Gold JSON-Lines keyed by task_id")->required();
  eval_cmd->add_option("--out", ea.out, "Eval records JSON-Lines to write")->required();
  eval_cmd->add_option("--checker", ea.checker, "exact | numeric | plan")
      ->check(CLI::IsMember({"exact", "numeric", "plan"}))
      ->capture_default_str();
  eval_cmd->add_option("--recipes", ea.recipes, "Recipe table for the plan checker");

  ReportArgs rp;
  auto* report_cmd = app.add_subcommand("report", "Write metric tables and arena leaderboards");
  report_cmd->add_option("--records", rp.records, "Eval records JSON-Lines");
  report_cmd->add_option("--arena-log", rp.arena_log, "Arena event log to rate");
  report_cmd->add_option("--out-dir", rp.out_dir, "Output directory")->capture_default_str();
  report_cmd->add_option("--baseline", rp.baseline, "Method for relative-improvement rows")->capture_default_str();

  ServeArgs sa;
  auto* serve_cmd = app.add_subcommand("arena-serve", "Serve the pairwise rating arena over HTTP");
  serve_cmd->add_option("--pool", sa.pool, "Task pool JSON-Lines with per-method responses")->required();
  serve_cmd->add_option("--log", sa.log, "Append-only event log")->required();
  serve_cmd->add_option("--host", sa.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", sa.port, "Port")->check(CLI::Range(1, 65535))->capture_default_str();
  serve_cmd->add_option("--seed", sa.seed, "Match scheduling seed")->capture_default_str();

  DecontaminateArgs da;
  auto* dec_cmd = app.add_subcommand("decontaminate", "Drop corpus chunks that share n-grams with benchmarks");
  auto* dec_corpus = dec_cmd->add_option("--corpus", da.corpus, "Directory of .md/.txt files or documents JSON-Lines");
  auto* dec_chunks = dec_cmd->add_option("--chunks", da.chunks, "Pre-chunked JSON-Lines");
  dec_corpus->excludes(dec_chunks);
  dec_cmd->add_option("--benchmarks", da.benchmarks, "Benchmark JSON-Lines")->required();
  dec_cmd->add_option("--ngram", da.ngram, "n-gram length in tokens")->check(CLI::PositiveNumber)->capture_default_str();
  dec_cmd->add_option("--max-tokens", da.max_tokens, "Chunk size in tokens")->check(CLI::PositiveNumber);
  dec_cmd->add_option("--out", da.out, "Kept chunks JSON-Lines")->required();
  dec_cmd->add_option("--report", da.report, "Removals JSON-Lines");

  std::vector<std::string> argv_storage{"ratctl"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*ib_cmd) {
      if (!ib.corpus && !ib.chunks) throw UsageError("index-build needs --corpus or --chunks");
      return index_build(ib, out);
    }
    if (*run_cmd) return run(ra, out, err);
    if (*eval_cmd) {
      if (ea.checker == "plan" && !ea.recipes) throw UsageError("--checker plan needs --recipes");
      return eval(ea, out);
    }
    if (*report_cmd) {
      if (!rp.records && !rp.arena_log) throw UsageError("report needs --records or --arena-log");
      return report(rp, out);
    }
    if (*serve_cmd) return arena_serve(sa, out);
    if (*dec_cmd) {
      if (!da.corpus && !da.chunks) throw UsageError("decontaminate needs --corpus or --chunks");
      return decontaminate_verb(da, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return kExitFailure;
  } catch (const json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << "usage error: no verb given\n";
  return kExitUsage;
}

}  // namespace rat
