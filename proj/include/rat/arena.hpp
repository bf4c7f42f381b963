#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rat/rating.hpp"

namespace rat {

/// Rater guidance shown next to every match.
extern const std::string_view kArenaPrinciples;

struct PoolTask {
  std::string task_id;
  std::string instruction;
  std::map<std::string, std::string> responses;  // method -> response text
};

/// JSON-Lines of {"task_id","instruction","responses":{method: text}}. Tasks
/// with fewer than two responses are kept but never scheduled.
std::vector<PoolTask> load_task_pool(const std::filesystem::path& path);

struct ArenaEvent {
  std::uint64_t seq = 0;  // 1-based, dense
  std::string ts;         // UTC, ISO 8601
  MatchRecord record;
};

nlohmann::json to_json(const ArenaEvent& e);
ArenaEvent arena_event_from_json(const nlohmann::json& j);

/// Append-only JSON-Lines event file; every append is flushed to disk before
/// it returns. A torn final line left by a crash is dropped on open.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  const std::vector<ArenaEvent>& events() const { return events_; }
  void append(const ArenaEvent& event);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<ArenaEvent> events_;
  int fd_ = -1;
};

/// Replays an event file without opening it for writing.
std::vector<ArenaEvent> read_event_log(const std::filesystem::path& path);
std::vector<MatchRecord> match_records(const std::vector<ArenaEvent>& events);

/// What a client sees: no method identities.
struct MatchView {
  std::string match_id;
  std::string instruction;
  std::string response_a;
  std::string response_b;
};

nlohmann::json to_json(const MatchView& view);

enum class VoteChoice { A, B, Tie, BothBad, Skip };

VoteChoice vote_choice_from_string(std::string_view name);

struct ArenaOptions {
  std::uint64_t seed = 0;
  RatingParams rating;
  std::function<std::string()> clock;  // defaults to the system clock
};

class ArenaService {
 public:
  ArenaService(std::vector<PoolTask> pool, const std::filesystem::path& log_path, ArenaOptions options = {});

  /// Uniform task, uniform unordered method pair, random sides. EmptyPool
  /// when no task has two responses.
  MatchView next_match();

  /// SKIP closes the match without an event; any other vote appends one.
  /// UnknownMatch or DuplicateVote leave the log unchanged.
  std::optional<ArenaEvent> record_vote(std::string_view match_id, VoteChoice vote);

  std::map<std::string, Standing> standings() const;
  std::string leaderboard_csv() const;
  std::vector<ArenaEvent> events() const;
  std::size_t open_matches() const;

 private:
  struct OpenMatch {
    std::string task_id;
    std::string method_a;
    std::string method_b;
  };

  std::vector<PoolTask> pool_;
  std::vector<std::size_t> schedulable_;  // pool indices with >= 2 responses
  std::vector<std::string> roster_;
  ArenaOptions options_;
  std::mt19937_64 rng_;
  std::string session_;
  std::uint64_t counter_ = 0;

  mutable std::shared_mutex mutex_;
  EventLog log_;
  std::map<std::string, OpenMatch, std::less<>> open_;
  std::set<std::string, std::less<>> closed_;
};

// HTTP API -----------------------------------------------------------------------

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON
};

/// Transport-free request handling for GET /api/match, POST /api/vote,
/// GET /api/leaderboard and GET /api/health.
ApiResponse handle_api(ArenaService& service, std::string_view method, std::string_view path,
                       std::string_view body);

/// Serves the API on a background thread.
class ArenaServer {
 public:
  explicit ArenaServer(ArenaService& service);
  ~ArenaServer();
  ArenaServer(const ArenaServer&) = delete;
  ArenaServer& operator=(const ArenaServer&) = delete;

  /// Binds (port 0 picks a free port) and starts serving; returns the port.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rat
