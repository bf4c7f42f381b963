// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "rat/llm.hpp"

#include "rat/arena.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <mutex>

#include <httplib.h>

#include "rat/error.hpp"

namespace rat {

using nlohmann::json;

const std::string_view kArenaPrinciples =
    "# Chatbot Arena : Benchmarking LLMs in the Wild\n"
    "##Rules\n"
    "- Refresh to obtain the question and its corresponding answers from two anonymous models.\n"
    "- Vote for the better answer. And then click \"New Round\" to get a new question.\n"
    "- If both answers are bad, vote for \"Both are bad\".\n"
    "- If you want to skip, click \"Skip\".\n"
    "\n"
    "## Principle\n"
    "You can evaluate the performance of the model from the following aspects:\n"
    "1. **Relevance**: Does it answer the question accurately?\n"
    "2. **Accuracy**: Is it accurate? For example, a crafting table is made by combining 4 wooden planks, not 4 "
    "logs; a diamond axe requires 3 diamonds and 2 sticks to craft, not 3 sticks and 2 diamonds.\n"
    "3. **Completeness**: Is it complete? For example, crafting a wooden pickaxe from logs requires first crafting "
    "wooden planks and then crafting sticks before finally being able to craft the pickaxe. The intermediate steps "
    "cannot be ignored.\n"
    "4. **Readability**: Is it coherent?\n"
    "5. **Executability**: Considering the characteristics of the game, is it executable?\n"
    "\n"
    "## Vote now!\n";

std::vector<PoolTask> load_task_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open task pool " + path.string());
  std::vector<PoolTask> pool;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PoolTask t;
      t.task_id = j.at("task_id").get<std::string>();
      t.instruction = j.at("instruction").get<std::string>();
      t.responses = j.at("responses").get<std::map<std::string, std::string>>();
      if (!ids.insert(t.task_id).second) throw Error(ErrorCode::DuplicateId, "duplicate task id '" + t.task_id + "'");
      pool.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pool;
}

// Events -------------------------------------------------------------------------

json to_json(const ArenaEvent& e) {
  return json{{"seq", e.seq},
              {"ts", e.ts},
              {"match_id", e.record.match_id},
              {"task_id", e.record.task_id},
              {"method_a", e.record.method_a},
              {"method_b", e.record.method_b},
              {"raw_vote", to_string(e.record.raw_vote)},
              {"outcome", to_string(e.record.outcome)}};
}

ArenaEvent arena_event_from_json(const json& j) {
  ArenaEvent e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.ts = j.at("ts").get<std::string>();
    e.record.match_id = j.at("match_id").get<std::string>();
    e.record.task_id = j.at("task_id").get<std::string>();
    e.record.method_a = j.at("method_a").get<std::string>();
    e.record.method_b = j.at("method_b").get<std::string>();
    e.record.raw_vote = raw_vote_from_string(j.at("raw_vote").get<std::string>());
    e.record.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::Io, std::string("arena event: ") + ex.what());
  }
  if (e.record.outcome != outcome_of(e.record.raw_vote)) {
    throw Error(ErrorCode::Io, "arena event " + std::to_string(e.seq) + ": outcome does not follow from the vote");
  }
  return e;
}

namespace {

// Parses the log text. A last line without a newline is a torn write and is
// reported through `torn_at` instead of failing.
std::vector<ArenaEvent> parse_log(const std::string& text, const std::string& name, std::size_t* torn_at) {
  std::vector<ArenaEvent> events;
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    const bool complete = eol != std::string::npos;
    const std::string line = text.substr(pos, complete ? eol - pos : std::string::npos);
    ++lineno;
    if (!complete) {
      if (torn_at != nullptr) *torn_at = pos;
      break;
    }
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      try {
        ArenaEvent e = arena_event_from_json(json::parse(line));
        if (e.seq != events.size() + 1) {
          throw Error(ErrorCode::Io, "sequence number " + std::to_string(e.seq) + " out of order");
        }
        events.push_back(std::move(e));
      } catch (const json::exception& ex) {
        throw Error(ErrorCode::Io, name + ":" + std::to_string(lineno) + ": " + ex.what());
      } catch (const Error& ex) {
        throw Error(ErrorCode::Io, name + ":" + std::to_string(lineno) + ": " + ex.what());
      }
    }
    pos = eol + 1;
  }
  return events;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[noreturn]] void throw_errno(const std::string& what) {
  throw Error(ErrorCode::Io, what + ": " + std::strerror(errno));
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];  // room for any int the compiler can imagine
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

}  // namespace

std::vector<ArenaEvent> read_event_log(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "no event log at " + path.string());
  std::size_t torn = std::string::npos;
  return parse_log(slurp(path), path.string(), &torn);
}

std::vector<MatchRecord> match_records(const std::vector<ArenaEvent>& events) {
  std::vector<MatchRecord> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.record);
  return out;
}

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  std::size_t torn = std::string::npos;
  events_ = parse_log(slurp(path_), path_.string(), &torn);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw_errno("cannot open event log " + path_.string());
  if (torn != std::string::npos) {
    if (::ftruncate(fd_, static_cast<off_t>(torn)) != 0) throw_errno("cannot drop torn event line");
  }
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(const ArenaEvent& event) {
  if (event.seq != events_.size() + 1) throw Error(ErrorCode::InvalidArgument, "event sequence must be dense");
  const std::string line = to_json(event).dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("cannot append to " + path_.string());
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw_errno("cannot sync " + path_.string());
  events_.push_back(event);
}

// Service ------------------------------------------------------------------------

json to_json(const MatchView& v) {
  return json{{"match_id", v.match_id},
              {"instruction", v.instruction},
              {"response_a", v.response_a},
              {"response_b", v.response_b},
              {"principles_text", kArenaPrinciples}};
}

VoteChoice vote_choice_from_string(std::string_view name) {
  if (name == "A") return VoteChoice::A;
  if (name == "B") return VoteChoice::B;
  if (name == "TIE") return VoteChoice::Tie;
  if (name == "BOTH_BAD") return VoteChoice::BothBad;
  if (name == "SKIP") return VoteChoice::Skip;
  throw Error(ErrorCode::InvalidArgument, "unknown vote '" + std::string(name) + "'");
}

ArenaService::ArenaService(std::vector<PoolTask> pool, const std::filesystem::path& log_path, ArenaOptions options)
    : pool_(std::move(pool)), options_(std::move(options)), rng_(options_.seed), log_(log_path) {
  std::set<std::string> methods;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    for (const auto& [m, _] : pool_[i].responses) methods.insert(m);
    if (pool_[i].responses.size() >= 2) schedulable_.push_back(i);
  }
  roster_.assign(methods.begin(), methods.end());
  if (!options_.clock) options_.clock = utc_now;
  validate(options_.rating);
  for (const auto& e : log_.events()) closed_.insert(e.record.match_id);
  // Ids of a session cannot collide with voted ids of earlier ones: every
  // earlier session that voted left the log longer.
  session_ = "m" + std::to_string(log_.events().size());
}

MatchView ArenaService::next_match() {
  std::unique_lock lock(mutex_);
  if (schedulable_.empty()) throw Error(ErrorCode::EmptyPool, "no task has two responses to compare");
  const auto& task = pool_[schedulable_[std::uniform_int_distribution<std::size_t>(0, schedulable_.size() - 1)(rng_)]];
  std::vector<const std::pair<const std::string, std::string>*> entries;
  for (const auto& kv : task.responses) entries.push_back(&kv);
  const std::size_t m = entries.size();
  // Unordered pair {i < j} by index into the m*(m-1)/2 combinations.
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, m * (m - 1) / 2 - 1)(rng_);
  std::size_t i = 0;
  while (pick >= m - 1 - i) {
    pick -= m - 1 - i;
    ++i;
  }
  const std::size_t j = i + 1 + pick;
  const auto* first = entries[i];
  const auto* second = entries[j];
  if (std::bernoulli_distribution(0.5)(rng_)) std::swap(first, second);

  std::string id;
  do {
    id = session_ + "-" + std::to_string(++counter_);
  } while (closed_.contains(id) || open_.contains(id));
  open_.emplace(id, OpenMatch{task.task_id, first->first, second->first});
  return MatchView{id, task.instruction, first->second, second->second};
}

std::optional<ArenaEvent> ArenaService::record_vote(std::string_view match_id, VoteChoice vote) {
  std::unique_lock lock(mutex_);
  const auto it = open_.find(match_id);
  if (it == open_.end()) {
    if (closed_.contains(match_id)) {
      throw Error(ErrorCode::DuplicateVote, "match '" + std::string(match_id) + "' is already closed");
    }
    throw Error(ErrorCode::UnknownMatch, "unknown match '" + std::string(match_id) + "'");
  }
  if (vote == VoteChoice::Skip) {
    closed_.insert(it->first);
    open_.erase(it);
    return std::nullopt;
  }
  RawVote raw = RawVote::Tie;
  switch (vote) {
    case VoteChoice::A: raw = RawVote::A; break;
    case VoteChoice::B: raw = RawVote::B; break;
    case VoteChoice::Tie: raw = RawVote::Tie; break;
    case VoteChoice::BothBad: raw = RawVote::BothBad; break;
    case VoteChoice::Skip: break;
  }
  ArenaEvent e;
  e.seq = log_.events().size() + 1;
  e.ts = options_.clock();
  e.record = MatchRecord{it->first, it->second.task_id, it->second.method_a, it->second.method_b, raw, outcome_of(raw)};
  log_.append(e);  // durable before the match closes
  closed_.insert(it->first);
  open_.erase(it);
  return e;
}

std::map<std::string, Standing> ArenaService::standings() const {
  std::shared_lock lock(mutex_);
  return leaderboard(match_records(log_.events()), options_.rating, roster_);
}

std::string ArenaService::leaderboard_csv() const { return rat::leaderboard_csv(standings()); }

std::vector<ArenaEvent> ArenaService::events() const {
  std::shared_lock lock(mutex_);
  return log_.events();
}

std::size_t ArenaService::open_matches() const {
  std::shared_lock lock(mutex_);
  return open_.size();
}

// HTTP ---------------------------------------------------------------------------

namespace {

ApiResponse error_response(int status, std::string_view code, std::string_view message) {
  return {status, json{{"error", code}, {"message", message}}.dump()};
}

}  // namespace

ApiResponse handle_api(ArenaService& service, std::string_view method, std::string_view path, std::string_view body) {
  try {
    if (path == "/api/health") {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return {200, json{{"status", "ok"}, {"events", service.events().size()}}.dump()};
    }
    if (path == "/api/match") {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return {200, to_json(service.next_match()).dump()};
    }
    if (path == "/api/leaderboard") {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      json rows = json::array();
      for (const auto& [name, s] : ranked(service.standings())) {
        const auto wr = s.win_rate();
        rows.push_back({{"method", name},
                        {"mu", s.rating.mu},
                        {"sigma", s.rating.sigma},
                        {"win_rate", wr ? json(*wr) : json(nullptr)},
                        {"matches", s.matches}});
      }
      return {200, rows.dump()};
    }
    if (path == "/api/vote") {
      if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
      json j;
      std::string match_id;
      std::string vote;
      try {
        j = json::parse(body);
        match_id = j.at("match_id").get<std::string>();
        vote = j.at("vote").get<std::string>();
      } catch (const json::exception& e) {
        return error_response(400, "bad_request", e.what());
      }
      const auto event = service.record_vote(match_id, vote_choice_from_string(vote));
      json reply{{"match_id", match_id}, {"recorded", event.has_value()}};
      if (event) reply["seq"] = event->seq;
      return {200, reply.dump()};
    }
    return error_response(404, "not_found", "no such endpoint");
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::UnknownMatch: return error_response(404, "unknown_match", e.what());
      case ErrorCode::DuplicateVote: return error_response(409, "duplicate_vote", e.what());
      case ErrorCode::InvalidArgument: return error_response(400, "bad_request", e.what());
      case ErrorCode::EmptyPool: return error_response(503, "empty_pool", e.what());
      default: return error_response(500, to_string(e.code()), e.what());
    }
  }
}

struct ArenaServer::Impl {
  ArenaService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ArenaService& s) : service(s) {
    auto bridge = [this](const httplib::Request& req, httplib::Response& res) {
      const ApiResponse r = handle_api(service, req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body, "application/json");
    };
    server.Get("/api/.*", bridge);
    server.Post("/api/.*", bridge);
  }
};

ArenaServer::ArenaServer(ArenaService& service) : impl_(std::make_unique<Impl>(service)) {}

ArenaServer::~ArenaServer() { stop(); }

int ArenaServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ArenaServer::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error(ErrorCode::Io, "cannot serve on " + host + ":" + std::to_string(port));
}

void ArenaServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace rat
