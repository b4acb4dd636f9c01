#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "vislearn/policy.hpp"
#include "vislearn/tutor.hpp"
#include "vislearn/world.hpp"

namespace vislearn {

/// Wire format version carried in every message as "v".
inline constexpr int kMessageVersion = 1;

/// Failure with the HTTP status the service maps it to.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceConfig {
  /// Session event logs live here; empty disables persistence.
  std::filesystem::path state_dir;
  /// Holds dialogue.q and threshold.q for "rl-pretrained" sessions.
  std::filesystem::path policy_dir;
  WorldConfig world;
  AgentConfig agent;
  CostRates costs;
  std::shared_ptr<const TemplateLexicon> lexicon;  // null: default English
};

inline constexpr std::string_view kRulePolicy = "rule-constant95";
inline constexpr std::string_view kRlPolicy = "rl-pretrained";

class Session;

/// Live tutoring sessions: a person plays the tutor through free text while
/// the learner runs the same episode logic as the simulator. Every accepted
/// operation is appended to <state_dir>/<id>.jsonl and replayed on startup.
///
/// All operations return the events they produced, each a message
///   {"v", "type", "session", "seq", "act", "utterance", "state", "cost"}
/// with seq increasing by one per session (see docs/live_protocol.md).
class SessionManager {
 public:
  explicit SessionManager(ServiceConfig config);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// Throws ServiceError 400 for an unknown policy or missing Q-tables.
  nlohmann::json create(std::string_view policy, std::uint64_t seed);
  /// Current readout. 404 for unknown ids.
  nlohmann::json state(const std::string& id) const;
  /// One tutor utterance; "" means the tutor stays silent. 409 once the
  /// current dialogue has finished, 410 after the session ended.
  std::vector<nlohmann::json> turn(const std::string& id, std::string_view utterance);
  /// Next object. 409 mid-dialogue; the last object ends the session.
  std::vector<nlohmann::json> advance(const std::string& id);
  /// Ends the session with a summary event.
  std::vector<nlohmann::json> end(const std::string& id);
  /// Events with seq > since. Waits up to `wait` when none are available yet.
  std::vector<nlohmann::json> events(const std::string& id, std::uint64_t since,
                                     std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const;
  bool ended(const std::string& id) const;
  std::vector<std::string> ids() const;

  /// Learner snapshots, for inspection and parity checks.
  GroundingMap grounding(const std::string& id) const;
  double total_cost(const std::string& id) const;
  int penalties(const std::string& id) const;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> build(const std::string& id, std::string_view policy, std::uint64_t seed,
                                 const std::filesystem::path& dialogue_q,
                                 const std::filesystem::path& threshold_q) const;
  void restore_all();

  ServiceConfig config_;
  mutable std::mutex mutex_;  // guards sessions_
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// HTTP front end:
///   POST /api/v1/sessions                 {"policy", "seed"}
///   GET  /api/v1/sessions/{id}
///   POST /api/v1/sessions/{id}/turns      {"utterance"}
///   GET  /api/v1/sessions/{id}/events     ?since=N&follow=0|1 (Server-Sent Events)
///   POST /api/v1/sessions/{id}/advance
///   POST /api/v1/sessions/{id}/end
///   GET  /api/v1/health
class HttpService {
 public:
  explicit HttpService(SessionManager& sessions);
  ~HttpService();

  /// Binds to host:port (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  /// Blocks until run() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vislearn
