#include "vislearn/live_service.hpp"

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include <httplib.h>

namespace vislearn {

using nlohmann::json;

namespace {

constexpr std::uint64_t kNlgStream = 3;
constexpr std::uint64_t kPolicyStream = 2;

json glyph_for(const AttributeInventory& inv, const std::string& shape) {
  if (shape == "circle") return {{"kind", "ellipse"}};
  if (shape == "triangle") return {{"kind", "polygon"}, {"sides", 3}};
  if (shape == "square") return {{"kind", "polygon"}, {"sides", 4}};
  auto i = inv.index_in_category(shape).value_or(0);
  return {{"kind", "polygon"}, {"sides", 5 + static_cast<int>(i)}};
}

std::string new_session_id() {
  static std::mutex m;
  static std::random_device rd;
  static Rng rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  std::lock_guard lock(m);
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string id = "s";
  auto v = rng();
  for (int i = 0; i < 16; ++i, v >>= 4) id += kDigits[v & 15];
  return id;
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'; });
}

}  // namespace

class Session {
 public:
  std::string id;
  std::string policy_name;
  std::uint64_t seed = 0;
  const ServiceConfig* config = nullptr;
  std::shared_ptr<const TemplateLexicon> lexicon;

  Dataset data;
  std::size_t index = 0;
  GroundingMap map;
  std::optional<QTable> dialogue_q;
  std::optional<QTable> threshold_q;
  std::unique_ptr<DialoguePolicy> policy;
  Rng policy_rng;
  Rng nlg_rng;

  AccuracyReport initial_accuracy;
  double prev_acc = 0;
  ThresholdState ts;
  std::uint8_t ta = 0;
  double threshold = 0.95;

  std::unique_ptr<DialogueEpisode> episode;
  bool opened = false;
  bool ended = false;
  double finished_cost = 0;  // cost of completed dialogues
  int finished_penalties = 0;
  int dialogues_done = 0;

  std::vector<json> log;
  std::ofstream journal;
  mutable std::mutex mu;
  mutable std::condition_variable cv;

  double cumulative_cost() const { return finished_cost + (episode ? episode->ledger().total() : 0.0); }
  int penalties() const { return finished_penalties + (episode ? episode->penalties() : 0); }
  bool rl() const { return policy_name == kRlPolicy; }

  json readout() const {
    json s;
    s["object_index"] = index;
    s["objects_remaining"] = data.train.size() - index - 1;
    s["threshold"] = threshold;
    s["cumulative_cost"] = cumulative_cost();
    s["penalties"] = penalties();
    s["dialogue_finished"] = !episode || episode->finished();
    s["session_ended"] = ended;
    if (episode) {
      auto st = episode->state();
      s["c_state"] = st.c_state;
      s["s_state"] = st.s_state;
    }
    json conf = json::object();
    const auto& obj = data.train[index];
    for (auto c : kCategories) {
      json words = json::object();
      for (const auto& p : map.confidences(c, obj.features(c))) words[p.word] = p.confidence;
      conf[std::string(to_string(c))] = words;
    }
    s["confidences"] = conf;
    return s;
  }

  json object_spec() const {
    const auto& obj = data.train[index];
    return {{"id", obj.id},
            {"index", index},
            {"colour_hsv", obj.colour_features},
            {"glyph", glyph_for(map.inventory(), obj.shape_label)}};
  }

  json& emit(std::vector<json>& out, std::string type, std::optional<std::string> act = std::nullopt,
             std::optional<std::string> utterance = std::nullopt, std::optional<json> cost = std::nullopt) {
    json e;
    e["v"] = kMessageVersion;
    e["type"] = std::move(type);
    e["session"] = id;
    e["seq"] = log.size() + 1;
    e["act"] = act ? json(*act) : json(nullptr);
    e["utterance"] = utterance ? json(*utterance) : json(nullptr);
    e["state"] = readout();
    e["cost"] = cost ? *cost : json(nullptr);
    log.push_back(e);
    out.push_back(e);
    return log.back();
  }

  json cost_delta(double before) const {
    return {{"delta", cumulative_cost() - before}, {"total", cumulative_cost()}};
  }

  void record(const json& op) {
    if (!journal.is_open()) return;
    journal << op.dump() << '\n';
    journal.flush();
    if (!journal) throw ServiceError(500, "cannot append to session log");
  }

  void start_object(std::vector<json>& out) {
    episode = std::make_unique<DialogueEpisode>(map, data.train[index], threshold, config->agent.episode);
    opened = false;
    auto& e = emit(out, "object");
    e["state"]["object"] = object_spec();
    out.back() = e;
    if (episode->finished()) emit(out, "dialogue_end");
  }

  void learner_move(std::vector<json>& out) {
    auto st = episode->state();
    auto legal = episode->legal_actions();
    auto a = policy->choose(st, legal, policy_rng);
    const auto& act = episode->learner_move(a, *lexicon, nlg_rng);
    const auto& text = episode->context().turns().back().utterance;
    emit(out, "learner_turn", act.tag(), text);
  }

  void finish_dialogue(std::vector<json>& out) {
    DialogueAct ack = DialogueAct::of(ActKind::Ack);
    std::string text = lexicon->generate(Actor::Learner, {ack}, nlg_rng);
    episode->learner_aside(ack, text);
    emit(out, "learner_turn", ack.tag(), text);
    emit(out, "dialogue_end");
  }

  void on_turn(std::string_view utterance, std::vector<json>& out) {
    if (ended) throw ServiceError(410, "session has ended");
    if (!episode || episode->finished()) throw ServiceError(409, "the dialogue about this object is over; advance");
    const double before = cumulative_cost();
    auto parsed = lexicon->parse(utterance, Actor::Tutor);
    if (!parsed) {
      emit(out, "tutor_turn", std::nullopt, std::string(utterance), cost_delta(before));
      DialogueAct req = DialogueAct::of(ActKind::CLrRequest);
      std::string text = lexicon->generate(Actor::Learner, {req}, nlg_rng);
      episode->learner_aside(req, text);
      emit(out, "learner_turn", req.tag(), text);
      return;
    }
    std::string tag_text = tags(*parsed);
    if (!opened) {
      opened = true;
      episode->open(*parsed, std::string(utterance), config->costs);
    } else {
      auto costs = charge(episode->awaiting_reply(), *parsed, config->costs);
      episode->tutor_move(*parsed, std::string(utterance), costs);
    }
    emit(out, "tutor_turn", tag_text, std::string(utterance), cost_delta(before));
    if (episode->finished())
      finish_dialogue(out);
    else
      learner_move(out);
  }

  void close_bin() {
    auto acc = evaluate(map, data.test).per_attribute();
    if (rl()) {
      int bin = std::min(ts.bin + 1, kBins - 1);
      ts = ThresholdState{bin, threshold_index(threshold), delta_acc_level(prev_acc, acc)};
      static const std::vector<std::uint8_t> all{0, 1, 2};
      ta = select_action(*threshold_q, ts.code(), all, 0.0, policy_rng);
      threshold = apply_threshold_action(ts.value(), kThresholdActions[ta]);
    }
    prev_acc = acc;
  }

  void on_advance(std::vector<json>& out) {
    if (ended) throw ServiceError(410, "session has ended");
    if (episode && !episode->finished()) throw ServiceError(409, "the current dialogue has not finished");
    if (episode) {
      finished_cost += episode->ledger().total();
      finished_penalties += episode->penalties();
      ++dialogues_done;
      episode.reset();
    }
    if (index + 1 >= data.train.size()) {
      on_end(out);
      return;
    }
    ++index;
    if (index % kInstancesPerBin == 0) close_bin();
    start_object(out);
  }

  void on_end(std::vector<json>& out) {
    if (ended) throw ServiceError(410, "session has ended");
    if (episode && episode->finished()) {
      finished_cost += episode->ledger().total();
      finished_penalties += episode->penalties();
      ++dialogues_done;
      episode.reset();
    }
    ended = true;
    auto final_acc = evaluate(map, data.test);
    json summary = {{"dialogues_completed", dialogues_done},
                    {"total_cost", cumulative_cost()},
                    {"initial_accuracy", initial_accuracy.per_attribute()},
                    {"final_accuracy", final_acc.per_attribute()},
                    {"final_joint_accuracy", final_acc.joint}};
    double delta = final_acc.per_attribute() - initial_accuracy.per_attribute();
    summary["r_perf"] = cumulative_cost() > 0 ? json(delta / cumulative_cost()) : json(nullptr);
    auto& e = emit(out, "session_end");
    e["state"]["summary"] = summary;
    out.back() = e;
  }
};

SessionManager::SessionManager(ServiceConfig config) : config_(std::move(config)) {
  if (!config_.lexicon) config_.lexicon = {&TemplateLexicon::default_english(), [](const TemplateLexicon*) {}};
  config_.agent.inventory = config_.world.inventory;
  if (!config_.state_dir.empty()) {
    std::filesystem::create_directories(config_.state_dir);
    restore_all();
  }
}

SessionManager::~SessionManager() = default;

std::shared_ptr<Session> SessionManager::build(const std::string& id, std::string_view policy, std::uint64_t seed,
                                               const std::filesystem::path& dialogue_q,
                                               const std::filesystem::path& threshold_q) const {
  if (policy != kRulePolicy && policy != kRlPolicy)
    throw ServiceError(400, "unknown policy '" + std::string(policy) + "' (expected rule-constant95 or rl-pretrained)");
  auto s = std::make_shared<Session>();
  s->id = id;
  s->policy_name = std::string(policy);
  s->seed = seed;
  s->config = &config_;
  s->lexicon = config_.lexicon;
  WorldConfig wc = config_.world;
  wc.seed = seed;
  s->data = generate_dataset(wc);
  s->map = GroundingMap(config_.world.inventory, wc.shape_bins, config_.agent.vision);
  s->policy_rng.seed(derive_seed(seed, kPolicyStream));
  s->nlg_rng.seed(derive_seed(seed, kNlgStream));
  if (s->rl()) {
    std::ifstream din(dialogue_q), tin(threshold_q);
    if (dialogue_q.empty() || threshold_q.empty() || !din || !tin)
      throw ServiceError(400, "rl-pretrained sessions need dialogue.q and threshold.q in the policy directory");
    try {
      s->dialogue_q = load_dialogue_q(din);
      s->threshold_q = load_threshold_q(tin);
    } catch (const Error& e) {
      throw ServiceError(400, std::string("cannot load Q-tables: ") + e.what());
    }
    s->policy = std::make_unique<SarsaPolicy>(*s->dialogue_q, config_.agent.dialogue_sarsa, false);
    s->ts = ThresholdState{0, threshold_index(config_.agent.initial_threshold), 0};
    static const std::vector<std::uint8_t> all{0, 1, 2};
    s->ta = select_action(*s->threshold_q, s->ts.code(), all, 0.0, s->policy_rng);
    s->threshold = apply_threshold_action(s->ts.value(), kThresholdActions[s->ta]);
  } else {
    s->policy = std::make_unique<RulePolicy>();
    s->threshold = 0.95;
  }
  s->initial_accuracy = evaluate(s->map, s->data.test);
  s->prev_acc = s->initial_accuracy.per_attribute();
  return s;
}

json SessionManager::create(std::string_view policy, std::uint64_t seed) {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    do id = new_session_id();
    while (sessions_.count(id));
  }
  auto s = config_.policy_dir.empty()
               ? build(id, policy, seed, {}, {})
               : build(id, policy, seed, config_.policy_dir / "dialogue.q", config_.policy_dir / "threshold.q");
  std::vector<json> out;
  if (!config_.state_dir.empty()) {
    // Q-tables are copied next to the log so a restore never depends on the policy directory.
    if (s->rl()) {
      std::filesystem::copy_file(config_.policy_dir / "dialogue.q", config_.state_dir / (id + ".dialogue.q"),
                                 std::filesystem::copy_options::overwrite_existing);
      std::filesystem::copy_file(config_.policy_dir / "threshold.q", config_.state_dir / (id + ".threshold.q"),
                                 std::filesystem::copy_options::overwrite_existing);
    }
    s->journal.open(config_.state_dir / (id + ".jsonl"), std::ios::app);
    if (!s->journal) throw ServiceError(500, "cannot create session log");
    s->record({{"op", "create"}, {"policy", policy}, {"seed", seed}});
  }
  {
    std::lock_guard lock(s->mu);
    s->emit(out, "session_created");
    s->start_object(out);
  }
  {
    std::lock_guard lock(mutex_);
    sessions_[id] = s;
  }
  return {{"session", id}, {"events", out}};
}

void SessionManager::restore_all() {
  for (const auto& entry : std::filesystem::directory_iterator(config_.state_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    const std::string id = entry.path().stem().string();
    std::ifstream in(entry.path());
    std::string line;
    std::shared_ptr<Session> s;
    std::vector<json> sink;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      json op;
      try {
        op = json::parse(line);
      } catch (const json::parse_error&) {
        continue;  // a line torn by a crash; it was never acknowledged
      }
      const std::string kind = op.value("op", "");
      if (!s) {
        if (kind != "create") throw Error("session log " + entry.path().string() + " does not start with create");
        s = build(id, op.at("policy").get<std::string>(), op.at("seed").get<std::uint64_t>(),
                  config_.state_dir / (id + ".dialogue.q"), config_.state_dir / (id + ".threshold.q"));
        s->emit(sink, "session_created");
        s->start_object(sink);
      } else if (kind == "turn") {
        s->on_turn(op.at("utterance").get<std::string>(), sink);
      } else if (kind == "advance") {
        s->on_advance(sink);
      } else if (kind == "end") {
        s->on_end(sink);
      } else {
        throw Error("unknown operation '" + kind + "' in " + entry.path().string());
      }
    }
    if (!s) continue;
    s->journal.open(entry.path(), std::ios::app);
    s->journal << '\n';  // terminates a torn last line, if any
    s->journal.flush();
    sessions_[id] = s;
  }
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  if (!valid_id(id)) throw ServiceError(404, "unknown session");
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + id + "'");
  return it->second;
}

json SessionManager::state(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  json st = s->readout();
  st["object"] = s->object_spec();
  return {{"v", kMessageVersion},
          {"session", id},
          {"policy", s->policy_name},
          {"seed", s->seed},
          {"seq", s->log.size()},
          {"state", st}};
}

std::vector<json> SessionManager::turn(const std::string& id, std::string_view utterance) {
  auto s = find(id);
  std::vector<json> out;
  {
    std::lock_guard lock(s->mu);
    s->on_turn(utterance, out);
    s->record({{"op", "turn"}, {"utterance", utterance}});
  }
  s->cv.notify_all();
  return out;
}

std::vector<json> SessionManager::advance(const std::string& id) {
  auto s = find(id);
  std::vector<json> out;
  {
    std::lock_guard lock(s->mu);
    s->on_advance(out);
    s->record({{"op", "advance"}});
  }
  s->cv.notify_all();
  return out;
}

std::vector<json> SessionManager::end(const std::string& id) {
  auto s = find(id);
  std::vector<json> out;
  {
    std::lock_guard lock(s->mu);
    s->on_end(out);
    s->record({{"op", "end"}});
  }
  s->cv.notify_all();
  return out;
}

std::vector<json> SessionManager::events(const std::string& id, std::uint64_t since,
                                         std::chrono::milliseconds wait) const {
  auto s = find(id);
  std::unique_lock lock(s->mu);
  if (wait.count() > 0)
    s->cv.wait_for(lock, wait, [&] { return s->log.size() > since || s->ended; });
  std::vector<json> out;
  for (std::size_t i = static_cast<std::size_t>(std::min<std::uint64_t>(since, s->log.size())); i < s->log.size(); ++i)
    out.push_back(s->log[i]);
  return out;
}

bool SessionManager::ended(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->ended;
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

GroundingMap SessionManager::grounding(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->map;
}

double SessionManager::total_cost(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->cumulative_cost();
}

int SessionManager::penalties(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->penalties();
}

// ---------------------------------------------------------------- HTTP

struct HttpService::Impl {
  SessionManager& sessions;
  httplib::Server server;
  explicit Impl(SessionManager& s) : sessions(s) {}
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    reply(res, e.status(), {{"error", e.what()}});
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body);
  if (!j.is_object()) throw ServiceError(400, "request body must be a JSON object");
  return j;
}

std::string sse_frame(const json& e) {
  return "id: " + std::to_string(e.at("seq").get<std::uint64_t>()) + "\nevent: " + e.at("type").get<std::string>() +
         "\ndata: " + e.dump() + "\n\n";
}

}  // namespace

HttpService::HttpService(SessionManager& sessions) : impl_(std::make_unique<Impl>(sessions)) {
  auto& svr = impl_->server;
  auto& mgr = impl_->sessions;
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  svr.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  svr.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"ok", true}, {"v", kMessageVersion}});
  });
  svr.Post("/api/v1/sessions", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = parse_body(req);
      auto policy = body.value("policy", std::string(kRulePolicy));
      auto seed = body.value("seed", std::uint64_t{1});
      reply(res, 201, mgr.create(policy, seed));
    });
  });
  svr.Get(R"(/api/v1/sessions/([A-Za-z0-9_-]+))", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, mgr.state(req.matches[1])); });
  });
  svr.Post(R"(/api/v1/sessions/([A-Za-z0-9_-]+)/turns)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = parse_body(req);
      if (!body.contains("utterance") || !body["utterance"].is_string())
        throw ServiceError(400, "expected {\"utterance\": string}");
      reply(res, 200, {{"events", mgr.turn(req.matches[1], body["utterance"].get<std::string>())}});
    });
  });
  svr.Post(R"(/api/v1/sessions/([A-Za-z0-9_-]+)/advance)",
           [&mgr](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] { reply(res, 200, {{"events", mgr.advance(req.matches[1])}}); });
           });
  svr.Post(R"(/api/v1/sessions/([A-Za-z0-9_-]+)/end)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, {{"events", mgr.end(req.matches[1])}}); });
  });
  svr.Get(R"(/api/v1/sessions/([A-Za-z0-9_-]+)/events)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      mgr.state(id);  // 404 before the stream starts
      std::uint64_t since = 0;
      if (req.has_param("since")) since = static_cast<std::uint64_t>(std::stoull(req.get_param_value("since")));
      if (auto last = req.get_header_value("Last-Event-ID"); !last.empty()) since = std::stoull(last);
      const bool follow = !(req.has_param("follow") && req.get_param_value("follow") == "0");
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [&mgr, id, since, follow](std::size_t, httplib::DataSink& sink) mutable {
            try {
              auto evs = mgr.events(id, since, follow ? std::chrono::milliseconds(10000) : std::chrono::milliseconds(0));
              for (const auto& e : evs) {
                auto frame = sse_frame(e);
                if (!sink.write(frame.data(), frame.size())) return false;
                since = e.at("seq").get<std::uint64_t>();
              }
              if (!follow || (evs.empty() && mgr.ended(id))) {
                sink.done();
                return true;
              }
              if (evs.empty()) {
                static constexpr char kKeepAlive[] = ": keep-alive\n\n";
                if (!sink.write(kKeepAlive, sizeof(kKeepAlive) - 1)) return false;
              }
              return true;
            } catch (const std::exception&) {
              return false;
            }
          });
    });
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpService::run() { impl_->server.listen_after_bind(); }

void HttpService::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace vislearn
