#include "vislearn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace vislearn {

// ---------------------------------------------------------------- Q-table

double QTable::get(std::uint32_t state, std::uint8_t action) const {
  auto it = values_.find({state, action});
  return it == values_.end() ? initial_ : it->second;
}

void QTable::set(std::uint32_t state, std::uint8_t action, double value) {
  if (!std::isfinite(value)) throw Error("non-finite Q-value");
  values_[{state, action}] = value;
}

std::size_t QTable::visits(std::uint32_t state, std::uint8_t action) const {
  auto it = visits_.find({state, action});
  return it == visits_.end() ? 0 : it->second;
}

void QTable::visit(std::uint32_t state, std::uint8_t action) { ++visits_[{state, action}]; }

void QTable::save(std::ostream& out, std::string_view kind,
                  const std::function<std::string(std::uint32_t)>& state_name,
                  const std::function<std::string(std::uint8_t)>& action_name) const {
  out << "# vislearn-qtable v1 " << kind << '\n';
  out << "initial\t" << format_double(initial_) << '\n';
  for (const auto& [key, value] : values_)
    out << state_name(key.first) << '\t' << action_name(key.second) << '\t' << format_double(value) << '\t'
        << visits(key.first, key.second) << '\n';
}

QTable QTable::load(std::istream& in, std::string_view kind,
                    const std::function<std::uint32_t(std::string_view)>& parse_state,
                    const std::function<std::uint8_t(std::string_view)>& parse_action) {
  std::string line;
  const std::string header = "# vislearn-qtable v1 " + std::string(kind);
  if (!std::getline(in, line) || trim(line) != header) throw Error("expected '" + header + "' header");
  QTable q;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string_view> cols;
    std::string_view rest = line;
    for (auto tab = rest.find('\t'); tab != std::string_view::npos; tab = rest.find('\t')) {
      cols.push_back(rest.substr(0, tab));
      rest.remove_prefix(tab + 1);
    }
    cols.push_back(rest);
    try {
      if (cols.size() == 2 && cols[0] == "initial") {
        q.initial_ = parse_double(cols[1]);
        continue;
      }
      if (cols.size() != 4) throw Error("expected 4 tab-separated columns");
      auto s = parse_state(cols[0]);
      auto a = parse_action(cols[1]);
      q.set(s, a, parse_double(cols[2]));
      auto n = static_cast<std::size_t>(parse_double(cols[3]));
      if (n > 0) q.visits_[{s, a}] = n;
    } catch (const Error& e) {
      throw Error("Q-table line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return q;
}

void sarsa_update(QTable& q, std::uint32_t s, std::uint8_t a, double r,
                  std::optional<std::pair<std::uint32_t, std::uint8_t>> next, double alpha, double gamma) {
  if (!std::isfinite(r)) throw Error("non-finite reward");
  double target = r + (next ? gamma * q.get(next->first, next->second) : 0.0);
  double old = q.get(s, a);
  q.set(s, a, old + alpha * (target - old));
}

std::uint8_t select_action(const QTable& q, std::uint32_t s, std::span<const std::uint8_t> legal, double epsilon,
                           Rng& rng) {
  if (legal.empty()) throw Error("no legal actions");
  if (epsilon > 0 && uniform01(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
    return legal[pick(rng)];
  }
  std::uint8_t best = legal.front();
  double best_q = q.get(s, best);
  for (auto a : legal.subspan(1)) {
    double v = q.get(s, a);
    if (v > best_q) {
      best = a;
      best_q = v;
    }
  }
  return best;
}

// ---------------------------------------------------------------- threshold MDP

std::string_view to_string(ThresholdAction a) {
  switch (a) {
    case ThresholdAction::Increase:
      return "Increase";
    case ThresholdAction::Decrease:
      return "Decrease";
    default:
      return "Keep";
  }
}

std::size_t threshold_index(double thd) {
  for (std::size_t i = 0; i < kThresholdGrid.size(); ++i)
    if (std::abs(kThresholdGrid[i] - thd) < 1e-9) return i;
  throw Error("threshold " + format_double(thd) + " is not on the 0.05 grid in [0.65, 0.95]");
}

std::uint32_t ThresholdState::code() const {
  if (bin < 0 || bin >= kBins || threshold >= kThresholdGrid.size() || delta < -1 || delta > 1)
    throw Error("threshold state out of range");
  return static_cast<std::uint32_t>((bin * 7 + static_cast<int>(threshold)) * 3 + (delta + 1));
}

ThresholdState ThresholdState::from_code(std::uint32_t code) {
  if (code >= kThresholdStateCount) throw Error("threshold state code out of range");
  ThresholdState s;
  s.delta = static_cast<int>(code % 3) - 1;
  s.threshold = (code / 3) % 7;
  s.bin = static_cast<int>(code / 21);
  return s;
}

std::string ThresholdState::str() const {
  return "bin=" + std::to_string(bin) + ",thd=" + format_double(value()) + ",delta=" + std::to_string(delta);
}

namespace {

// Splits "a=1,b=2" into values in the given key order.
std::vector<std::string_view> keyed_fields(std::string_view text, std::initializer_list<std::string_view> keys) {
  std::vector<std::string_view> out;
  for (auto key : keys) {
    auto comma = text.find(',');
    auto field = text.substr(0, comma);
    auto eq = field.find('=');
    if (eq == std::string_view::npos || field.substr(0, eq) != key)
      throw Error("expected '" + std::string(key) + "=' in '" + std::string(text) + "'");
    out.push_back(field.substr(eq + 1));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
  }
  if (!text.empty()) throw Error("trailing fields in state");
  return out;
}

int parse_int(std::string_view text) {
  double v = parse_double(text);
  if (v != std::floor(v)) throw Error("not an integer: '" + std::string(text) + "'");
  return static_cast<int>(v);
}

CategorySet parse_category_set(std::string_view text) {
  CategorySet out;
  if (text == "none" || text.empty()) return out;
  while (!text.empty()) {
    auto amp = text.find('&');
    auto c = parse_category(text.substr(0, amp));
    if (!c) throw Error("unknown category in '" + std::string(text) + "'");
    out.add(*c);
    text = amp == std::string_view::npos ? std::string_view{} : text.substr(amp + 1);
  }
  return out;
}

}  // namespace

ThresholdState ThresholdState::parse(std::string_view text) {
  auto f = keyed_fields(trim(text), {"bin", "thd", "delta"});
  ThresholdState s{parse_int(f[0]), threshold_index(parse_double(f[1])), parse_int(f[2])};
  s.code();  // range check
  return s;
}

int delta_acc_level(double prev_acc, double cur_acc) {
  double d = cur_acc - prev_acc;
  if (d > 1e-12) return 1;
  if (d < -1e-12) return -1;
  return 0;
}

double apply_threshold_action(double thd, ThresholdAction a) {
  auto i = threshold_index(thd);
  if (a == ThresholdAction::Increase && i + 1 < kThresholdGrid.size()) ++i;
  if (a == ThresholdAction::Decrease && i > 0) --i;
  return kThresholdGrid[i];
}

double threshold_reward(double prev_acc, double cur_acc, double k) { return k * (cur_acc - prev_acc); }

double baseline_threshold_schedule(Schedule kind, int bin) {
  if (bin < 0) throw Error("negative bin");
  // Integer hundredths keep the decay05 values identical to the grid literals.
  switch (kind) {
    case Schedule::Decay05:
      return std::max(65, 95 - 5 * bin) / 100.0;
    case Schedule::Decay01:
      return std::max(65, 95 - bin) / 100.0;
    default:
      return 0.95;
  }
}

// ---------------------------------------------------------------- dialogue MDP

std::uint32_t DialogueState::code() const {
  if (c_state < 0 || c_state > 2 || s_state < 0 || s_state > 2) throw Error("dialogue state out of range");
  std::uint32_t da = pre_da ? static_cast<std::uint32_t>(*pre_da) + 1 : 0;
  return ((static_cast<std::uint32_t>(c_state) * 3 + static_cast<std::uint32_t>(s_state)) * (kActKindCount + 1) + da) *
             4 +
         pre_context.bits();
}

DialogueState DialogueState::from_code(std::uint32_t code) {
  if (code >= kDialogueStateCount) throw Error("dialogue state code out of range");
  DialogueState s;
  s.pre_context = CategorySet::from_bits(static_cast<std::uint8_t>(code % 4));
  code /= 4;
  auto da = code % (kActKindCount + 1);
  if (da > 0) s.pre_da = static_cast<ActKind>(da - 1);
  code /= kActKindCount + 1;
  s.s_state = static_cast<int>(code % 3);
  s.c_state = static_cast<int>(code / 3);
  return s;
}

std::string DialogueState::str() const {
  std::string ctx = to_string(pre_context);
  return "c=" + std::to_string(c_state) + ",s=" + std::to_string(s_state) +
         ",da=" + (pre_da ? std::string(to_string(*pre_da)) : "none") + ",ctx=" + (ctx.empty() ? "none" : ctx);
}

DialogueState DialogueState::parse(std::string_view text) {
  auto f = keyed_fields(trim(text), {"c", "s", "da", "ctx"});
  DialogueState s;
  s.c_state = parse_int(f[0]);
  s.s_state = parse_int(f[1]);
  if (f[2] != "none") {
    auto k = parse_act_kind(f[2]);
    if (!k) throw Error("unknown act kind '" + std::string(f[2]) + "'");
    s.pre_da = *k;
  }
  s.pre_context = parse_category_set(f[3]);
  s.code();
  return s;
}

namespace {

constexpr std::array<std::string_view, 6> kLearnerKindNames{"AskWH", "AskPolar", "Inform", "DoNotKnow", "Ack",
                                                            "Listen"};
constexpr std::array<CategorySet, 3> kTargets{CategorySet{Category::Colour}, CategorySet{Category::Shape},
                                              CategorySet::both()};

bool targeted(LearnerActionKind k) { return k <= LearnerActionKind::DoNotKnow; }

PredictionStatus category_status(const GroundingMap& map, const VisualObject& object, const DialogueContext& ctx,
                                 double thd, Category c) {
  if (ctx.refuted().has(c)) return PredictionStatus::Unknown;
  double conf = map.best_prediction(c, object.features(c)).confidence;
  return status(conf, thd, ctx.provided().has(c));
}

}  // namespace

std::uint8_t LearnerAction::index() const {
  if (!targeted(kind)) return kind == LearnerActionKind::Ack ? 12 : 13;
  for (std::size_t t = 0; t < kTargets.size(); ++t)
    if (kTargets[t] == target) return static_cast<std::uint8_t>(static_cast<std::size_t>(kind) * 3 + t);
  throw Error("learner action " + std::string(kLearnerKindNames[static_cast<std::size_t>(kind)]) + " needs a target");
}

LearnerAction LearnerAction::from_index(std::uint8_t i) {
  if (i >= kLearnerActionCount) throw Error("learner action index out of range");
  if (i == 12) return {LearnerActionKind::Ack, {}};
  if (i == 13) return {LearnerActionKind::Listen, {}};
  return {static_cast<LearnerActionKind>(i / 3), kTargets[i % 3]};
}

std::string LearnerAction::str() const {
  return std::string(kLearnerKindNames[static_cast<std::size_t>(kind)]) + "(" + to_string(target) + ")";
}

LearnerAction LearnerAction::parse(std::string_view text) {
  text = trim(text);
  auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') throw Error("bad learner action '" + std::string(text) + "'");
  auto name = text.substr(0, open);
  auto it = std::find(kLearnerKindNames.begin(), kLearnerKindNames.end(), name);
  if (it == kLearnerKindNames.end()) throw Error("unknown learner action '" + std::string(name) + "'");
  LearnerAction a{static_cast<LearnerActionKind>(it - kLearnerKindNames.begin()),
                  parse_category_set(text.substr(open + 1, text.size() - open - 2))};
  a.index();  // validates the target
  if (!targeted(a.kind) && !a.target.empty()) throw Error("Ack and Listen take no target");
  return a;
}

bool is_legal(LearnerAction a, const std::array<double, 2>& confidence) {
  auto all = [&](auto pred) {
    for (auto c : a.target.members())
      if (!pred(confidence[index_of(c)])) return false;
    return true;
  };
  switch (a.kind) {
    case LearnerActionKind::AskPolar:
    case LearnerActionKind::Inform:
      return all([](double p) { return p > 0.5; });
    case LearnerActionKind::DoNotKnow:
      return all([](double p) { return p <= 0.5; });
    default:
      return true;
  }
}

std::optional<ActKind> summarize_tutor_turn(const Turn& turn) {
  if (turn.empty()) return std::nullopt;
  for (auto k : {ActKind::Inform, ActKind::Reject, ActKind::Ack})
    if (std::any_of(turn.begin(), turn.end(), [k](const DialogueAct& a) { return a.kind == k; })) return k;
  return turn.front().kind;
}

DialogueState encode_dialogue_state(const GroundingMap& map, const VisualObject& object, const DialogueContext& ctx,
                                    double thd) {
  DialogueState s;
  s.c_state = static_cast<int>(category_status(map, object, ctx, thd, Category::Colour));
  s.s_state = static_cast<int>(category_status(map, object, ctx, thd, Category::Shape));
  if (const auto* t = ctx.last_tutor_turn()) s.pre_da = summarize_tutor_turn(t->acts);
  s.pre_context = ctx.discussed();
  return s;
}

double global_reward(const CostLedger& ledger, int penalty_count, double p) {
  return 10.0 - ledger.total() - p * penalty_count;
}

LearnerAction rule_policy(const DialogueState& s) {
  if (s.c_state == 0) return {LearnerActionKind::AskWH, {Category::Colour}};
  if (s.c_state == 1) return {LearnerActionKind::AskPolar, {Category::Colour}};
  if (s.s_state == 0) return {LearnerActionKind::AskWH, {Category::Shape}};
  if (s.s_state == 1) return {LearnerActionKind::AskPolar, {Category::Shape}};
  return {LearnerActionKind::Ack, {}};
}

// ---------------------------------------------------------------- episodes

DialogueEpisode::DialogueEpisode(GroundingMap& map, const VisualObject& object, double threshold, EpisodeRules rules)
    : map_(&map), object_(&object), threshold_(threshold), rules_(rules), ctx_(object.id) {
  if (rules_.turn_cap < 1) throw Error("turn cap must be positive");
  check_done();
}

void DialogueEpisode::check_done() {
  auto st = statuses();
  if (st[0] == PredictionStatus::Known && st[1] == PredictionStatus::Known) finished_ = true;
}

std::array<double, 2> DialogueEpisode::confidences() const {
  return {map_->best_prediction(Category::Colour, object_->features(Category::Colour)).confidence,
          map_->best_prediction(Category::Shape, object_->features(Category::Shape)).confidence};
}

std::array<PredictionStatus, 2> DialogueEpisode::statuses() const {
  return {category_status(*map_, *object_, ctx_, threshold_, Category::Colour),
          category_status(*map_, *object_, ctx_, threshold_, Category::Shape)};
}

DialogueState DialogueEpisode::state() const { return encode_dialogue_state(*map_, *object_, ctx_, threshold_); }

std::vector<LearnerAction> DialogueEpisode::legal_actions() const {
  auto conf = confidences();
  std::vector<LearnerAction> out;
  for (std::uint8_t i = 0; i < kLearnerActionCount; ++i) {
    auto a = LearnerAction::from_index(i);
    if (is_legal(a, conf)) out.push_back(a);
  }
  return out;
}

DialogueAct DialogueEpisode::realise(LearnerAction a) const {
  switch (a.kind) {
    case LearnerActionKind::AskWH:
      return DialogueAct::of(ActKind::Ask, a.target);
    case LearnerActionKind::DoNotKnow:
      return DialogueAct::of(ActKind::DoNotKnow, a.target);
    case LearnerActionKind::AskPolar:
    case LearnerActionKind::Inform: {
      DialogueAct act = DialogueAct::of(a.kind == LearnerActionKind::Inform ? ActKind::Inform : ActKind::Polar);
      for (auto c : a.target.members()) act.set_word(c, map_->best_prediction(c, object_->features(c)).word);
      return act;
    }
    case LearnerActionKind::Ack:
      return DialogueAct::of(ActKind::Ack);
    default:
      return DialogueAct::listen();
  }
}

bool DialogueEpisode::incoherent(LearnerAction a) const {
  switch (a.kind) {
    case LearnerActionKind::Listen:
      return ctx_.tutor_awaits_answer();
    case LearnerActionKind::Ack: {
      const auto* last = ctx_.last_turn();
      if (!last || last->actor != Actor::Tutor || ctx_.tutor_awaits_answer()) return true;
      return std::none_of(last->acts.begin(), last->acts.end(), [](const DialogueAct& x) {
        return x.kind == ActKind::Inform || x.kind == ActKind::Ack || x.kind == ActKind::Reject ||
               x.kind == ActKind::Check;
      });
    }
    default:
      return !a.target.intersect(ctx_.provided()).empty();
  }
}

void DialogueEpisode::open(Turn acts, std::string utterance, const CostRates& rates) {
  if (finished_) throw Error("episode already finished");
  if (!ctx_.turns().empty()) throw Error("the tutor opening must be the first turn");
  acts = normalize(std::move(acts));
  if (acts.empty() || (acts.size() == 1 && acts.front().kind == ActKind::Listen)) return;
  auto costs = charge(nullptr, acts, rates);
  auto labels = labels_in(acts, nullptr);
  ctx_.update(Actor::Tutor, std::move(acts), std::move(utterance));
  for (const auto& l : labels) map_->learn_from_label(*object_, l.word);
  ledger_.add(costs);
  check_done();
}

const DialogueAct& DialogueEpisode::learner_move(LearnerAction a, const TemplateLexicon& lexicon, Rng& nlg_rng) {
  if (finished_) throw Error("episode already finished");
  if (!is_legal(a, confidences())) throw Error("illegal learner action " + a.str());
  step_penalties_ = incoherent(a) ? 1 : 0;
  penalties_ += step_penalties_;
  DialogueAct act = realise(a);
  std::string utterance = lexicon.generate(Actor::Learner, {act}, nlg_rng);
  pending_ = act;
  ++steps_;
  ctx_.update(Actor::Learner, {std::move(act)}, std::move(utterance));
  return ctx_.turns().back().acts.back();
}

void DialogueEpisode::learner_aside(DialogueAct act, std::string utterance) {
  ctx_.update(Actor::Learner, {std::move(act)}, std::move(utterance));
}

double DialogueEpisode::tutor_move(Turn acts, std::string utterance, const std::vector<CostEntry>& costs) {
  if (finished_) throw Error("episode already finished");
  std::optional<DialogueAct> claim;
  if (const auto* c = ctx_.pending_claim()) claim = *c;
  auto labels = labels_in(acts, claim ? &*claim : nullptr);
  ctx_.update(Actor::Tutor, std::move(acts), std::move(utterance));
  for (const auto& l : labels) map_->learn_from_label(*object_, l.word);
  double cost = 0;
  for (const auto& e : costs) cost += e.cost;
  ledger_.add(costs);
  double reward = -cost - rules_.penalty * step_penalties_;
  step_penalties_ = 0;
  pending_.reset();
  check_done();
  if (!finished_ && static_cast<int>(ctx_.turns().size()) >= rules_.turn_cap) {
    finished_ = true;
    capped_ = true;
    ++penalties_;
    reward -= rules_.penalty;
  }
  if (finished_) reward += rules_.completion_reward;
  return reward;
}

double DialogueEpisode::total_reward() const {
  return rules_.completion_reward - ledger_.total() - rules_.penalty * penalties_;
}

LearnerAction RulePolicy::choose(const DialogueState& s, std::span<const LearnerAction> legal, Rng&) {
  auto a = rule_policy(s);
  if (std::find(legal.begin(), legal.end(), a) != legal.end()) return a;
  return {LearnerActionKind::AskWH, a.target.empty() ? CategorySet::both() : a.target};
}

SarsaPolicy::SarsaPolicy(QTable& q, SarsaConfig config, bool learning) : q_(&q), config_(config), learning_(learning) {
  if (!learning_) config_.epsilon = 0.0;
}

LearnerAction SarsaPolicy::choose(const DialogueState& s, std::span<const LearnerAction> legal, Rng& rng) {
  std::vector<std::uint8_t> idx;
  idx.reserve(legal.size());
  for (const auto& a : legal) idx.push_back(a.index());
  return LearnerAction::from_index(select_action(*q_, s.code(), idx, config_.epsilon, rng));
}

void SarsaPolicy::observe(const DialogueState& s, LearnerAction a, double reward,
                          std::optional<std::pair<DialogueState, LearnerAction>> next) {
  if (!learning_) return;
  std::optional<std::pair<std::uint32_t, std::uint8_t>> n;
  if (next) n = std::pair{next->first.code(), next->second.index()};
  sarsa_update(*q_, s.code(), a.index(), reward, n, config_.alpha, config_.gamma);
  q_->visit(s.code(), a.index());
}

EpisodeResult run_dialogue_episode(DialoguePolicy& policy, GroundingMap& map, const TutorModel& tutor,
                                   const VisualObject& object, double thd, const EpisodeRules& rules,
                                   EpisodeRngs rngs) {
  DialogueEpisode ep(map, object, thd, rules);
  const auto& lexicon = tutor.lexicon();
  if (!ep.finished()) {
    Turn opening = tutor.open_dialogue(object, rngs.tutor);
    std::string text = opening.empty() ? "" : lexicon.generate(Actor::Tutor, opening, rngs.tutor);
    ep.open(std::move(opening), std::move(text), tutor.config().costs);
  }
  if (!ep.finished()) {
    auto s = ep.state();
    auto legal = ep.legal_actions();
    auto a = policy.choose(s, legal, rngs.policy);
    for (;;) {
      const auto& act = ep.learner_move(a, lexicon, rngs.nlg);
      auto resp = tutor.respond(act, ep.context(), object, rngs.tutor);
      double r = ep.tutor_move(std::move(resp.acts), std::move(resp.utterance), resp.costs);
      if (ep.finished()) {
        policy.observe(s, a, r, std::nullopt);
        break;
      }
      auto s2 = ep.state();
      legal = ep.legal_actions();
      auto a2 = policy.choose(s2, legal, rngs.policy);
      policy.observe(s, a, r, std::pair{s2, a2});
      s = s2;
      a = a2;
    }
  }
  if (!ep.context().turns().empty()) {
    DialogueAct ack = DialogueAct::of(ActKind::Ack);
    ep.learner_aside(ack, lexicon.generate(Actor::Learner, {ack}, rngs.nlg));
  }
  EpisodeResult out;
  out.turns = ep.context().turns();
  out.ledger = ep.ledger();
  out.penalties = ep.penalties();
  out.steps = ep.steps();
  out.capped = ep.capped();
  out.reward = ep.total_reward();
  return out;
}

std::string dialogue_state_name(std::uint32_t code) { return DialogueState::from_code(code).str(); }
std::string dialogue_action_name(std::uint8_t a) { return LearnerAction::from_index(a).str(); }
std::string threshold_state_name(std::uint32_t code) { return ThresholdState::from_code(code).str(); }
std::string threshold_action_name(std::uint8_t a) {
  if (a >= kThresholdActions.size()) throw Error("threshold action out of range");
  return std::string(to_string(kThresholdActions[a]));
}

void save_dialogue_q(std::ostream& out, const QTable& q) {
  q.save(out, "dialogue", dialogue_state_name, dialogue_action_name);
}

QTable load_dialogue_q(std::istream& in) {
  return QTable::load(
      in, "dialogue", [](std::string_view s) { return DialogueState::parse(s).code(); },
      [](std::string_view a) { return LearnerAction::parse(a).index(); });
}

void save_threshold_q(std::ostream& out, const QTable& q) {
  q.save(out, "threshold", threshold_state_name, threshold_action_name);
}

QTable load_threshold_q(std::istream& in) {
  return QTable::load(
      in, "threshold", [](std::string_view s) { return ThresholdState::parse(s).code(); },
      [](std::string_view a) -> std::uint8_t {
        for (std::uint8_t i = 0; i < kThresholdActions.size(); ++i)
          if (to_string(kThresholdActions[i]) == a) return i;
        throw Error("unknown threshold action '" + std::string(a) + "'");
      });
}

// ---------------------------------------------------------------- learning runs

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Rl:
      return "rl";
    case Condition::Constant95:
      return "constant95";
    case Condition::Decay05:
      return "decay05";
    default:
      return "decay01";
  }
}

std::optional<Condition> parse_condition(std::string_view text) {
  for (auto c : kConditions)
    if (to_string(c) == text) return c;
  return std::nullopt;
}

RunResult run_learning(Condition condition, const AgentConfig& config, const Dataset& data,
                       std::span<const std::size_t> order, const TutorModel& tutor, RlTables* tables, bool learning,
                       std::uint64_t seed) {
  if (data.train.empty() || data.test.empty()) throw Error("run needs train and test objects");
  if (order.empty() || order.size() % kInstancesPerBin != 0)
    throw Error("instance count must be a positive multiple of 10");
  const bool rl = condition == Condition::Rl;
  if (rl && !tables) throw Error("the rl condition needs Q-tables");
  if (rl && order.size() > static_cast<std::size_t>(kBins * kInstancesPerBin))
    throw Error("the threshold MDP covers at most 500 instances");
  Rng tutor_rng(derive_seed(seed, 1));
  Rng policy_rng(derive_seed(seed, 2));
  Rng nlg_rng(derive_seed(seed, 3));

  GroundingMap map(config.inventory, data.train.front().shape_features.size(), config.vision);
  RulePolicy rule;
  std::optional<SarsaPolicy> sarsa;
  if (rl) sarsa.emplace(tables->dialogue, config.dialogue_sarsa, learning);
  DialoguePolicy& policy = rl ? static_cast<DialoguePolicy&>(*sarsa) : rule;
  const double thd_epsilon = learning ? config.threshold_sarsa.epsilon : 0.0;
  const std::vector<std::uint8_t> all_thd_actions{0, 1, 2};
  const Schedule schedule = condition == Condition::Decay05   ? Schedule::Decay05
                            : condition == Condition::Decay01 ? Schedule::Decay01
                                                              : Schedule::Constant95;

  RunResult out;
  out.initial = evaluate(map, data.test);
  double prev_acc = out.initial.per_attribute();
  const int bins = static_cast<int>(order.size()) / kInstancesPerBin;

  ThresholdState ts{0, threshold_index(config.initial_threshold), 0};
  std::uint8_t ta = 0;
  if (rl) ta = select_action(tables->threshold, ts.code(), all_thd_actions, thd_epsilon, policy_rng);

  double cost = 0;
  for (int bin = 0; bin < bins; ++bin) {
    double thd = rl ? apply_threshold_action(ts.value(), kThresholdActions[ta]) : baseline_threshold_schedule(schedule, bin);
    for (int i = 0; i < kInstancesPerBin; ++i) {
      const auto& obj = data.train.at(order[static_cast<std::size_t>(bin * kInstancesPerBin + i)]);
      auto ep = run_dialogue_episode(policy, map, tutor, obj, thd, config.episode, {tutor_rng, policy_rng, nlg_rng});
      cost += ep.ledger.total();
      out.penalties += ep.penalties;
      if (ep.turns.empty()) ++out.zero_turn_episodes;
      if (ep.capped) ++out.capped_episodes;
    }
    auto acc = evaluate(map, data.test);
    out.curve.push_back({(bin + 1) * kInstancesPerBin, acc, cost, thd});
    if (rl) {
      double r = threshold_reward(prev_acc, acc.per_attribute(), config.reward_scale);
      if (learning) tables->threshold.visit(ts.code(), ta);
      ThresholdState next{std::min(bin + 1, kBins - 1), threshold_index(thd), delta_acc_level(prev_acc, acc.per_attribute())};
      if (bin + 1 == bins) {
        if (learning) sarsa_update(tables->threshold, ts.code(), ta, r, std::nullopt, config.threshold_sarsa.alpha,
                                   config.threshold_sarsa.gamma);
      } else {
        auto next_a = select_action(tables->threshold, next.code(), all_thd_actions, thd_epsilon, policy_rng);
        if (learning)
          sarsa_update(tables->threshold, ts.code(), ta, r, std::pair{next.code(), next_a},
                       config.threshold_sarsa.alpha, config.threshold_sarsa.gamma);
        ta = next_a;
      }
      ts = next;
    }
    prev_acc = acc.per_attribute();
  }
  out.total_cost = cost;
  return out;
}

}  // namespace vislearn
