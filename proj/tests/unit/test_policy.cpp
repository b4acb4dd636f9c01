#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "vislearn/policy.hpp"

using namespace vislearn;

namespace {

VisualObject object_of(const std::string& colour, const std::string& shape) {
  auto inv = AttributeInventory::default_inventory();
  VisualObject o;
  o.colour_label = colour;
  o.shape_label = shape;
  auto c = prototype(inv, colour);
  std::copy(c.begin(), c.end(), o.colour_features.begin());
  o.shape_features = prototype(inv, shape);
  return o;
}

void set_bias(GroundingMap& map, const std::string& word, double bias) {
  auto& clf = map.classifier(word);
  std::vector<double> w(clf.feature_dim() + 1, 0.0);
  w.back() = bias;
  clf.set_weights(w);
}

// Informs both best guesses when it can, then follows the rule policy.
class GuessFirst final : public DialoguePolicy {
 public:
  LearnerAction choose(const DialogueState& s, std::span<const LearnerAction> legal, Rng&) override {
    LearnerAction guess{LearnerActionKind::Inform, CategorySet::both()};
    if (first_ && std::find(legal.begin(), legal.end(), guess) != legal.end()) {
      first_ = false;
      return guess;
    }
    first_ = false;
    return rule_policy(s);
  }

 private:
  bool first_ = true;
};

class AlwaysListen final : public DialoguePolicy {
 public:
  LearnerAction choose(const DialogueState&, std::span<const LearnerAction>, Rng&) override { return {}; }
};

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("accuracy delta levels") {
    CHECK(delta_acc_level(0.70, 0.75) == 1);
    CHECK(delta_acc_level(0.75, 0.75) == 0);
    CHECK(delta_acc_level(0.80, 0.72) == -1);
  }

  TEST_CASE("threshold actions stay on the grid") {
    CHECK(apply_threshold_action(0.80, ThresholdAction::Increase) == 0.85);
    CHECK(apply_threshold_action(0.95, ThresholdAction::Increase) == 0.95);
    CHECK(apply_threshold_action(0.65, ThresholdAction::Decrease) == 0.65);
    Rng rng(8);
    double thd = 0.95;
    for (int i = 0; i < 1000; ++i) {
      thd = apply_threshold_action(thd, kThresholdActions[rng() % 3]);
      CHECK_NOTHROW(threshold_index(thd));
    }
    CHECK_THROWS_AS(threshold_index(0.82), Error);
  }

  TEST_CASE("threshold reward") {
    CHECK(threshold_reward(0.70, 0.75) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(threshold_reward(0.75, 0.75) == 0.0);
    CHECK(threshold_reward(0.80, 0.70) == doctest::Approx(-10.0).epsilon(1e-12));
  }

  TEST_CASE("global reward") {
    CostLedger none;
    CHECK(global_reward(none, 0) == 10.0);
    CostLedger l;
    l.add({DialogueAct::inform("red", std::nullopt), CostKind::Inform, 5.0});
    l.add({DialogueAct::of(ActKind::Ack), CostKind::Ack, 0.5});
    CHECK(global_reward(l, 0) == 4.5);
    CostLedger five;
    five.add({DialogueAct::inform("red", std::nullopt), CostKind::Inform, 5.0});
    CHECK(global_reward(five, 2) == 1.0);
  }

  TEST_CASE("SARSA update arithmetic") {
    QTable q;
    sarsa_update(q, 0, 0, 1.0, std::pair<std::uint32_t, std::uint8_t>{1, 0}, 0.5, 1.0);
    CHECK(q.get(0, 0) == 0.5);
    q.set(2, 1, 3.0);
    q.set(3, 0, 3.0);
    sarsa_update(q, 2, 1, 0.0, std::pair<std::uint32_t, std::uint8_t>{3, 0}, 0.1, 1.0);
    CHECK(q.get(2, 1) == 3.0);
    sarsa_update(q, 4, 0, 2.0, std::nullopt, 0.1, 1.0);
    CHECK(q.get(4, 0) == doctest::Approx(0.2));
    CHECK_THROWS_AS(sarsa_update(q, 4, 0, NAN, std::nullopt, 0.1, 1.0), Error);
  }

  TEST_CASE("greedy selection and tie break") {
    QTable q;
    std::vector<std::uint8_t> legal;
    for (std::uint8_t a = 0; a < kLearnerActionCount; ++a) legal.push_back(a);
    Rng rng(1);
    const auto ask_shape = LearnerAction{LearnerActionKind::AskWH, {Category::Shape}}.index();
    CHECK(select_action(q, 7, legal, 0.0, rng) == legal.front());
    q.set(7, ask_shape, 1.0);
    Rng before = rng;
    CHECK(select_action(q, 7, legal, 0.0, rng) == ask_shape);
    CHECK(rng == before);
    CHECK_THROWS_AS(select_action(q, 7, std::vector<std::uint8_t>{}, 0.0, rng), Error);
  }

  TEST_CASE("uniform exploration") {
    QTable q;
    q.set(0, 2, 5.0);
    std::vector<std::uint8_t> legal{0, 2, 5, 9};
    std::map<std::uint8_t, int> counts;
    Rng rng(20170901);
    for (int i = 0; i < 10000; ++i) ++counts[select_action(q, 0, legal, 1.0, rng)];
    for (auto a : legal) {
      CHECK(counts[a] >= 2500 - 130);
      CHECK(counts[a] <= 2500 + 130);
    }
  }

  TEST_CASE("greedy choice is invariant under positive scaling") {
    Rng rng(31);
    std::uniform_real_distribution<double> u(-5, 5), k(0.01, 100);
    std::vector<std::uint8_t> legal{0, 1, 2, 3, 4, 5};
    for (int t = 0; t < 500; ++t) {
      QTable a, b;
      const double scale = k(rng);
      for (std::uint8_t i : legal) {
        double v = u(rng);
        a.set(0, i, v);
        b.set(0, i, v * scale);
      }
      CHECK(select_action(a, 0, legal, 0.0, rng) == select_action(b, 0, legal, 0.0, rng));
    }
  }

  TEST_CASE("three-state chain matches value iteration") {
    oracle::Chain chain{3, -3.0, 7.0, 10.0};
    auto optimal = chain.optimal_policy();
    CHECK(optimal == std::vector<int>{0, 1, 1});
    CHECK(oracle::sarsa_chain_policy(chain, 10000, 3) == optimal);
  }

  TEST_CASE("state encoding") {
    GroundingMap map;
    auto obj = object_of("red", "square");
    DialogueContext ctx(0);
    auto s = encode_dialogue_state(map, obj, ctx, 0.95);
    CHECK(s == DialogueState{0, 0, std::nullopt, {}});
    CHECK(s.str() == "c=0,s=0,da=none,ctx=none");

    ctx.update(Actor::Tutor, {DialogueAct::inform("red", std::nullopt)}, "red.");
    auto s2 = encode_dialogue_state(map, obj, ctx, 0.95);
    CHECK(s2.c_state == 2);
    CHECK(s2.pre_da == ActKind::Inform);

    GroundingMap trained;
    set_bias(trained, "red", std::log(0.8 / 0.2));
    for (const auto& w : trained.inventory().colours)
      if (w != "red") set_bias(trained, w, -3.0);
    CHECK(encode_dialogue_state(trained, obj, DialogueContext(0), 0.95).c_state == 1);
    CHECK(encode_dialogue_state(trained, obj, DialogueContext(0), 0.75).c_state == 2);
  }

  TEST_CASE("state and action codes round trip within bounds") {
    for (std::uint32_t code = 0; code < kDialogueStateCount; ++code) {
      auto s = DialogueState::from_code(code);
      CHECK(s.code() == code);
      CHECK(DialogueState::parse(s.str()) == s);
    }
    CHECK_THROWS_AS(DialogueState::from_code(kDialogueStateCount), Error);
    for (std::uint8_t i = 0; i < kLearnerActionCount; ++i) {
      auto a = LearnerAction::from_index(i);
      CHECK(a.index() == i);
      CHECK(LearnerAction::parse(a.str()) == a);
    }
    for (std::uint32_t code = 0; code < kThresholdStateCount; ++code)
      CHECK(ThresholdState::parse(ThresholdState::from_code(code).str()).code() == code);
    CHECK(kDialogueStateCount == 576);
  }

  TEST_CASE("summary of a composite tutor turn") {
    CHECK(summarize_tutor_turn(parse_tags("Ack(colour) Reject(shape) Inform(shape:square)")) == ActKind::Inform);
    CHECK(summarize_tutor_turn(parse_tags("Ack(colour) Reject(shape)")) == ActKind::Reject);
    CHECK(summarize_tutor_turn(parse_tags("Focus(colour) Ack()")) == ActKind::Ack);
    CHECK(summarize_tutor_turn(parse_tags("Focus(colour)")) == ActKind::Focus);
    CHECK_FALSE(summarize_tutor_turn({}).has_value());
  }

  TEST_CASE("rule policy") {
    CHECK(rule_policy({0, 2, std::nullopt, {}}).str() == "AskWH(colour)");
    CHECK(rule_policy({1, 1, std::nullopt, {}}).str() == "AskPolar(colour)");
    CHECK(rule_policy({2, 0, std::nullopt, {}}).str() == "AskWH(shape)");
    CHECK(rule_policy({2, 2, ActKind::Inform, CategorySet::both()}).kind == LearnerActionKind::Ack);
  }

  TEST_CASE("baseline schedules") {
    CHECK(baseline_threshold_schedule(Schedule::Constant95, 37) == 0.95);
    CHECK(baseline_threshold_schedule(Schedule::Decay05, 3) == 0.80);
    CHECK(baseline_threshold_schedule(Schedule::Decay01, 49) == 0.65);
    for (int b = 0; b < kBins; ++b)
      for (auto k : {Schedule::Constant95, Schedule::Decay05, Schedule::Decay01}) {
        double v = baseline_threshold_schedule(k, b);
        CHECK(v >= 0.65);
        CHECK(v <= 0.95);
      }
  }

  TEST_CASE("selected actions are always legal") {
    Rng rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    QTable q;
    for (int t = 0; t < 2000; ++t) {
      std::array<double, 2> conf{u(rng), u(rng)};
      if (t % 7 == 0) conf[0] = 0.5;
      std::vector<std::uint8_t> legal;
      for (std::uint8_t i = 0; i < kLearnerActionCount; ++i)
        if (is_legal(LearnerAction::from_index(i), conf)) legal.push_back(i);
      q.set(0, static_cast<std::uint8_t>(rng() % kLearnerActionCount), u(rng));
      auto a = LearnerAction::from_index(select_action(q, 0, legal, 0.2, rng));
      CHECK(is_legal(a, conf));
      if (a.kind == LearnerActionKind::Inform || a.kind == LearnerActionKind::AskPolar)
        for (auto c : a.target.members()) CHECK(conf[index_of(c)] > 0.5);
      if (a.kind == LearnerActionKind::DoNotKnow)
        for (auto c : a.target.members()) CHECK(conf[index_of(c)] <= 0.5);
    }
  }

  TEST_CASE("guess, partial rejection, question, answer") {
    GroundingMap map;
    set_bias(map, "red", 2.0);
    set_bias(map, "square", 2.0);
    auto obj = object_of("red", "triangle");
    TutorModel tutor(TutorConfig{1.0, 0.0, {}});
    ConditionKey key;
    key.kind = ActKind::Inform;
    key.categories = CategorySet::both();
    key.verdicts = {Verdict::Correct, Verdict::Wrong};
    tutor.set_outcomes(key, {{parse_tags("Ack(colour) Reject(shape)"), 1.0}});
    GuessFirst policy;
    Rng t(1), p(2), n(3);
    auto res = run_dialogue_episode(policy, map, tutor, obj, 0.95, EpisodeRules{}, {t, p, n});
    std::vector<std::string> got;
    for (const auto& turn : res.turns) got.push_back(std::string(to_string(turn.actor)) + ":" + tags(turn.acts));
    CHECK(got == std::vector<std::string>{"tutor:Ask(colour&shape)", "learner:Inform(colour:red&shape:square)",
                                          "tutor:Ack(colour) Reject(shape)", "learner:Ask(shape)",
                                          "tutor:Inform(shape:triangle)", "learner:Ack()"});
    CHECK(res.ledger.total() == 6.0);
    CHECK(res.penalties == 0);
    CHECK(res.reward == 4.0);
    CHECK(res.steps == 2);
  }

  TEST_CASE("known objects give a zero-turn episode") {
    GroundingMap map;
    set_bias(map, "red", 8.0);
    set_bias(map, "square", 8.0);
    auto obj = object_of("red", "square");
    TutorModel tutor(TutorConfig{1.0, 0.0, {}});
    RulePolicy policy;
    Rng t(1), p(2), n(3);
    Rng t0 = t;
    auto res = run_dialogue_episode(policy, map, tutor, obj, 0.95, EpisodeRules{}, {t, p, n});
    CHECK(res.turns.empty());
    CHECK(res.ledger.total() == 0.0);
    CHECK(res.reward == 10.0);
    CHECK(t == t0);
  }

  TEST_CASE("a learner that only listens hits the cap") {
    GroundingMap map;
    auto obj = object_of("blue", "circle");
    TutorModel tutor(TutorConfig{1.0, 0.0, {}});
    AlwaysListen policy;
    Rng t(1), p(2), n(3);
    auto res = run_dialogue_episode(policy, map, tutor, obj, 0.95, EpisodeRules{}, {t, p, n});
    CHECK(res.capped);
    CHECK(res.penalties > 0);
    // The cap is checked after each tutor turn; the closing Ack comes on top.
    CHECK(res.turns.size() <= 32);
    CHECK(res.reward < 10.0);
  }

  TEST_CASE("episodes terminate with reward at most ten and states in range") {
    WorldConfig wc;
    wc.seed = 9;
    auto data = generate_dataset(wc);
    TutorModel tutor;
    QTable q;
    SarsaPolicy learner(q, SarsaConfig{}, true);
    GroundingMap map(wc.inventory, wc.shape_bins, ClassifierConfig{3.0, 0.0});
    Rng t(1), p(2), n(3);
    for (std::size_t i = 0; i < 300; ++i) {
      auto res = run_dialogue_episode(learner, map, tutor, data.train[i], 0.8, EpisodeRules{}, {t, p, n});
      CHECK(res.reward <= 10.0);
      CHECK(res.turns.size() <= 32);
    }
    CHECK(q.size() > 0);
    for (const auto& [key, v] : q.values()) {
      CHECK(key.first < kDialogueStateCount);
      CHECK(key.second < kLearnerActionCount);
      CHECK(std::isfinite(v));
    }
  }

  TEST_CASE("Q-table text round trip") {
    QTable q(0.0);
    q.set(DialogueState{1, 2, ActKind::Reject, {Category::Colour}}.code(), 3, -1.25);
    q.visit(DialogueState{1, 2, ActKind::Reject, {Category::Colour}}.code(), 3);
    q.set(0, 13, 0.1);
    std::stringstream ss;
    save_dialogue_q(ss, q);
    CHECK(load_dialogue_q(ss) == q);
    std::stringstream wrong;
    save_dialogue_q(wrong, q);
    CHECK_THROWS_AS(load_threshold_q(wrong), Error);
  }

  TEST_CASE("learning runs are reproducible and the thresholds follow the schedules") {
    WorldConfig wc;
    auto data = generate_dataset(wc);
    AgentConfig cfg;
    TutorModel tutor;
    std::vector<std::size_t> order(100);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto a = run_learning(Condition::Decay05, cfg, data, order, tutor, nullptr, false, 42);
    auto b = run_learning(Condition::Decay05, cfg, data, order, tutor, nullptr, false, 42);
    REQUIRE(a.curve.size() == 10);
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      CHECK(a.curve[i].cumulative_cost == b.curve[i].cumulative_cost);
      CHECK(a.curve[i].accuracy.per_attribute() == b.curve[i].accuracy.per_attribute());
      CHECK(a.curve[i].threshold == baseline_threshold_schedule(Schedule::Decay05, static_cast<int>(i)));
      CHECK(a.curve[i].instances == static_cast<int>(10 * (i + 1)));
      if (i) CHECK(a.curve[i].cumulative_cost >= a.curve[i - 1].cumulative_cost);
    }
    RlTables tables;
    auto rl = run_learning(Condition::Rl, cfg, data, order, tutor, &tables, true, 42);
    for (const auto& pt : rl.curve) CHECK_NOTHROW(threshold_index(pt.threshold));
    for (const auto& [key, v] : tables.threshold.values()) {
      CHECK(key.first < kThresholdStateCount);
      CHECK(std::isfinite(v));
    }
  }
}
