#include <doctest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "vislearn/tutor.hpp"

using namespace vislearn;

namespace {

VisualObject truth(const std::string& colour, const std::string& shape) {
  VisualObject o;
  o.colour_label = colour;
  o.shape_label = shape;
  return o;
}

TutorResponse answer(const TutorModel& tutor, const DialogueAct& learner, const VisualObject& obj, Rng& rng) {
  DialogueContext ctx(0);
  ctx.update(Actor::Learner, {learner}, "");
  return tutor.respond(learner, ctx, obj, rng);
}

double sum(const std::vector<CostEntry>& costs) {
  double s = 0;
  for (const auto& c : costs) s += c.cost;
  return s;
}

// A partly trained learner so that claims, polar questions and questions all occur.
GroundingMap partly_trained(const Dataset& data, std::size_t n) {
  GroundingMap map(AttributeInventory::default_inventory(), kDefaultShapeBins, ClassifierConfig{3.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    map.learn_from_label(data.train[i], data.train[i].colour_label);
    map.learn_from_label(data.train[i], data.train[i].shape_label);
  }
  return map;
}

}  // namespace

TEST_SUITE("tutor") {
  TEST_CASE("initiative extremes and the binomial count") {
    auto obj = truth("red", "square");
    Rng rng(1);
    TutorModel always(TutorConfig{1.0, 0.0, {}});
    TutorModel never(TutorConfig{0.0, 0.0, {}});
    for (int i = 0; i < 100; ++i) {
      auto t = always.open_dialogue(obj, rng);
      REQUIRE(t.size() == 1);
      CHECK(t[0].kind == ActKind::Ask);
      CHECK(never.open_dialogue(obj, rng).empty());
    }
    TutorModel half;
    int opened = 0;
    Rng seeded(20170901);
    for (int i = 0; i < 10000; ++i) opened += half.open_dialogue(obj, seeded).empty() ? 0 : 1;
    CHECK(opened >= 4850);
    CHECK(opened <= 5150);
  }

  TEST_CASE("partly wrong statement is acknowledged, rejected and corrected") {
    TutorModel tutor;
    Rng rng(2);
    auto r = answer(tutor, DialogueAct::inform("red", "triangle"), truth("red", "square"), rng);
    CHECK(tags(r.acts) == "Ack(colour) Reject(shape) Inform(shape:square)");
    CHECK(r.utterance.rfind("the colour is right, but the shape is not", 0) == 0);
    CHECK(sum(r.costs) == 5.5);
  }

  TEST_CASE("questions and correct statements") {
    TutorModel tutor;
    Rng rng(3);
    auto ask = answer(tutor, DialogueAct::of(ActKind::Ask, {Category::Colour}), truth("green", "circle"), rng);
    CHECK(tags(ask.acts) == "Inform(colour:green)");
    CHECK(sum(ask.costs) == 5.0);
    auto ok = answer(tutor, DialogueAct::inform("green", std::nullopt), truth("green", "circle"), rng);
    CHECK(tags(ok.acts) == "Ack(colour)");
    CHECK(sum(ok.costs) == 0.5);
    auto dk = answer(tutor, DialogueAct::of(ActKind::DoNotKnow, CategorySet::both()), truth("green", "circle"), rng);
    CHECK(tags(dk.acts) == "Inform(colour:green&shape:circle)");
    CHECK(sum(dk.costs) == 10.0);
  }

  TEST_CASE("polar answers") {
    TutorModel tutor;
    Rng rng(4);
    auto yes = answer(tutor, DialogueAct::polar("blue", std::nullopt), truth("blue", "square"), rng);
    CHECK(tags(yes.acts) == "Ack(colour)");
    CHECK(sum(yes.costs) == 0.5);
    auto no = answer(tutor, DialogueAct::polar("red", std::nullopt), truth("blue", "square"), rng);
    CHECK(tags(no.acts) == "Reject(colour) Inform(colour:blue)");
    CHECK(sum(no.costs) == 5.5);
  }

  TEST_CASE("single observation gives weight one") {
    std::istringstream corpus("object colour=red shape=square\nL: Ask(colour)\nT: Inform(colour:red)\n");
    auto model = TutorModel::fit(corpus);
    REQUIRE(model.table().size() == 1);
    const auto& [key, outcomes] = *model.table().begin();
    CHECK(key.str() == "Ask(colour)");
    REQUIRE(outcomes.size() == 1);
    CHECK(outcomes[0].weight == 1.0);
  }

  TEST_CASE("fitted outcome frequencies are recovered") {
    std::ostringstream text;
    for (int i = 0; i < 100; ++i) {
      text << "object colour=blue shape=circle\nL: Inform(colour:red)\n";
      text << (i < 70 ? "T: Reject(colour)\n" : "T: Reject(colour) Inform(colour:blue)\n");
    }
    std::istringstream corpus(text.str());
    auto model = TutorModel::fit(corpus);
    Rng rng(99);
    int with_inform = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      auto r = answer(model, DialogueAct::inform("red", std::nullopt), truth("blue", "circle"), rng);
      bool informs = false;
      for (const auto& a : r.acts) informs |= a.kind == ActKind::Inform;
      with_inform += informs ? 1 : 0;
    }
    CHECK(std::abs(with_inform / double(draws) - 0.30) <= 0.03);
  }

  TEST_CASE("corpus errors") {
    std::istringstream empty("# nothing here\n");
    CHECK_THROWS_AS(TutorModel::fit(empty), Error);
    std::istringstream bad_turn("object colour=red shape=square\nX: Ask(colour)\n");
    CHECK_THROWS_AS(TutorModel::fit(bad_turn), Error);
    std::istringstream wrong_actor("object colour=red shape=square\nL: Reject(colour)\n");
    CHECK_THROWS_AS(TutorModel::fit(wrong_actor), Error);
  }

  TEST_CASE("action table save and load round trip") {
    std::istringstream corpus(
        "object colour=red shape=square\nL: Inform(colour:blue)\nT: Reject(colour)\n"
        "object colour=red shape=square\nL: Inform(colour:blue)\nT: Reject(colour) Inform(colour:red)\n");
    auto model = TutorModel::fit(corpus);
    std::ostringstream out;
    model.save(out);
    auto path = std::filesystem::temp_directory_path() / "vislearn_table_roundtrip.txt";
    {
      std::ofstream f(path);
      f << out.str();
    }
    auto back = TutorModel::load(path);
    std::ostringstream again;
    back.save(again);
    CHECK(again.str() == out.str());
    std::filesystem::remove(path);
  }

  TEST_CASE("simulated dialogues are truthful, cost-conserving and short") {
    WorldConfig wc;
    wc.seed = 5;
    auto data = generate_dataset(wc);
    TutorModel tutor;
    oracle::RandomPolicy random;
    RulePolicy rule;
    for (int i = 0; i < 300; ++i) {
      auto map = partly_trained(data, static_cast<std::size_t>(i % 12));
      const auto& obj = data.train[static_cast<std::size_t>(100 + i)];
      Rng t(derive_seed(i, 1)), p(derive_seed(i, 2)), n(derive_seed(i, 3));
      auto res = run_dialogue_episode(random, map, tutor, obj, 0.95, EpisodeRules{}, {t, p, n});
      const DialogueAct* last_claim = nullptr;
      for (const auto& turn : res.turns) {
        if (turn.actor == Actor::Learner) {
          last_claim = !turn.acts.empty() && turn.acts.back().is_claim() ? &turn.acts.back() : nullptr;
          continue;
        }
        for (const auto& a : turn.acts) {
          if (a.kind == ActKind::Inform)
            for (auto c : a.categories.members()) CHECK(*a.word(c) == obj.label(c));
          if (a.kind == ActKind::Ack && last_claim) {
            auto cats = a.categories.empty() ? last_claim->categories : a.categories;
            for (auto c : cats.members()) CHECK(*last_claim->word(c) == obj.label(c));
          }
        }
      }
      CHECK(res.ledger.total() == oracle::count_costs(res.turns).total());

      auto fresh = partly_trained(data, 0);
      Rng t2(derive_seed(i, 1)), p2(derive_seed(i, 2)), n2(derive_seed(i, 3));
      auto asked = run_dialogue_episode(rule, fresh, tutor, obj, 0.95, EpisodeRules{}, {t2, p2, n2});
      CHECK(asked.turns.size() <= 20);
      CHECK_FALSE(asked.capped);
    }
  }

  TEST_CASE("probabilities are validated") {
    CHECK_THROWS_AS(TutorModel(TutorConfig{1.5, 0.0, {}}), Error);
    CHECK_THROWS_AS(TutorModel(TutorConfig{0.5, -0.1, {}}), Error);
  }
}
