#include <doctest.h>

#include <set>

#include "vislearn/dialogue.hpp"
#include "vislearn/policy.hpp"

using namespace vislearn;

namespace {

const TemplateLexicon& en() { return TemplateLexicon::default_english(); }

// Every concrete learner act the policies can produce, over every word.
std::vector<DialogueAct> learner_acts() {
  auto inv = AttributeInventory::default_inventory();
  std::vector<DialogueAct> out;
  for (std::uint8_t i = 0; i < kLearnerActionCount; ++i) {
    auto a = LearnerAction::from_index(i);
    switch (a.kind) {
      case LearnerActionKind::AskWH:
        out.push_back(DialogueAct::of(ActKind::Ask, a.target));
        break;
      case LearnerActionKind::DoNotKnow:
        out.push_back(DialogueAct::of(ActKind::DoNotKnow, a.target));
        break;
      case LearnerActionKind::Ack:
        out.push_back(DialogueAct::of(ActKind::Ack));
        break;
      case LearnerActionKind::Listen:
        break;
      case LearnerActionKind::AskPolar:
      case LearnerActionKind::Inform:
        for (const auto& c : inv.colours)
          for (const auto& s : inv.shapes) {
            std::optional<std::string> cw, sw;
            if (a.target.has(Category::Colour)) cw = c;
            if (a.target.has(Category::Shape)) sw = s;
            out.push_back(a.kind == LearnerActionKind::Inform ? DialogueAct::inform(cw, sw) : DialogueAct::polar(cw, sw));
          }
        break;
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("dialogue") {
  TEST_CASE("tag round trip") {
    for (const char* t : {"Inform(colour:red&shape:square)", "Ask(colour)", "Ack()", "Reject(shape)", "Listen()",
                          "Polar(colour:blue)", "DoNotKnow(colour&shape)"})
      CHECK(parse_tag(t).tag() == t);
    // Templates use word-less claims, so slot checks live in validate().
    CHECK_THROWS_AS(parse_tag("Inform(colour)").validate(), Error);
    CHECK_THROWS_AS(parse_tag("Ask(colour:red)").validate(), Error);
    CHECK_NOTHROW(parse_tag("Inform(colour:red)").validate());
    CHECK_THROWS_AS(parse_tag("Wave()"), Error);
    CHECK(tags(parse_tags("Reject(colour) Inform(colour:blue)")) == "Reject(colour) Inform(colour:blue)");
  }

  TEST_CASE("generation examples") {
    Rng rng(3);
    auto red_square = DialogueAct::inform("red", "square");
    std::set<std::string> informs{"a red square.", "this is a red square."};
    CHECK(informs.count(en().generate(Actor::Tutor, {red_square}, rng)));
    CHECK(en().generate(Actor::Tutor, {DialogueAct::of(ActKind::Ask, {Category::Colour})}, rng) ==
          "what colour is this?");
    std::set<std::string> acks{"okay, got it.", "cool, got it."};
    for (int i = 0; i < 10; ++i) CHECK(acks.count(en().generate(Actor::Learner, {DialogueAct::of(ActKind::Ack)}, rng)));
    CHECK_THROWS_AS(en().generate(Actor::Learner, {DialogueAct::of(ActKind::Focus, {Category::Colour})}, rng), Error);
  }

  TEST_CASE("parse examples") {
    auto correction = en().parse("no, it is blue");
    REQUIRE(correction);
    CHECK(tags(*correction) == "Reject(colour) Inform(colour:blue)");
    auto yes = en().parse("Yes!");
    REQUIRE(yes);
    CHECK(tags(*yes) == "Ack()");
    CHECK_FALSE(en().parse("asdfgh").has_value());
    auto partial = en().parse("the colour is right, but the shape is not");
    REQUIRE(partial);
    CHECK(tags(*partial) == "Ack(colour) Reject(shape)");
  }

  TEST_CASE("every learner act survives generate then parse") {
    Rng rng(5);
    for (const auto& act : learner_acts()) {
      for (int k = 0; k < 3; ++k) {
        auto text = en().generate(Actor::Learner, {act}, rng);
        auto back = en().parse(text, Actor::Learner);
        REQUIRE_MESSAGE(back, text);
        CHECK_MESSAGE(*back == Turn{act}, text);
      }
    }
  }

  TEST_CASE("every default tutor turn survives generate then parse") {
    auto inv = AttributeInventory::default_inventory();
    Rng rng(9);
    std::vector<Turn> turns;
    for (auto cats : {CategorySet{Category::Colour}, CategorySet{Category::Shape}, CategorySet::both()}) {
      turns.push_back({DialogueAct::of(ActKind::Ask, cats)});
      turns.push_back({DialogueAct::of(ActKind::Ack, cats)});
      turns.push_back({DialogueAct::of(ActKind::Reject, cats)});
      for (const auto& c : inv.colours)
        for (const auto& s : inv.shapes) {
          std::optional<std::string> cw, sw;
          if (cats.has(Category::Colour)) cw = c;
          if (cats.has(Category::Shape)) sw = s;
          turns.push_back({DialogueAct::inform(cw, sw)});
          turns.push_back({DialogueAct::of(ActKind::Reject, cats), DialogueAct::inform(cw, sw)});
        }
    }
    turns.push_back({DialogueAct::of(ActKind::Ack)});
    turns.push_back({DialogueAct::of(ActKind::Reject)});
    turns.push_back({DialogueAct::of(ActKind::Ack, {Category::Colour}), DialogueAct::of(ActKind::Reject, {Category::Shape})});
    turns.push_back({DialogueAct::of(ActKind::Retry)});
    turns.push_back({DialogueAct::of(ActKind::Focus, {Category::Shape})});
    for (const auto& t : turns) {
      auto text = en().generate(Actor::Tutor, t, rng);
      auto back = en().parse(text, Actor::Tutor);
      REQUIRE_MESSAGE(back, text);
      CHECK_MESSAGE(*back == normalize(t), text);
    }
  }

  TEST_CASE("actor legality") {
    for (auto k : {ActKind::Reject, ActKind::Focus, ActKind::CLr, ActKind::Help, ActKind::Check, ActKind::Repeat,
                   ActKind::Retry}) {
      CHECK(actor_may(Actor::Tutor, k));
      CHECK_FALSE(actor_may(Actor::Learner, k));
    }
    for (auto k : {ActKind::CLrRequest, ActKind::HelpRequest, ActKind::DoNotKnow}) {
      CHECK(actor_may(Actor::Learner, k));
      CHECK_FALSE(actor_may(Actor::Tutor, k));
    }
    DialogueContext ctx(1);
    CHECK_THROWS_AS(ctx.update(Actor::Learner, {DialogueAct::of(ActKind::Reject)}, ""), Error);
    CHECK_THROWS_AS(ctx.update(Actor::Tutor, {DialogueAct::of(ActKind::DoNotKnow, {Category::Colour})}, ""), Error);
    CHECK(ctx.turns().empty());
  }

  TEST_CASE("context updates") {
    DialogueContext ctx(1);
    ctx.update(Actor::Learner, {DialogueAct::of(ActKind::Ask, {Category::Shape})}, "what shape is this?");
    CHECK(ctx.discussed() == CategorySet{Category::Shape});
    CHECK(ctx.provided().empty());
    ctx.update(Actor::Tutor, {DialogueAct::inform("red", std::nullopt)}, "red.");
    CHECK(ctx.provided() == CategorySet{Category::Colour});

    DialogueContext conf(2);
    conf.update(Actor::Learner, {DialogueAct::inform("red", std::nullopt)}, "it is red.");
    conf.update(Actor::Tutor, {DialogueAct::of(ActKind::Ack, {Category::Colour})}, "yes, the colour is right.");
    CHECK(conf.provided() == CategorySet{Category::Colour});

    DialogueContext ref(3);
    ref.update(Actor::Learner, {DialogueAct::polar("red", std::nullopt)}, "is it red?");
    ref.update(Actor::Tutor, {DialogueAct::of(ActKind::Reject)}, "no.");
    CHECK(ref.refuted() == CategorySet{Category::Colour});
    CHECK(ref.provided().empty());
  }

  TEST_CASE("discussed and provided never shrink") {
    Rng rng(17);
    auto acts = learner_acts();
    for (int trial = 0; trial < 200; ++trial) {
      DialogueContext ctx(trial);
      CategorySet discussed, provided;
      for (int t = 0; t < 8; ++t) {
        const auto& a = acts[rng() % acts.size()];
        ctx.update(Actor::Learner, {a}, "");
        Turn reply = (rng() % 2) ? Turn{DialogueAct::of(ActKind::Ack)}
                                 : Turn{DialogueAct::of(ActKind::Reject), DialogueAct::inform("blue", "circle")};
        ctx.update(Actor::Tutor, reply, "");
        CHECK(ctx.discussed().contains(discussed));
        CHECK(ctx.provided().contains(provided));
        discussed = ctx.discussed();
        provided = ctx.provided();
      }
    }
  }

  TEST_CASE("made-up word lexicon swaps surfaces only") {
    auto burchak = TemplateLexicon::load(VISLEARN_DATA_DIR "/lexicon_burchak.txt");
    Rng rng(1);
    auto text = burchak.generate(Actor::Tutor, {DialogueAct::inform("black", std::nullopt)}, rng);
    CHECK(text.find("pelin") != std::string::npos);
    auto back = burchak.parse(text);
    REQUIRE(back);
    CHECK(tags(*back) == "Inform(colour:black)");
  }
}
