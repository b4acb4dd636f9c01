#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "vislearn/vision.hpp"
#include "vislearn/world.hpp"

using namespace vislearn;

namespace {

VisualObject prototype_object(const AttributeInventory& inv, const std::string& colour, const std::string& shape) {
  VisualObject o;
  o.colour_label = colour;
  o.shape_label = shape;
  auto c = prototype(inv, colour);
  std::copy(c.begin(), c.end(), o.colour_features.begin());
  o.shape_features = prototype(inv, shape);
  return o;
}

}  // namespace

TEST_SUITE("vision") {
  TEST_CASE("untrained classifier predicts one half") {
    AttributeClassifier clf("red", Category::Colour, 3);
    std::vector<double> x{0.3, 0.7, 0.1};
    CHECK(clf.predict_proba(x) == 0.5);
  }

  TEST_CASE("bias of ten gives sigmoid(10)") {
    AttributeClassifier clf("red", Category::Colour, 3);
    clf.set_weights({0, 0, 0, 10});
    std::vector<double> x{0.3, 0.7, 0.1};
    CHECK(clf.predict_proba(x) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-15));
    CHECK_THROWS_AS(clf.set_weights({0, 0, 0}), Error);
    CHECK_THROWS_AS(clf.set_weights({0, 0, NAN, 0}), Error);
  }

  TEST_CASE("one SGD step from zero weights") {
    AttributeClassifier clf("red", Category::Colour, 3, ClassifierConfig{0.1, 0.0});
    std::vector<double> x{1, 0, 0};
    clf.sgd_step(x, 1);
    auto w = clf.weights();
    CHECK(w[0] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(w[1] == 0.0);
    CHECK(w[2] == 0.0);
    CHECK(w[3] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(clf.updates_seen() == 1);
  }

  TEST_CASE("gradient matches central finite differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> wdist(-1.5, 1.5), xdist(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      AttributeClassifier clf("w", Category::Shape, 8);
      std::vector<double> w(9), x(8);
      for (auto& v : w) v = wdist(rng);
      for (auto& v : x) v = xdist(rng);
      clf.set_weights(w);
      const double y = xdist(rng);
      auto g = clf.gradient(x, y);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double h = 1e-5;
        auto wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        AttributeClassifier p("w", Category::Shape, 8), m("w", Category::Shape, 8);
        p.set_weights(wp);
        m.set_weights(wm);
        const double fd = (p.log_loss(x, y) - m.log_loss(x, y)) / (2 * h);
        CHECK(std::abs(fd - g[i]) <= 1e-4 * std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
      }
    }
  }

  TEST_CASE("target equal to the prediction is a fixed point") {
    AttributeClassifier clf("red", Category::Colour, 3);
    clf.set_weights({0.4, -0.2, 0.7, 0.1});
    std::vector<double> x{0.5, 0.25, 0.75};
    auto before = std::vector<double>(clf.weights().begin(), clf.weights().end());
    clf.sgd_step_soft(x, clf.predict_proba(x));
    auto after = clf.weights();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-15));
  }

  TEST_CASE("probabilities stay in the open unit interval") {
    AttributeClassifier clf("red", Category::Colour, 3);
    clf.set_weights({1e6, 1e6, 1e6, 1e6});
    std::vector<double> x{1, 1, 1};
    CHECK(clf.predict_proba(x) < 1.0);
    clf.set_weights({-1e6, -1e6, -1e6, -1e6});
    CHECK(clf.predict_proba(x) > 0.0);
  }

  TEST_CASE("status levels") {
    CHECK(status(0.97, 0.95) == PredictionStatus::Known);
    CHECK(status(0.95, 0.95) == PredictionStatus::Known);
    CHECK(status(0.50, 0.95) == PredictionStatus::Unknown);
    CHECK(status(0.70, 0.95) == PredictionStatus::Uncertain);
    CHECK(status(0.10, 0.95, true) == PredictionStatus::Known);
  }

  TEST_CASE("best prediction ties and dominance") {
    GroundingMap map;
    std::vector<double> x{0.2, 0.2, 0.2};
    auto p = map.best_prediction(Category::Colour, x);
    CHECK(p.word == "black");
    CHECK(p.confidence == 0.5);
    map.classifier("purple").set_weights({0, 0, 0, 5});
    CHECK(map.best_prediction(Category::Colour, x).word == "purple");
  }

  TEST_CASE("a label updates its category one-vs-rest and leaves the other untouched") {
    GroundingMap map;
    auto inv = map.inventory();
    auto obj = prototype_object(inv, "red", "square");
    map.learn_from_label(obj, "red");
    CHECK(map.classifier("red").weights().back() > 0);
    for (const auto& w : inv.colours)
      if (w != "red") CHECK(map.classifier(w).weights().back() < 0);
    for (const auto& w : inv.shapes) {
      CHECK(map.classifier(w).updates_seen() == 0);
      for (double v : map.classifier(w).weights()) CHECK(v == 0.0);
    }
    map.learn_from_label(obj, "square");
    for (const auto& w : inv.colours) CHECK(map.classifier(w).updates_seen() == 1);
    CHECK_THROWS_AS(map.learn_from_label(obj, "mauve"), Error);
  }

  TEST_CASE("repeated labels on one zero-noise object exceed 0.9") {
    GroundingMap map;
    auto obj = prototype_object(map.inventory(), "red", "square");
    for (int i = 0; i < 200; ++i) map.learn_from_label(obj, "red");
    CHECK(map.classifier("red").predict_proba(obj.features(Category::Colour)) > 0.9);
  }

  TEST_CASE("balanced training on zero-noise data") {
    WorldConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.train_size = 200;
    cfg.test_size = 60;
    auto data = generate_dataset(cfg);
    GroundingMap map(cfg.inventory, cfg.shape_bins, ClassifierConfig{3.0, 0.0});
    for (const auto& o : data.train) {
      map.learn_from_label(o, o.colour_label);
      map.learn_from_label(o, o.shape_label);
    }
    auto acc = evaluate(map, data.test);
    CHECK(acc.per_attribute() >= 0.95);
    auto green = prototype_object(map.inventory(), "green", "square");
    for (int i = 0; i < 200; ++i) map.learn_from_label(green, "green");
    auto best = map.best_prediction(Category::Colour, green.features(Category::Colour));
    CHECK(best.word == "green");
    CHECK(best.confidence > 0.9);
  }

  TEST_CASE("identical step sequences give identical weights") {
    WorldConfig cfg;
    cfg.train_size = 40;
    auto data = generate_dataset(cfg);
    GroundingMap a, b;
    for (const auto& o : data.train) {
      a.learn_from_label(o, o.colour_label);
      b.learn_from_label(o, o.colour_label);
    }
    CHECK(a == b);
  }

  TEST_CASE("grounding map save and load round trip") {
    WorldConfig cfg;
    cfg.train_size = 30;
    auto data = generate_dataset(cfg);
    GroundingMap map;
    for (const auto& o : data.train) map.learn_from_label(o, o.shape_label);
    std::stringstream ss;
    map.save(ss);
    auto back = GroundingMap::load(ss);
    CHECK(back == map);
    std::istringstream bad("nonsense\n");
    CHECK_THROWS_AS(GroundingMap::load(bad), Error);
  }
}
