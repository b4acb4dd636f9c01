#include "vislearn/vision.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace vislearn {

namespace {

constexpr double kProbFloor = 1e-15;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

AttributeClassifier::AttributeClassifier(std::string word, Category category, std::size_t feature_dim,
                                         ClassifierConfig config)
    : word_(std::move(word)), category_(category), weights_(feature_dim + 1, 0.0), config_(config) {
  if (feature_dim == 0) throw Error("classifier needs at least one feature");
  if (!(config_.learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (!(config_.l2 >= 0.0)) throw Error("l2 must be non-negative");
}

void AttributeClassifier::set_weights(std::vector<double> weights) {
  if (weights.size() != weights_.size())
    throw Error("classifier '" + word_ + "': expected " + std::to_string(weights_.size()) + " weights");
  for (double w : weights)
    if (!std::isfinite(w)) throw Error("classifier '" + word_ + "': non-finite weight");
  weights_ = std::move(weights);
}

void AttributeClassifier::check(std::span<const double> features) const {
  if (features.size() != feature_dim())
    throw Error("classifier '" + word_ + "': feature dimension " + std::to_string(features.size()) +
                ", expected " + std::to_string(feature_dim()));
}

double AttributeClassifier::score(std::span<const double> features) const {
  check(features);
  double z = weights_.back();
  for (std::size_t i = 0; i < features.size(); ++i) z += weights_[i] * features[i];
  return z;
}

double AttributeClassifier::predict_proba(std::span<const double> features) const {
  return std::clamp(sigmoid(score(features)), kProbFloor, 1.0 - kProbFloor);
}

double AttributeClassifier::log_loss(std::span<const double> features, double target) const {
  // log(1 + e^z) - y z, written to stay finite for large |z|.
  double z = score(features);
  double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - target * z;
}

std::vector<double> AttributeClassifier::gradient(std::span<const double> features, double target) const {
  double err = sigmoid(score(features)) - target;
  std::vector<double> g(weights_.size());
  for (std::size_t i = 0; i < features.size(); ++i) g[i] = err * features[i];
  g.back() = err;
  return g;
}

void AttributeClassifier::sgd_step(std::span<const double> features, int label) {
  if (label != 0 && label != 1) throw Error("label must be 0 or 1");
  sgd_step_soft(features, static_cast<double>(label));
}

void AttributeClassifier::sgd_step_soft(std::span<const double> features, double target) {
  check(features);
  for (double x : features)
    if (!std::isfinite(x)) throw Error("classifier '" + word_ + "': non-finite feature");
  auto g = gradient(features, target);
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i + 1 < weights_.size(); ++i) weights_[i] -= lr * (g[i] + config_.l2 * weights_[i]);
  weights_.back() -= lr * g.back();
  ++updates_seen_;
}

PredictionStatus status(double confidence, double pos_threshold, bool provided) {
  if (provided) return PredictionStatus::Known;
  if (confidence >= pos_threshold) return PredictionStatus::Known;
  if (confidence > 0.5) return PredictionStatus::Uncertain;
  return PredictionStatus::Unknown;
}

GroundingMap::GroundingMap(AttributeInventory inventory, std::size_t shape_dim, ClassifierConfig config)
    : inventory_(std::move(inventory)) {
  inventory_.validate();
  for (auto c : kCategories) {
    std::size_t dim = c == Category::Colour ? kColourDim : shape_dim;
    for (const auto& w : inventory_.words(c)) {
      by_word_.emplace(w, classifiers_.size());
      classifiers_.emplace_back(w, c, dim, config);
    }
  }
}

std::size_t GroundingMap::index(std::string_view word) const {
  auto it = by_word_.find(word);
  if (it == by_word_.end()) throw Error("unknown attribute word: " + std::string(word));
  return it->second;
}

const AttributeClassifier& GroundingMap::classifier(std::string_view word) const {
  return classifiers_[index(word)];
}

AttributeClassifier& GroundingMap::classifier(std::string_view word) { return classifiers_[index(word)]; }

std::vector<Prediction> GroundingMap::confidences(Category category, std::span<const double> features) const {
  std::vector<Prediction> out;
  for (const auto& w : inventory_.words(category))
    out.push_back({w, classifiers_[index(w)].predict_proba(features)});
  return out;
}

Prediction GroundingMap::best_prediction(Category category, std::span<const double> features) const {
  Prediction best{"", -1.0};
  for (const auto& w : inventory_.words(category)) {
    double p = classifiers_[index(w)].predict_proba(features);
    if (p > best.confidence) best = {w, p};
  }
  return best;
}

void GroundingMap::learn_from_label(const VisualObject& object, std::string_view word) {
  auto cat = inventory_.category_of(word);
  if (!cat) throw Error("unknown attribute word: " + std::string(word));
  auto features = object.features(*cat);
  for (const auto& w : inventory_.words(*cat)) classifiers_[index(w)].sgd_step(features, w == word ? 1 : 0);
}

void GroundingMap::save(std::ostream& out) const {
  out << "# vislearn-grounding v1\n";
  out << "colours";
  for (const auto& w : inventory_.colours) out << ' ' << w;
  out << "\nshapes";
  for (const auto& w : inventory_.shapes) out << ' ' << w;
  out << '\n';
  for (const auto& c : classifiers_) {
    out << "classifier " << c.word() << ' ' << to_string(c.category()) << ' '
        << format_double(c.config().learning_rate) << ' ' << format_double(c.config().l2) << ' '
        << c.updates_seen() << ' ' << c.weights().size();
    for (double w : c.weights()) out << ' ' << format_double(w);
    out << '\n';
  }
}

GroundingMap GroundingMap::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# vislearn-grounding v1")
    throw Error("grounding: missing '# vislearn-grounding v1' header");
  AttributeInventory inv;
  inv.colours.clear();
  inv.shapes.clear();
  struct Row {
    std::string word;
    ClassifierConfig cfg;
    std::size_t updates;
    std::vector<double> weights;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok[0] == "colours") {
      inv.colours.assign(tok.begin() + 1, tok.end());
    } else if (tok[0] == "shapes") {
      inv.shapes.assign(tok.begin() + 1, tok.end());
    } else if (tok[0] == "classifier") {
      if (tok.size() < 7) throw Error("grounding: short classifier line");
      Row r{tok[1], {parse_double(tok[3]), parse_double(tok[4])}, std::stoul(tok[5]), {}};
      std::size_t n = std::stoul(tok[6]);
      if (tok.size() != 7 + n) throw Error("grounding: weight count mismatch for " + r.word);
      for (std::size_t i = 0; i < n; ++i) r.weights.push_back(parse_double(tok[7 + i]));
      rows.push_back(std::move(r));
    } else {
      throw Error("grounding: unexpected line '" + line + "'");
    }
  }
  if (rows.size() != inv.size()) throw Error("grounding: expected one classifier per inventory word");
  std::size_t shape_dim = kDefaultShapeBins;
  ClassifierConfig cfg = rows.front().cfg;
  for (const auto& r : rows)
    if (inv.category_of(r.word) == Category::Shape) shape_dim = r.weights.size() - 1;
  GroundingMap map(inv, shape_dim, cfg);
  for (auto& r : rows) {
    auto& c = map.classifier(r.word);
    AttributeClassifier restored(r.word, c.category(), c.feature_dim(), r.cfg);
    restored.set_weights(std::move(r.weights));
    restored.set_updates_seen(r.updates);
    c = std::move(restored);
  }
  return map;
}

bool operator==(const GroundingMap& a, const GroundingMap& b) {
  if (a.inventory_.colours != b.inventory_.colours || a.inventory_.shapes != b.inventory_.shapes) return false;
  for (std::size_t i = 0; i < a.classifiers_.size(); ++i) {
    const auto& x = a.classifiers_[i];
    const auto& y = b.classifiers_[i];
    if (x.updates_seen() != y.updates_seen()) return false;
    if (!std::equal(x.weights().begin(), x.weights().end(), y.weights().begin(), y.weights().end()))
      return false;
  }
  return true;
}

AccuracyReport evaluate(const GroundingMap& map, std::span<const VisualObject> objects) {
  AccuracyReport r;
  if (objects.empty()) return r;
  std::size_t colour = 0, shape = 0, joint = 0;
  for (const auto& o : objects) {
    bool c = map.best_prediction(Category::Colour, o.features(Category::Colour)).word == o.colour_label;
    bool s = map.best_prediction(Category::Shape, o.features(Category::Shape)).word == o.shape_label;
    colour += c;
    shape += s;
    joint += (c && s);
  }
  double n = static_cast<double>(objects.size());
  r.colour = static_cast<double>(colour) / n;
  r.shape = static_cast<double>(shape) / n;
  r.joint = static_cast<double>(joint) / n;
  return r;
}

}  // namespace vislearn
