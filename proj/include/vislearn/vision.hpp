#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vislearn/common.hpp"
#include "vislearn/world.hpp"

namespace vislearn {

struct ClassifierConfig {
  double learning_rate = 0.1;
  double l2 = 0.0;
};

/// Online logistic regression grounding one attribute word. The weight vector
/// holds one entry per feature followed by the bias.
class AttributeClassifier {
 public:
  AttributeClassifier(std::string word, Category category, std::size_t feature_dim,
                      ClassifierConfig config = {});

  const std::string& word() const { return word_; }
  Category category() const { return category_; }
  std::size_t feature_dim() const { return weights_.size() - 1; }
  std::span<const double> weights() const { return weights_; }
  std::size_t updates_seen() const { return updates_seen_; }
  const ClassifierConfig& config() const { return config_; }

  /// Throws Error if the size differs from feature_dim() + 1 or any value is non-finite.
  void set_weights(std::vector<double> weights);
  void set_updates_seen(std::size_t n) { updates_seen_ = n; }

  /// w . x + bias
  double score(std::span<const double> features) const;
  /// Sigmoid of score(), clamped into the open interval (0, 1).
  double predict_proba(std::span<const double> features) const;

  /// Log loss of the current weights against a (possibly soft) target.
  double log_loss(std::span<const double> features, double target) const;
  /// d log_loss / d w, bias last.
  std::vector<double> gradient(std::span<const double> features, double target) const;

  /// w <- w - lr * ((sigma(w.x) - y) x + l2 w); bias is not regularised.
  void sgd_step(std::span<const double> features, int label);
  /// Same update against a soft target in [0, 1].
  void sgd_step_soft(std::span<const double> features, double target);

 private:
  void check(std::span<const double> features) const;

  std::string word_;
  Category category_;
  std::vector<double> weights_;
  ClassifierConfig config_;
  std::size_t updates_seen_ = 0;
};

enum class PredictionStatus : int { Unknown = 0, Uncertain = 1, Known = 2 };

/// Three-level status of a prediction against the positive threshold:
/// 2 if conf >= threshold, 1 if 0.5 < conf < threshold, 0 otherwise.
/// `provided` forces 2 (the tutor has given this attribute in the current dialogue).
PredictionStatus status(double confidence, double pos_threshold, bool provided = false);

struct Prediction {
  std::string word;
  double confidence = 0.5;
};

/// The learner's word meanings: one classifier per inventory word.
class GroundingMap {
 public:
  explicit GroundingMap(AttributeInventory inventory = AttributeInventory::default_inventory(),
                        std::size_t shape_dim = kDefaultShapeBins, ClassifierConfig config = {});

  const AttributeInventory& inventory() const { return inventory_; }
  const AttributeClassifier& classifier(std::string_view word) const;
  AttributeClassifier& classifier(std::string_view word);
  const std::vector<AttributeClassifier>& classifiers() const { return classifiers_; }

  /// Highest-probability word of the category; ties resolve to inventory order.
  Prediction best_prediction(Category category, std::span<const double> features) const;
  /// Every word of the category with its probability, in inventory order.
  std::vector<Prediction> confidences(Category category, std::span<const double> features) const;

  /// One positive step for `word` and one negative step for every other word of
  /// its category, all on the object's features for that category.
  void learn_from_label(const VisualObject& object, std::string_view word);

  /// Versioned text format, see docs/formats.md.
  void save(std::ostream& out) const;
  static GroundingMap load(std::istream& in);

  friend bool operator==(const GroundingMap& a, const GroundingMap& b);

 private:
  std::size_t index(std::string_view word) const;

  AttributeInventory inventory_;
  std::vector<AttributeClassifier> classifiers_;
  std::map<std::string, std::size_t, std::less<>> by_word_;
};

/// Fraction of objects whose argmax word matches the label, per category.
struct AccuracyReport {
  double colour = 0;
  double shape = 0;
  double joint = 0;  // both categories right
  double per_attribute() const { return 0.5 * (colour + shape); }
};

AccuracyReport evaluate(const GroundingMap& map, std::span<const VisualObject> objects);

}  // namespace vislearn
