#include "vislearn/world.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace vislearn {

namespace {

struct ColourPrototype {
  std::string_view name;
  std::array<double, kColourDim> hsv;
};

constexpr std::array<ColourPrototype, 6> kColourTable{{
    {"black", {0.00, 0.10, 0.10}},
    {"blue", {0.62, 0.90, 0.85}},
    {"green", {0.33, 0.35, 0.85}},
    {"orange", {0.08, 0.90, 0.40}},
    {"purple", {0.78, 0.55, 0.15}},
    {"red", {0.00, 0.90, 0.90}},
}};

constexpr double kShapePeak = 0.8;

// Gaussian noise truncated so that centre + noise stays inside [lo, hi].
double truncated_noise(Rng& rng, double sigma, double centre, double lo, double hi) {
  std::normal_distribution<double> normal(0.0, sigma);
  for (;;) {
    double v = centre + normal(rng);
    if (v >= lo && v <= hi) return v;
  }
}

std::vector<std::size_t> balanced_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

void check_balance_feasible(std::size_t n, std::size_t classes, std::string_view what) {
  std::size_t lo = n / classes;
  std::size_t hi = lo + (n % classes ? 1 : 0);
  if (lo == 0 || static_cast<double>(hi) > 1.5 * static_cast<double>(lo))
    throw Error("cannot balance " + std::to_string(n) + " " + std::string(what) + " objects over " +
                std::to_string(classes) + " classes within ratio 1.5");
}

VisualObject make_object(const WorldConfig& cfg, int id, std::size_t colour, std::size_t shape,
                         Rng& rng) {
  const auto& inv = cfg.inventory;
  VisualObject obj;
  obj.id = id;
  obj.colour_label = inv.colours[colour];
  obj.shape_label = inv.shapes[shape];
  auto cproto = prototype(inv, obj.colour_label, cfg.shape_bins);
  auto sproto = prototype(inv, obj.shape_label, cfg.shape_bins);
  if (cfg.noise_sigma == 0.0) {
    std::copy(cproto.begin(), cproto.end(), obj.colour_features.begin());
    obj.shape_features = std::move(sproto);
    return obj;
  }
  for (std::size_t k = 0; k < kColourDim; ++k)
    obj.colour_features[k] = truncated_noise(rng, cfg.noise_sigma, cproto[k], 0.0, 1.0);
  obj.shape_features.resize(sproto.size());
  for (std::size_t k = 0; k < sproto.size(); ++k)
    obj.shape_features[k] = truncated_noise(rng, cfg.noise_sigma, sproto[k], 0.0, 1.0);
  double total = std::accumulate(obj.shape_features.begin(), obj.shape_features.end(), 0.0);
  if (total <= 0.0) {
    obj.shape_features = sproto;
  } else {
    for (auto& v : obj.shape_features) v /= total;
  }
  return obj;
}

std::string join_features(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

std::vector<double> parse_features(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_ws(text)) out.push_back(parse_double(tok));
  return out;
}

}  // namespace

AttributeInventory AttributeInventory::default_inventory() {
  return {{"black", "blue", "green", "orange", "purple", "red"}, {"circle", "square", "triangle"}};
}

void AttributeInventory::validate() const {
  if (colours.empty() || shapes.empty()) throw Error("inventory needs at least one colour and one shape");
  std::set<std::string> seen;
  for (const auto* list : {&colours, &shapes})
    for (const auto& w : *list) {
      if (w.empty()) throw Error("empty attribute name");
      if (!seen.insert(w).second) throw Error("duplicate attribute name: " + w);
    }
}

std::optional<Category> AttributeInventory::category_of(std::string_view word) const {
  if (std::find(colours.begin(), colours.end(), word) != colours.end()) return Category::Colour;
  if (std::find(shapes.begin(), shapes.end(), word) != shapes.end()) return Category::Shape;
  return std::nullopt;
}

std::optional<std::size_t> AttributeInventory::index_in_category(std::string_view word) const {
  for (auto c : kCategories) {
    const auto& list = words(c);
    auto it = std::find(list.begin(), list.end(), word);
    if (it != list.end()) return static_cast<std::size_t>(it - list.begin());
  }
  return std::nullopt;
}

std::vector<double> prototype(const AttributeInventory& inventory, std::string_view name,
                              std::size_t shape_bins) {
  auto cat = inventory.category_of(name);
  if (!cat) throw Error("unknown attribute: " + std::string(name));
  if (*cat == Category::Colour) {
    for (const auto& entry : kColourTable)
      if (entry.name == name) return {entry.hsv.begin(), entry.hsv.end()};
    throw Error("no colour prototype for: " + std::string(name));
  }
  std::size_t idx = *inventory.index_in_category(name);
  if (shape_bins < 2 || idx >= shape_bins)
    throw Error("shape '" + std::string(name) + "' does not fit into " + std::to_string(shape_bins) +
                " histogram bins");
  std::vector<double> hist(shape_bins, (1.0 - kShapePeak) / static_cast<double>(shape_bins - 1));
  hist[idx] = kShapePeak;
  return hist;
}

Dataset generate_dataset(const WorldConfig& config) {
  config.inventory.validate();
  if (config.train_size < 1 || config.test_size < 1) throw Error("train_size and test_size must be >= 1");
  if (!(config.noise_sigma >= 0.0) || !std::isfinite(config.noise_sigma))
    throw Error("noise_sigma must be a non-negative finite number");
  const std::size_t nc = config.inventory.colours.size();
  const std::size_t ns = config.inventory.shapes.size();
  check_balance_feasible(config.train_size, nc, "train");
  check_balance_feasible(config.train_size, ns, "train");
  check_balance_feasible(config.test_size, nc, "test");
  check_balance_feasible(config.test_size, ns, "test");
  // Fail early on inventories without prototypes.
  for (auto c : kCategories)
    for (const auto& w : config.inventory.words(c)) (void)prototype(config.inventory, w, config.shape_bins);

  Rng rng(config.seed);
  Dataset data;
  int next_id = 0;
  for (auto [size, out] : {std::pair{config.train_size, &data.train}, std::pair{config.test_size, &data.test}}) {
    auto colours = balanced_labels(size, nc, rng);
    auto shapes = balanced_labels(size, ns, rng);
    out->reserve(size);
    for (std::size_t i = 0; i < size; ++i)
      out->push_back(make_object(config, next_id++, colours[i], shapes[i], rng));
  }
  return data;
}

double class_imbalance_ratio(const AttributeInventory& inventory, std::span<const VisualObject> objects) {
  double worst = 1.0;
  for (auto c : kCategories) {
    std::map<std::string, std::size_t> counts;
    for (const auto& w : inventory.words(c)) counts[w] = 0;
    for (const auto& o : objects) ++counts[o.label(c)];
    std::size_t lo = SIZE_MAX, hi = 0;
    for (auto& [w, n] : counts) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    if (lo == 0) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, static_cast<double>(hi) / static_cast<double>(lo));
  }
  return worst;
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "# vislearn-dataset v1\n";
  for (auto [split, list] : {std::pair{"train", &data.train}, std::pair{"test", &data.test}})
    for (const auto& o : *list)
      out << o.id << '\t' << split << '\t' << o.colour_label << '\t' << o.shape_label << '\t'
          << join_features(o.colour_features) << '\t' << join_features(o.shape_features) << '\n';
}

Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# vislearn-dataset v1", 0) == 0) header = true;
      continue;
    }
    if (!header) throw Error("dataset: missing '# vislearn-dataset v1' header");
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 6) throw Error("dataset line " + std::to_string(lineno) + ": expected 6 fields");
    VisualObject o;
    o.id = std::stoi(fields[0]);
    o.colour_label = fields[2];
    o.shape_label = fields[3];
    auto colour = parse_features(fields[4]);
    if (colour.size() != kColourDim)
      throw Error("dataset line " + std::to_string(lineno) + ": colour features need 3 values");
    std::copy(colour.begin(), colour.end(), o.colour_features.begin());
    o.shape_features = parse_features(fields[5]);
    if (fields[1] == "train")
      data.train.push_back(std::move(o));
    else if (fields[1] == "test")
      data.test.push_back(std::move(o));
    else
      throw Error("dataset line " + std::to_string(lineno) + ": unknown split '" + fields[1] + "'");
  }
  return data;
}

}  // namespace vislearn
