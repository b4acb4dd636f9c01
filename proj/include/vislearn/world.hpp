#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vislearn/common.hpp"

namespace vislearn {

/// Attribute words known to the world, in canonical order.
struct AttributeInventory {
  std::vector<std::string> colours;
  std::vector<std::string> shapes;

  /// black, blue, green, orange, purple, red / circle, square, triangle.
  static AttributeInventory default_inventory();

  /// Throws Error on empty categories or duplicate names across both lists.
  void validate() const;

  const std::vector<std::string>& words(Category c) const {
    return c == Category::Colour ? colours : shapes;
  }
  std::optional<Category> category_of(std::string_view word) const;
  /// Position of `word` inside its category list.
  std::optional<std::size_t> index_in_category(std::string_view word) const;
  std::size_t size() const { return colours.size() + shapes.size(); }
};

inline constexpr std::size_t kColourDim = 3;
inline constexpr std::size_t kDefaultShapeBins = 8;

struct VisualObject {
  int id = 0;
  std::string colour_label;
  std::string shape_label;
  std::array<double, kColourDim> colour_features{};
  std::vector<double> shape_features;

  std::span<const double> features(Category c) const {
    if (c == Category::Colour) return colour_features;
    return shape_features;
  }
  const std::string& label(Category c) const {
    return c == Category::Colour ? colour_label : shape_label;
  }
};

struct WorldConfig {
  AttributeInventory inventory = AttributeInventory::default_inventory();
  double noise_sigma = 0.08;
  std::size_t train_size = 500;
  std::size_t test_size = 100;
  std::size_t shape_bins = kDefaultShapeBins;
  std::uint64_t seed = 1;
};

struct Dataset {
  std::vector<VisualObject> train;
  std::vector<VisualObject> test;
};

/// Colour prototypes are HSV-like triples chosen so that every colour is
/// linearly separable from the others (each is a vertex of their convex hull):
///
///   black  (0.00, 0.10, 0.10)     orange (0.08, 0.90, 0.40)
///   blue   (0.62, 0.90, 0.85)     purple (0.78, 0.55, 0.15)
///   green  (0.33, 0.35, 0.85)     red    (0.00, 0.90, 0.90)
///
/// Shape i of the inventory puts mass 0.8 on histogram bin i and spreads
/// 0.2 evenly over the remaining bins. Throws Error for names outside the
/// inventory, or for colours missing from the table above.
std::vector<double> prototype(const AttributeInventory& inventory, std::string_view name,
                              std::size_t shape_bins = kDefaultShapeBins);

/// Ids 0..train_size-1 go to train, the following ids to test. Labels are
/// assigned round-robin per category and shuffled, so class counts differ by
/// at most one. Throws Error when that still violates the 1.5 balance ratio.
Dataset generate_dataset(const WorldConfig& config);

/// Largest over smallest class count across both categories of `objects`.
double class_imbalance_ratio(const AttributeInventory& inventory,
                             std::span<const VisualObject> objects);

/// Line-delimited text format, one object per line:
///   id <TAB> split <TAB> colour <TAB> shape <TAB> c0 c1 c2 <TAB> s0 ... sD-1
/// preceded by a "# vislearn-dataset v1" header line.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);

}  // namespace vislearn
