#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vislearn {

using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Category : std::uint8_t { Colour = 0, Shape = 1 };

inline constexpr std::array<Category, 2> kCategories{Category::Colour, Category::Shape};

inline constexpr std::size_t index_of(Category c) { return static_cast<std::size_t>(c); }

std::string_view to_string(Category c);

/// Accepts "colour", "color" and "shape" (case-sensitive, lowercase).
std::optional<Category> parse_category(std::string_view text);

/// Small value-type set over the two attribute categories.
class CategorySet {
 public:
  constexpr CategorySet() = default;
  constexpr CategorySet(std::initializer_list<Category> cats) {
    for (auto c : cats) add(c);
  }
  static constexpr CategorySet both() { return CategorySet{Category::Colour, Category::Shape}; }

  constexpr bool has(Category c) const { return (bits_ >> index_of(c)) & 1U; }
  constexpr void add(Category c) { bits_ |= static_cast<std::uint8_t>(1U << index_of(c)); }
  constexpr void remove(Category c) { bits_ &= static_cast<std::uint8_t>(~(1U << index_of(c))); }
  constexpr void add(CategorySet other) { bits_ |= other.bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool full() const { return bits_ == 3; }
  constexpr std::size_t size() const { return (bits_ & 1U) + ((bits_ >> 1) & 1U); }
  constexpr bool contains(CategorySet other) const { return (bits_ & other.bits_) == other.bits_; }
  constexpr CategorySet intersect(CategorySet other) const { return from_bits(bits_ & other.bits_); }
  constexpr CategorySet minus(CategorySet other) const {
    return from_bits(static_cast<std::uint8_t>(bits_ & ~other.bits_));
  }
  constexpr std::uint8_t bits() const { return bits_; }
  static constexpr CategorySet from_bits(std::uint8_t b) {
    CategorySet s;
    s.bits_ = static_cast<std::uint8_t>(b & 3U);
    return s;
  }
  std::vector<Category> members() const;

  friend constexpr auto operator<=>(CategorySet, CategorySet) = default;

 private:
  std::uint8_t bits_ = 0;
};

/// "colour", "shape", "colour&shape" or "" for the empty set.
std::string to_string(CategorySet s);

/// splitmix64 finaliser over (master, stream); used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// 64-bit FNV-1a, stable across platforms and builds.
std::uint64_t fnv1a64(std::string_view bytes);

/// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
double uniform01(Rng& rng);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

/// Parses a full string as a double; throws Error on trailing garbage.
double parse_double(std::string_view text);

std::vector<std::string> split_ws(std::string_view line);

std::string_view trim(std::string_view s);

}  // namespace vislearn
