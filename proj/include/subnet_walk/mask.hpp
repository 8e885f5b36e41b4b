#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subnet_walk/rng.hpp"

namespace subnet_walk {

/// Binary dropout mask over the d parameters of a network; one vertex of the
/// d-dimensional hypercube.
///
/// Bits are packed most-significant-first: parameter i lives in word i / 64 at
/// bit position 63 - i % 64. Padding bits past d are always zero, so word-wise
/// comparisons and popcounts are exact.
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::size_t d, bool value = false);

  static Mask ones(std::size_t d) { return Mask(d, true); }
  static Mask zeros(std::size_t d) { return Mask(d, false); }

  /// Mask whose bit i equals bit i of `index`; used to enumerate all 2^d
  /// masks for small d.
  static Mask from_index(std::size_t d, std::uint64_t index);

  std::size_t size() const noexcept { return d_; }

  bool test(std::size_t i) const noexcept {
    return (words_[i >> 6] >> (63 - (i & 63))) & 1u;
  }
  void set(std::size_t i, bool value) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (63 - (i & 63));
    if (value)
      words_[i >> 6] |= bit;
    else
      words_[i >> 6] &= ~bit;
  }
  void flip(std::size_t i) noexcept {
    words_[i >> 6] ^= std::uint64_t{1} << (63 - (i & 63));
  }

  std::size_t popcount() const noexcept;

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  /// "d=<d>:<hex>", lowercase, ceil(d/4) hex digits, MSB = parameter 0.
  std::string to_string() const;
  static Mask parse(std::string_view text);

  friend bool operator==(const Mask&, const Mask&) = default;
  friend std::strong_ordering operator<=>(const Mask& a, const Mask& b) {
    if (auto c = a.d_ <=> b.d_; c != 0) return c;
    return a.words_ <=> b.words_;
  }

 private:
  std::size_t d_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Draws M ~ Bernoulli(p)^d.
Mask sample_mask(std::size_t d, double p, SeededRng& rng);

std::size_t hamming(const Mask& a, const Mask& b);

/// `count` distinct masks, each exactly k bit flips away from `base`.
std::vector<Mask> flip_neighbors(const Mask& base, std::size_t k,
                                 std::size_t count, SeededRng& rng);

}  // namespace subnet_walk
