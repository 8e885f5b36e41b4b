#include "subnet_walk/mask.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <set>

#include "subnet_walk/error.hpp"

namespace subnet_walk {

namespace {

constexpr std::size_t words_for(std::size_t d) { return (d + 63) / 64; }

void clear_padding(std::vector<std::uint64_t>& words, std::size_t d) {
  if (d % 64 != 0 && !words.empty())
    words.back() &= ~std::uint64_t{0} << (64 - d % 64);
}

// C(n, k) as a long double; saturates gracefully for huge values.
long double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0L;
  k = std::min(k, n - k);
  long double c = 1.0L;
  for (std::size_t i = 1; i <= k; ++i)
    c = c * static_cast<long double>(n - k + i) / static_cast<long double>(i);
  return std::round(c);
}

Mask flipped(const Mask& base, const std::vector<std::size_t>& positions) {
  Mask m = base;
  for (auto p : positions) m.flip(p);
  return m;
}

}  // namespace

Mask::Mask(std::size_t d, bool value)
    : d_(d), words_(words_for(d), value ? ~std::uint64_t{0} : 0) {
  clear_padding(words_, d_);
}

Mask Mask::from_index(std::size_t d, std::uint64_t index) {
  if (d > 64) throw DomainError("Mask::from_index supports d <= 64");
  Mask m(d);
  for (std::size_t i = 0; i < d; ++i) m.set(i, (index >> i) & 1u);
  return m;
}

std::size_t Mask::popcount() const noexcept {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::string Mask::to_string() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "d=" + std::to_string(d_) + ":";
  const std::size_t digits = (d_ + 3) / 4;
  out.reserve(out.size() + digits);
  for (std::size_t h = 0; h < digits; ++h) {
    const std::uint64_t w = words_[h / 16];
    out.push_back(kHex[(w >> (60 - 4 * (h % 16))) & 0xf]);
  }
  return out;
}

Mask Mask::parse(std::string_view text) {
  if (!text.starts_with("d="))
    throw FormatError("mask must start with \"d=\": " + std::string(text));
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw FormatError("mask is missing ':' separator");
  std::size_t d = 0;
  const auto digits_d = text.substr(2, colon - 2);
  auto [ptr, ec] =
      std::from_chars(digits_d.data(), digits_d.data() + digits_d.size(), d);
  if (ec != std::errc{} || ptr != digits_d.data() + digits_d.size())
    throw FormatError("bad mask length: " + std::string(digits_d));
  const auto hex = text.substr(colon + 1);
  if (hex.size() != (d + 3) / 4)
    throw LengthError("mask hex length " + std::to_string(hex.size()) +
                      " does not match d=" + std::to_string(d));
  Mask m(d);
  for (std::size_t h = 0; h < hex.size(); ++h) {
    const char c = hex[h];
    std::uint64_t v = 0;
    if (c >= '0' && c <= '9')
      v = static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f')
      v = static_cast<std::uint64_t>(c - 'a' + 10);
    else
      throw FormatError(std::string("invalid hex digit '") + c + "' in mask");
    m.words_[h / 16] |= v << (60 - 4 * (h % 16));
  }
  const auto before = m.words_;
  clear_padding(m.words_, d);
  if (before != m.words_)
    throw FormatError("mask has bits set beyond d=" + std::to_string(d));
  return m;
}

Mask sample_mask(std::size_t d, double p, SeededRng& rng) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DomainError("retain probability must lie in [0, 1], got " +
                      std::to_string(p));
  if (d < 1) throw DomainError("mask length must be at least 1");
  Mask m(d);
  for (std::size_t i = 0; i < d; ++i)
    if (rng.uniform() < p) m.set(i, true);
  return m;
}

std::size_t hamming(const Mask& a, const Mask& b) {
  if (a.size() != b.size())
    throw ShapeError("hamming: mask lengths differ (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  const auto wa = a.words();
  const auto wb = b.words();
  std::size_t n = 0;
  for (std::size_t i = 0; i < wa.size(); ++i)
    n += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
  return n;
}

std::vector<Mask> flip_neighbors(const Mask& base, std::size_t k,
                                 std::size_t count, SeededRng& rng) {
  const std::size_t d = base.size();
  if (k < 1 || k > d)
    throw DomainError("flip count k must satisfy 1 <= k <= d");
  if (count < 1) throw DomainError("neighbor count must be at least 1");
  const long double available = binomial(d, k);
  if (static_cast<long double>(count) > available)
    throw ExhaustionError("requested " + std::to_string(count) +
                          " distinct " + std::to_string(k) +
                          "-flip neighbors but only C(d,k) exist");

  std::vector<Mask> out;
  out.reserve(count);

  // Small neighborhoods that are mostly requested: enumerate and shuffle.
  if (available <= 1.0e6L &&
      static_cast<long double>(count) * 4.0L >= available) {
    std::vector<std::vector<std::size_t>> all;
    std::vector<bool> select(d, false);
    std::fill(select.begin(), select.begin() + static_cast<long>(k), true);
    do {
      std::vector<std::size_t> positions;
      for (std::size_t i = 0; i < d; ++i)
        if (select[i]) positions.push_back(i);
      all.push_back(std::move(positions));
    } while (std::prev_permutation(select.begin(), select.end()));
    rng.shuffle(all);
    for (std::size_t i = 0; i < count; ++i) out.push_back(flipped(base, all[i]));
    return out;
  }

  std::set<std::vector<std::size_t>> seen;
  while (out.size() < count) {
    std::vector<std::size_t> positions;
    positions.reserve(k);
    while (positions.size() < k) {
      const auto p = static_cast<std::size_t>(rng.below(d));
      if (std::find(positions.begin(), positions.end(), p) == positions.end())
        positions.push_back(p);
    }
    std::sort(positions.begin(), positions.end());
    if (seen.insert(positions).second) out.push_back(flipped(base, positions));
  }
  return out;
}

}  // namespace subnet_walk
