#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "subnet_walk/error.hpp"

namespace subnet_walk {

/// Two-sided 95% Student-t critical value for `df` degrees of freedom.
inline double t_critical_95(std::size_t df) {
  // df = 1..30
  static constexpr std::array<double, 30> kTable = {
      12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060, 2.2622, 2.2281,
      2.2010,  2.1788, 2.1604, 2.1448, 2.1314, 2.1199, 2.1098, 2.1009, 2.0930, 2.0860,
      2.0796,  2.0739, 2.0687, 2.0639, 2.0595, 2.0555, 2.0518, 2.0484, 2.0452, 2.0423};
  if (df == 0) throw DomainError("t critical value needs df >= 1");
  if (df <= kTable.size()) return kTable[df - 1];
  // Beyond the table, interpolate linearly in 1/df between known anchors.
  struct Anchor {
    double df, t;
  };
  static constexpr std::array<Anchor, 5> kAnchors = {
      Anchor{30, 2.0423}, Anchor{40, 2.0211}, Anchor{60, 2.0003}, Anchor{120, 1.9799},
      Anchor{1e300, 1.9600}};
  const double x = 1.0 / static_cast<double>(df);
  for (std::size_t k = 0; k + 1 < kAnchors.size(); ++k) {
    const double x0 = 1.0 / kAnchors[k].df;
    const double x1 = 1.0 / kAnchors[k + 1].df;
    if (x <= x0 && x >= x1) {
      const double w = (x - x1) / (x0 - x1);
      return kAnchors[k + 1].t + w * (kAnchors[k].t - kAnchors[k + 1].t);
    }
  }
  return 1.96;
}

struct SeedAggregate {
  std::vector<double> values;
  double mean = 0.0;
  std::optional<double> std;   // sample standard deviation (n - 1)
  std::optional<double> ci95;  // t(n-1) * std / sqrt(n)
};

inline SeedAggregate aggregate_seeds(std::span<const double> values) {
  if (values.empty()) throw DomainError("cannot aggregate an empty list");
  SeedAggregate a;
  a.values.assign(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / n;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / (n - 1.0));
    a.ci95 = t_critical_95(values.size() - 1) * *a.std / std::sqrt(n);
  }
  return a;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Pearson correlation; absent when either variable is (numerically) constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: lengths differ");
  if (x.size() < 2) return std::nullopt;
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const auto flat = [n](double ss, double m) {
    return std::sqrt(ss / n) <= 1e-12 * std::max(1.0, std::abs(m));
  };
  if (flat(sxx, mx) || flat(syy, my)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace subnet_walk
