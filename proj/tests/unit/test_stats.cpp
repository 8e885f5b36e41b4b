#include <doctest.h>

#include <cmath>
#include <vector>

#include "subnet_walk/stats.hpp"

using namespace subnet_walk;

TEST_CASE("aggregate of constant values") {
  const std::vector<double> v(5, 3.0);
  const auto a = aggregate_seeds(v);
  CHECK(a.mean == 3.0);
  CHECK(*a.std == 0.0);
  CHECK(*a.ci95 == 0.0);
  CHECK(a.values == v);
}

TEST_CASE("aggregate of one value has no spread") {
  const std::vector<double> v{2.5};
  const auto a = aggregate_seeds(v);
  CHECK(a.mean == 2.5);
  CHECK_FALSE(a.std);
  CHECK_FALSE(a.ci95);
}

TEST_CASE("aggregate of 1..5") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  const auto a = aggregate_seeds(v);
  CHECK(a.mean == 3.0);
  CHECK(*a.std == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
  CHECK(*a.ci95 == doctest::Approx(2.7764 * std::sqrt(2.5) / std::sqrt(5.0)).epsilon(1e-12));
  CHECK(*a.ci95 == doctest::Approx(1.9633).epsilon(1e-4));
  CHECK_THROWS_AS(aggregate_seeds(std::vector<double>{}), DomainError);
}

TEST_CASE("t critical values") {
  CHECK(t_critical_95(1) == 12.7062);
  CHECK(t_critical_95(4) == 2.7764);
  CHECK(t_critical_95(30) == 2.0423);
  CHECK(t_critical_95(40) == doctest::Approx(2.0211));
  CHECK(t_critical_95(120) == doctest::Approx(1.9799));
  CHECK(t_critical_95(50) < t_critical_95(40));
  CHECK(t_critical_95(50) > t_critical_95(60));
  CHECK(t_critical_95(1000000) == doctest::Approx(1.96).epsilon(1e-4));
  double prev = 1e9;
  for (std::size_t df = 1; df < 500; ++df) {
    CHECK(t_critical_95(df) <= prev);
    prev = t_critical_95(df);
  }
  CHECK_THROWS_AS(t_critical_95(0), DomainError);
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK(median({7}) == 7.0);
  CHECK_THROWS_AS(median({}), DomainError);
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1}, c{5, 5, 5, 5};
  CHECK(*pearson(x, y) == doctest::Approx(1.0));
  CHECK(*pearson(x, z) == doctest::Approx(-1.0));
  CHECK_FALSE(pearson(x, c));
  CHECK_FALSE(pearson(std::vector<double>{1}, std::vector<double>{2}));
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), ShapeError);
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 1, 4, 3, 5};
  CHECK(*pearson(a, b) == doctest::Approx(0.8).epsilon(1e-12));
}
