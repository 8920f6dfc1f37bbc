#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "lmf/error.hpp"
#include "lmf/potential.hpp"
#include "oracles.hpp"

using namespace lmf;

TEST_CASE("potential rejects non-confining coefficient sets") {
  CHECK_THROWS_AS(Potential({0.0, 0.0, 1.0}), InvalidArgument);             // degree 2
  CHECK_THROWS_AS(Potential({0.0, 0.0, 0.0, 1.0}), InvalidArgument);        // odd degree
  CHECK_THROWS_AS(Potential({0.0, 0.0, 0.0, 0.0, 2.0}), InvalidArgument);   // leading coefficient
  CHECK_THROWS_AS(Potential({0.0, NAN, 0.0, 0.0, 1.0}), InvalidArgument);
  CHECK_NOTHROW(Potential({0.3, 0.0, -1.0, 0.2, 1.0}));
  CHECK_NOTHROW(Potential({0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0}));
}

TEST_CASE("potential values and derivatives match the polynomial") {
  const Potential p({0.5, -0.25, -1.0, 0.3, 1.0});
  for (double x : {-2.0, -0.7, 0.0, 0.4, 1.9}) {
    const double v = 0.5 - 0.25 * x - x * x + 0.3 * x * x * x + x * x * x * x;
    const double d1 = -0.25 - 2.0 * x + 0.9 * x * x + 4.0 * x * x * x;
    const double d2 = -2.0 + 1.8 * x + 12.0 * x * x;
    CHECK(p.value(x) == doctest::Approx(v).epsilon(1e-14));
    CHECK(p.first_derivative(x) == doctest::Approx(d1).epsilon(1e-14));
    CHECK(p.second_derivative(x) == doctest::Approx(d2).epsilon(1e-14));
  }
}

TEST_CASE("grid validation: too few points and truncated tails") {
  const auto p = Potential::quartic();
  CHECK_THROWS_AS(ThetaGrid(p, 2.5, 32), InvalidArgument);
  CHECK_THROWS_AS(ThetaGrid(p, 1.0, 512), InvalidArgument);
  CHECK_NOTHROW(ThetaGrid(p, 2.5, 512));
}

TEST_CASE("grid nodes are symmetric and equally spaced") {
  const ThetaGrid grid(Potential::quartic(), 2.5, 513);
  const auto x = grid.nodes();
  CHECK(x.front() == -2.5);
  CHECK(x.back() == 2.5);
  for (int j = 0; j < grid.size(); ++j) CHECK(x[j] == -x[grid.size() - 1 - j]);
  CHECK(x[256] == 0.0);
  CHECK(grid.spacing() == doctest::Approx(5.0 / 512).epsilon(1e-15));
}

TEST_CASE("Gibbs partition function against the closed form") {
  // int exp(-2 theta^4) d theta = 2 Gamma(5/4) 2^{-1/4}
  const ThetaGrid grid(Potential::quartic(), 2.5, 512);
  const std::vector<double> one(grid.size(), 1.0);
  const double exact = 2.0 * std::tgamma(1.25) * std::pow(2.0, -0.25);
  CHECK(weighted_mass(grid, one) == doctest::Approx(exact).epsilon(1e-10));
}

TEST_CASE("tilted Gibbs density is normalized with the quadrature moment") {
  const ThetaGrid grid(Potential({0.0, 0.0, -0.5, 0.0, 1.0}), 2.5, 512);
  for (double b : {-0.4, 0.0, 0.3, 0.8}) {
    const auto rho = tilted_gibbs_density(grid, b);
    CHECK(weighted_mass(grid, rho) == doctest::Approx(1.0).epsilon(1e-13));
    auto w = [b](double t) { return std::exp(2.0 * b * t - 2.0 * (t * t * t * t - 0.5 * t * t)); };
    const double z = oracle::integrate(w, -4.0, 4.0);
    const double m = oracle::integrate([&](double t) { return t * w(t); }, -4.0, 4.0) / z;
    CHECK(weighted_first_moment(grid, rho) == doctest::Approx(m).epsilon(1e-9));
  }
}

TEST_CASE("weighted inner product, norm and first moment") {
  const ThetaGrid grid(Potential::quartic(), 2.5, 512);
  const auto f = grid.sample([](double t) { return 1.0 + t; });
  const auto g = grid.sample([](double t) { return t * t; });
  auto w = [](double t) { return std::exp(-2.0 * t * t * t * t); };
  const double fg = oracle::integrate([&](double t) { return (1.0 + t) * t * t * w(t); }, -4.0, 4.0);
  CHECK(weighted_inner(grid, f, g) == doctest::Approx(fg).epsilon(1e-10));
  const double ff = oracle::integrate([&](double t) { return (1.0 + t) * (1.0 + t) * w(t); }, -4.0, 4.0);
  CHECK(weighted_norm(grid, f) == doctest::Approx(std::sqrt(ff)).epsilon(1e-10));
  CHECK(weighted_first_moment(grid, g) == doctest::Approx(0.0).epsilon(1e-14));
  const std::vector<double> short_vec(10, 1.0);
  CHECK_THROWS_AS(weighted_inner(grid, f, short_vec), InvalidArgument);
}

TEST_CASE("normalize_density rejects invalid input") {
  const ThetaGrid grid(Potential::quartic(), 2.5, 128);
  std::vector<double> rho(grid.size(), 1.0);
  const auto n = normalize_density(grid, rho);
  CHECK(weighted_mass(grid, n) == doctest::Approx(1.0).epsilon(1e-14));
  rho[5] = -1.0;
  CHECK_THROWS_AS(normalize_density(grid, rho), InvalidArgument);
  std::vector<double> zero(grid.size(), 0.0);
  CHECK_THROWS_AS(normalize_density(grid, zero), InvalidArgument);
  rho[5] = NAN;
  CHECK_THROWS_AS(normalize_density(grid, rho), InvalidArgument);
}
