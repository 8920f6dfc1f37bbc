#include "lmf/potential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lmf/error.hpp"

namespace lmf {
namespace {

std::vector<double> derivative_coefficients(const std::vector<double>& c) {
  std::vector<double> d;
  for (std::size_t i = 1; i < c.size(); ++i) d.push_back(static_cast<double>(i) * c[i]);
  if (d.empty()) d.push_back(0.0);
  return d;
}

double horner(const std::vector<double>& c, double x) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

void check_length(const ThetaGrid& grid, std::span<const double> f) {
  if (static_cast<int>(f.size()) != grid.size()) {
    throw InvalidArgument("grid function has " + std::to_string(f.size()) + " entries, grid has " +
                          std::to_string(grid.size()));
  }
}

}  // namespace

Potential::Potential(std::vector<double> coefficients) : coeffs_(std::move(coefficients)) {
  const int deg = degree();
  if (deg < 4 || deg % 2 != 0) {
    throw InvalidArgument("potential degree must be even and >= 4, got " + std::to_string(deg));
  }
  if (coeffs_.back() != 1.0) throw InvalidArgument("potential leading coefficient must be exactly 1");
  for (double c : coeffs_) {
    if (!std::isfinite(c)) throw InvalidArgument("potential coefficients must be finite");
  }
  d1_ = derivative_coefficients(coeffs_);
  d2_ = derivative_coefficients(d1_);
}

Potential Potential::quartic() { return Potential({0.0, 0.0, 0.0, 0.0, 1.0}); }

double Potential::value(double theta) const { return horner(coeffs_, theta); }
double Potential::first_derivative(double theta) const { return horner(d1_, theta); }
double Potential::second_derivative(double theta) const { return horner(d2_, theta); }

ThetaGrid::ThetaGrid(const Potential& potential, double theta_max, int n_points)
    : potential_(potential), theta_max_(theta_max) {
  if (!(theta_max > 0.0) || !std::isfinite(theta_max)) throw InvalidArgument("theta_max must be positive");
  if (n_points < kMinPoints) {
    throw InvalidArgument("theta grid needs at least " + std::to_string(kMinPoints) + " points");
  }
  spacing_ = 2.0 * theta_max / (n_points - 1);
  nodes_.resize(n_points);
  for (int j = 0; j < n_points; ++j) {
    // Mirror the upper half so the grid is exactly symmetric.
    nodes_[j] = (2 * j < n_points) ? -theta_max + j * spacing_ : theta_max - (n_points - 1 - j) * spacing_;
  }
  trapezoid_.assign(n_points, spacing_);
  trapezoid_.front() = trapezoid_.back() = 0.5 * spacing_;

  psi_.resize(n_points);
  for (int j = 0; j < n_points; ++j) psi_[j] = potential_.value(nodes_[j]);
  const double psi_min = *std::min_element(psi_.begin(), psi_.end());
  const double psi_edge = std::min(psi_.front(), psi_.back());
  if (!(potential_.value(theta_max) > potential_.value(0.0)) ||
      !(potential_.value(-theta_max) > potential_.value(0.0))) {
    throw InvalidArgument("potential does not grow toward the grid bound");
  }
  if (std::exp(-2.0 * (psi_edge - psi_min)) >= kTailRatio) {
    throw InvalidArgument("theta_max too small: Gibbs tail mass ratio exp(-2 psi(theta_max)) / max >= 1e-12");
  }
  gibbs_weights_.resize(n_points);
  for (int j = 0; j < n_points; ++j) gibbs_weights_[j] = trapezoid_[j] * std::exp(-2.0 * psi_[j]);
}

double weighted_inner(const ThetaGrid& grid, std::span<const double> f, std::span<const double> g) {
  check_length(grid, f);
  check_length(grid, g);
  const auto w = grid.gibbs_weights();
  double acc = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) acc += f[j] * g[j] * w[j];
  return acc;
}

double weighted_norm(const ThetaGrid& grid, std::span<const double> f) {
  return std::sqrt(weighted_inner(grid, f, f));
}

double weighted_mass(const ThetaGrid& grid, std::span<const double> f) {
  check_length(grid, f);
  const auto w = grid.gibbs_weights();
  double acc = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) acc += f[j] * w[j];
  return acc;
}

double weighted_first_moment(const ThetaGrid& grid, std::span<const double> f) {
  check_length(grid, f);
  const auto w = grid.gibbs_weights();
  const auto x = grid.nodes();
  double acc = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) acc += x[j] * f[j] * w[j];
  return acc;
}

std::vector<double> normalize_density(const ThetaGrid& grid, std::span<const double> rho) {
  check_length(grid, rho);
  for (double v : rho) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("density must be finite and nonnegative");
  }
  const double mass = weighted_mass(grid, rho);
  if (!(mass > 0.0)) throw InvalidArgument("density has zero Gibbs mass");
  std::vector<double> out(rho.begin(), rho.end());
  for (double& v : out) v /= mass;
  return out;
}

std::vector<double> tilted_gibbs_density(const ThetaGrid& grid, double tilt) {
  const auto x = grid.nodes();
  double shift = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < grid.size(); ++j) shift = std::max(shift, 2.0 * tilt * x[j]);
  std::vector<double> rho(grid.size());
  for (int j = 0; j < grid.size(); ++j) rho[j] = std::exp(2.0 * tilt * x[j] - shift);
  return normalize_density(grid, rho);
}

}  // namespace lmf
