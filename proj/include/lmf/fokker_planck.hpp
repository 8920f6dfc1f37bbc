#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lmf/potential.hpp"

namespace lmf {

/// Time-dependent drift h(t) on a uniform time grid t_m = m * spacing,
/// m = 0..M, interpolated piecewise linearly.
class DriftPath {
 public:
  DriftPath(double spacing, std::vector<double> values);

  static DriftPath constant(double value, double horizon, double spacing);
  static DriftPath from_function(const std::function<double(double)>& f, double horizon, double spacing);

  double spacing() const { return spacing_; }
  double horizon() const { return spacing_ * static_cast<double>(values_.size() - 1); }
  int intervals() const { return static_cast<int>(values_.size()) - 1; }
  double time(int m) const { return spacing_ * m; }
  std::span<const double> values() const { return values_; }
  double sup_norm() const { return sup_norm_; }

  /// h(t); t must lie in [0, horizon] up to rounding.
  double operator()(double t) const;
  /// Slope of the interpolant at t (right-continuous at breakpoints).
  double slope(double t) const;
  /// Exact integral of h(s)^2 over [0, t].
  double integral_of_square(double t) const;

  /// Pointwise difference of two paths on the same grid.
  DriftPath operator-(const DriftPath& other) const;

 private:
  int segment(double t) const;

  double spacing_;
  std::vector<double> values_;
  double sup_norm_ = 0.0;
};

/// Relative densities rho_t (w.r.t. exp(-2 psi)) stored at a list of times.
class DensityPath {
 public:
  DensityPath(std::vector<double> times, int grid_size);

  std::size_t size() const { return times_.size(); }
  int grid_size() const { return grid_size_; }
  std::span<const double> times() const { return times_; }
  std::span<const double> at(std::size_t m) const {
    return {values_.data() + m * grid_size_, static_cast<std::size_t>(grid_size_)};
  }
  std::span<double> at(std::size_t m) {
    return {values_.data() + m * grid_size_, static_cast<std::size_t>(grid_size_)};
  }
  std::span<const double> back() const { return at(size() - 1); }

 private:
  std::vector<double> times_;
  int grid_size_;
  std::vector<double> values_;
};

/// Tridiagonal matrix stored by diagonals; lower[0] and upper[n-1] are unused.
struct Tridiagonal {
  std::vector<double> lower;
  std::vector<double> diag;
  std::vector<double> upper;
};

/// Exponentially fitted (Scharfetter-Gummel / Chang-Cooper) finite-volume
/// discretization of L*_h acting on relative densities: d rho/dt = A rho.
/// Fluxes vanish at both grid ends and sum_j w_j (A rho)_j = 0 for every rho.
Tridiagonal fp_generator(const ThetaGrid& grid, double drift);

struct FpOptions {
  double dt = 1e-3;
};

/// Crank-Nicolson solution of d rho/dt = L*_{h(t)} rho from rho0, reported at
/// every node of the drift's time grid up to `horizon`.
DensityPath solve_fp(const ThetaGrid& grid, std::span<const double> rho0, const DriftPath& drift, double horizon,
                     const FpOptions& options = {});

/// Eigen-decomposition of the discrete -L_0: eigenvalues ascending, eigenvectors
/// orthonormal under the weighted inner product.
class SpectralDecomposition {
 public:
  explicit SpectralDecomposition(const ThetaGrid& grid);

  const ThetaGrid& grid() const { return grid_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  /// i-th eigenfunction as a grid function (i = 0 is the constant mode).
  std::vector<double> eigenfunction(int i) const;

  /// sum_i exp(-lambda_i t) <rho0, phi_i> phi_i.
  std::vector<double> evolve(std::span<const double> rho0, double t) const;

 private:
  ThetaGrid grid_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd vectors_;  // Euclidean-orthonormal eigenvectors of the symmetrized operator
  Eigen::VectorXd sqrt_weights_;
};

inline std::vector<double> spectral_oracle(const SpectralDecomposition& decomp, std::span<const double> rho0,
                                           double t) {
  return decomp.evolve(rho0, t);
}

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

struct BridgeOptions {
  int u_steps = 200;
};

/// Monte-Carlo estimate of the transition density q_t^h(theta, eta) relative to
/// exp(-2 psi(eta)) d eta, from the Brownian-bridge exponential functional.
/// Samples are antithetic pairs drawn from counter-based streams keyed by seed.
McEstimate bridge_mc_kernel(const Potential& potential, const DriftPath& drift, double theta, double eta, double t,
                            std::int64_t n_samples, std::uint64_t seed, const BridgeOptions& options = {});

/// Monte-Carlo estimate of E_theta[f(theta(t))] = int q_t^h(theta, eta) f(eta) e^{-2 psi(eta)} d eta,
/// drawing the endpoint from the free Brownian motion and weighting by the same functional.
McEstimate bridge_mc_expectation(const Potential& potential, const DriftPath& drift, double theta, double t,
                                 const std::function<double(double)>& f, std::int64_t n_samples,
                                 std::uint64_t seed, const BridgeOptions& options = {});

struct BoundReport {
  bool passed = true;
  double max_ratio = 0.0;  ///< max over stored times of lhs / rhs
  std::optional<double> first_violation_time;
  std::vector<double> lhs;
  std::vector<double> rhs;
};

/// Relative slack allowed on the norm-growth and stability bounds.
inline constexpr double kBoundSlack = 1e-6;

/// Checks ||rho_t||^2 <= exp(rate * int_0^t h^2) ||rho_0||^2 at every stored time.
/// The default rate 1/2 is the reference constant; rate 1 is
/// what the energy identity d/dt ||rho||^2 = -||rho'||^2 + 2h<rho, rho'> yields.
BoundReport norm_growth_check(const ThetaGrid& grid, const DensityPath& path, const DriftPath& drift,
                              double rate = 0.5);

/// Solves from rho0 under g and under h and checks
/// ||rho^g_t - rho^h_t||^2 <= exp(int g^2 + h^2) ||rho_0||^2 int (g - h)^2.
BoundReport stability_check(const ThetaGrid& grid, std::span<const double> rho0, const DriftPath& g,
                            const DriftPath& h, double horizon, const FpOptions& options = {});

/// Relative residual of d/dt <rho_t, theta> = <rho_t, h(t) - psi'> at interior
/// stored times, with the time derivative taken by central differences.
std::vector<double> first_moment_residuals(const ThetaGrid& grid, const DensityPath& path, const DriftPath& drift);

/// max_m |<rho_m, 1> - 1|.
double max_mass_error(const ThetaGrid& grid, const DensityPath& path);

}  // namespace lmf
