#include "lmf/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lmf/error.hpp"
#include "lmf/rng.hpp"

namespace lmf {
namespace {

// Bernoulli function z / (e^z - 1).
double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

// Solves the tridiagonal system in place (Thomas algorithm); rhs becomes the solution.
void solve_tridiagonal(const Tridiagonal& m, std::vector<double>& rhs, std::vector<double>& scratch) {
  const std::size_t n = m.diag.size();
  scratch.resize(n);
  double pivot = m.diag[0];
  if (!(std::abs(pivot) > 0.0) || !std::isfinite(pivot)) throw NumericalError("singular implicit system at row 0");
  scratch[0] = m.upper[0] / pivot;
  rhs[0] /= pivot;
  for (std::size_t j = 1; j < n; ++j) {
    pivot = m.diag[j] - m.lower[j] * scratch[j - 1];
    if (!(std::abs(pivot) > 0.0) || !std::isfinite(pivot)) {
      throw NumericalError("singular implicit system at row " + std::to_string(j));
    }
    scratch[j] = j + 1 < n ? m.upper[j] / pivot : 0.0;
    rhs[j] = (rhs[j] - m.lower[j] * rhs[j - 1]) / pivot;
  }
  for (std::size_t j = n - 1; j-- > 0;) rhs[j] -= scratch[j] * rhs[j + 1];
}

void check_density(const ThetaGrid& grid, std::span<const double> rho0) {
  if (static_cast<int>(rho0.size()) != grid.size()) throw InvalidArgument("initial density does not match grid");
  for (double v : rho0) {
    if (!std::isfinite(v)) throw InvalidArgument("initial density is not finite");
  }
  const double mass = weighted_mass(grid, rho0);
  if (std::abs(mass - 1.0) > 1e-9) {
    throw InvalidArgument("initial density is not normalized (mass " + std::to_string(mass) + ")");
  }
}

// F(B, h, h') = psi''(B)/2 - h' B - (psi'(B) - h)^2 / 2
double girsanov_integrand(const Potential& p, double b, double h, double h_slope) {
  const double force = p.first_derivative(b) - h;
  return 0.5 * p.second_derivative(b) - h_slope * b - 0.5 * force * force;
}

// t * int_0^1 F(theta + u (eta - theta) + sqrt(t) * sign * bridge_u, h(ut), h'(ut)) du by the
// trapezoid rule on the u-grid.
double bridge_functional(const Potential& p, const DriftPath& drift, double theta, double eta, double t,
                         std::span<const double> bridge, double sign) {
  const int steps = static_cast<int>(bridge.size()) - 1;
  const double root_t = std::sqrt(t);
  double acc = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double u = static_cast<double>(k) / steps;
    const double s = u * t;
    const double b = theta + u * (eta - theta) + sign * root_t * bridge[k];
    const double f = girsanov_integrand(p, b, drift(s), drift.slope(s));
    acc += (k == 0 || k == steps) ? 0.5 * f : f;
  }
  return t * acc / steps;
}

// Standard Brownian bridge on [0, 1] at u_k = k / steps: W_u - u W_1.
void sample_bridge(const rng::Stream& stream, int steps, std::vector<double>& path) {
  path.assign(steps + 1, 0.0);
  const double step_sd = std::sqrt(1.0 / steps);
  double w = 0.0;
  for (int k = 1; k <= steps; k += 2) {
    const auto [z1, z2] = stream.normals(static_cast<std::uint64_t>(k / 2), rng::Tag::kBridge);
    w += step_sd * z1;
    path[k] = w;
    if (k + 1 <= steps) {
      w += step_sd * z2;
      path[k + 1] = w;
    }
  }
  const double end = path[steps];
  for (int k = 0; k <= steps; ++k) path[k] -= static_cast<double>(k) / steps * end;
}

McEstimate summarize(const std::vector<double>& samples) {
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var = samples.size() > 1 ? var / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

void check_mc_args(const DriftPath& drift, double t, std::int64_t n_samples, const BridgeOptions& options) {
  if (n_samples < 1) throw InvalidArgument("bridge Monte Carlo needs at least one sample");
  if (!(t > 0.0)) throw InvalidArgument("bridge Monte Carlo needs t > 0");
  if (t > drift.horizon() * (1.0 + 1e-12)) throw InvalidArgument("drift path does not cover [0, t]");
  if (options.u_steps < 200) throw InvalidArgument("bridge u-grid needs at least 200 steps");
}

}  // namespace

// ---------------------------------------------------------------------------
// DriftPath / DensityPath

DriftPath::DriftPath(double spacing, std::vector<double> values) : spacing_(spacing), values_(std::move(values)) {
  if (!(spacing > 0.0)) throw InvalidArgument("drift time spacing must be positive");
  if (values_.size() < 2) throw InvalidArgument("drift path needs at least two time nodes");
  for (double v : values_) {
    if (!std::isfinite(v)) throw InvalidArgument("drift values must be finite");
    sup_norm_ = std::max(sup_norm_, std::abs(v));
  }
}

DriftPath DriftPath::constant(double value, double horizon, double spacing) {
  return from_function([value](double) { return value; }, horizon, spacing);
}

DriftPath DriftPath::from_function(const std::function<double(double)>& f, double horizon, double spacing) {
  const int m = static_cast<int>(std::llround(horizon / spacing));
  if (m < 1 || std::abs(m * spacing - horizon) > 1e-9 * horizon) {
    throw InvalidArgument("horizon must be a positive multiple of the drift time spacing");
  }
  std::vector<double> v(m + 1);
  for (int i = 0; i <= m; ++i) v[i] = f(spacing * i);
  return {spacing, std::move(v)};
}

int DriftPath::segment(double t) const {
  const double tol = 1e-9 * spacing_;
  if (t < -tol || t > horizon() + tol) {
    throw InvalidArgument("time " + std::to_string(t) + " outside drift path [0, " + std::to_string(horizon()) + "]");
  }
  return std::clamp(static_cast<int>(std::floor(t / spacing_)), 0, intervals() - 1);
}

double DriftPath::operator()(double t) const {
  const int m = segment(t);
  const double u = std::clamp(t / spacing_ - m, 0.0, 1.0);
  return values_[m] + u * (values_[m + 1] - values_[m]);
}

double DriftPath::slope(double t) const {
  const int m = segment(t);
  return (values_[m + 1] - values_[m]) / spacing_;
}

double DriftPath::integral_of_square(double t) const {
  if (t <= 0.0) return 0.0;
  const int last = segment(t);
  double acc = 0.0;
  for (int m = 0; m < last; ++m) {
    const double a = values_[m], b = values_[m + 1];
    acc += spacing_ * (a * a + a * b + b * b) / 3.0;
  }
  // Partial last segment from t_last to t.
  const double len = t - time(last);
  const double a = values_[last];
  const double b = (*this)(t);
  acc += len * (a * a + a * b + b * b) / 3.0;
  return acc;
}

DriftPath DriftPath::operator-(const DriftPath& other) const {
  if (other.values_.size() != values_.size() || other.spacing_ != spacing_) {
    throw InvalidArgument("drift paths live on different time grids");
  }
  std::vector<double> d(values_.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = values_[i] - other.values_[i];
  return {spacing_, std::move(d)};
}

DensityPath::DensityPath(std::vector<double> times, int grid_size)
    : times_(std::move(times)), grid_size_(grid_size), values_(times_.size() * grid_size, 0.0) {}

// ---------------------------------------------------------------------------
// Solver

Tridiagonal fp_generator(const ThetaGrid& grid, double drift) {
  const int n = grid.size();
  const double dx = grid.spacing();
  const auto psi = grid.psi_values();
  const auto w = grid.trapezoid_weights();
  Tridiagonal a{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  const double up = std::exp(-2.0 * drift * dx);
  const double down = std::exp(2.0 * drift * dx);
  for (int e = 0; e + 1 < n; ++e) {
    // Edge between nodes e and e+1, potential U = psi - h theta linear on the cell.
    const double z = 2.0 * (psi[e + 1] - psi[e]) - 2.0 * drift * dx;
    const double forward = bernoulli(z);    // B(z)
    const double backward = bernoulli(-z);  // B(-z)
    const double left = 1.0 / (2.0 * dx * w[e]);
    const double right = 1.0 / (2.0 * dx * w[e + 1]);
    a.upper[e] = forward * up * left;
    a.diag[e] -= forward * left;
    a.lower[e + 1] = backward * down * right;
    a.diag[e + 1] -= backward * right;
  }
  return a;
}

DensityPath solve_fp(const ThetaGrid& grid, std::span<const double> rho0, const DriftPath& drift, double horizon,
                     const FpOptions& options) {
  check_density(grid, rho0);
  if (!(options.dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (options.dt > drift.spacing() * (1.0 + 1e-12)) throw InvalidArgument("dt exceeds the drift time spacing");
  if (horizon > drift.horizon() * (1.0 + 1e-12) || horizon < 0.0) {
    throw InvalidArgument("horizon outside the drift path");
  }
  const int n = grid.size();
  std::vector<double> times;
  for (int m = 0; m <= drift.intervals() && drift.time(m) <= horizon * (1.0 + 1e-12); ++m) times.push_back(drift.time(m));
  if (horizon - times.back() > 1e-12 * std::max(1.0, horizon)) times.push_back(horizon);

  DensityPath out(times, n);
  std::copy(rho0.begin(), rho0.end(), out.at(0).begin());

  std::vector<double> rho(rho0.begin(), rho0.end());
  std::vector<double> rhs(n), scratch;
  Tridiagonal current = fp_generator(grid, drift(0.0));
  Tridiagonal implicit;
  double t = 0.0;
  for (std::size_t m = 1; m < times.size(); ++m) {
    const double span = times[m] - times[m - 1];
    const int substeps = std::max(1, static_cast<int>(std::ceil(span / options.dt - 1e-9)));
    const double dt = span / substeps;
    for (int s = 0; s < substeps; ++s) {
      const double t_next = s + 1 == substeps ? times[m] : t + dt;
      Tridiagonal next = fp_generator(grid, drift(t_next));
      // rhs = (I + dt/2 A_n) rho
      for (int j = 0; j < n; ++j) {
        double v = rho[j] + 0.5 * dt * current.diag[j] * rho[j];
        if (j > 0) v += 0.5 * dt * current.lower[j] * rho[j - 1];
        if (j + 1 < n) v += 0.5 * dt * current.upper[j] * rho[j + 1];
        rhs[j] = v;
      }
      implicit = next;
      for (int j = 0; j < n; ++j) {
        implicit.lower[j] *= -0.5 * dt;
        implicit.upper[j] *= -0.5 * dt;
        implicit.diag[j] = 1.0 - 0.5 * dt * implicit.diag[j];
      }
      try {
        solve_tridiagonal(implicit, rhs, scratch);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string("Crank-Nicolson step failed at t = ") + std::to_string(t_next) +
                             " with dt = " + std::to_string(dt) + ": " + e.what());
      }
      for (int j = 0; j < n; ++j) {
        if (!std::isfinite(rhs[j])) {
          throw NumericalError("Crank-Nicolson step produced a non-finite density at t = " + std::to_string(t_next) +
                               " (dt = " + std::to_string(dt) + " too large?)");
        }
      }
      rho.swap(rhs);
      current = std::move(next);
      t = t_next;
    }
    auto slot = out.at(m);
    for (int j = 0; j < n; ++j) {
      // Round-off undershoot at the level of 1e-12 is clipped; larger negatives are kept visible.
      slot[j] = (rho[j] < 0.0 && rho[j] > -1e-12) ? 0.0 : rho[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral oracle

SpectralDecomposition::SpectralDecomposition(const ThetaGrid& grid) : grid_(grid) {
  const int n = grid.size();
  const Tridiagonal a = fp_generator(grid, 0.0);
  // W A is symmetric for h = 0, so S A S^{-1} with S = diag(sqrt(w)) has
  // off-diagonal entries sqrt(A_{j,j+1} A_{j+1,j}).
  Eigen::VectorXd diag(n);
  Eigen::VectorXd sub(n - 1);
  for (int j = 0; j < n; ++j) diag[j] = -a.diag[j];
  for (int j = 0; j + 1 < n; ++j) sub[j] = -std::sqrt(a.upper[j] * a.lower[j + 1]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericalError("tridiagonal eigensolver did not converge");
  eigenvalues_ = solver.eigenvalues();
  vectors_ = solver.eigenvectors();
  sqrt_weights_.resize(n);
  const auto w = grid.trapezoid_weights();
  const auto psi = grid.psi_values();
  for (int j = 0; j < n; ++j) sqrt_weights_[j] = std::sqrt(w[j]) * std::exp(-psi[j]);
  // Fix the sign convention: the ground state is positive.
  if (vectors_.col(0).sum() < 0.0) vectors_.col(0) *= -1.0;
}

std::vector<double> SpectralDecomposition::eigenfunction(int i) const {
  if (i < 0 || i >= vectors_.cols()) throw InvalidArgument("eigenfunction index out of range");
  std::vector<double> phi(vectors_.rows());
  for (int j = 0; j < vectors_.rows(); ++j) phi[j] = vectors_(j, i) / sqrt_weights_[j];
  return phi;
}

std::vector<double> SpectralDecomposition::evolve(std::span<const double> rho0, double t) const {
  if (!(t >= 0.0)) throw InvalidArgument("spectral oracle needs t >= 0");
  if (static_cast<Eigen::Index>(rho0.size()) != vectors_.rows()) throw InvalidArgument("density does not match grid");
  const Eigen::Index n = vectors_.rows();
  Eigen::VectorXd scaled(n);
  for (Eigen::Index j = 0; j < n; ++j) scaled[j] = rho0[j] * sqrt_weights_[j];
  Eigen::VectorXd coeff = vectors_.transpose() * scaled;
  for (Eigen::Index i = 0; i < n; ++i) coeff[i] *= std::exp(-eigenvalues_[i] * t);
  const Eigen::VectorXd y = vectors_ * coeff;
  std::vector<double> out(n);
  for (Eigen::Index j = 0; j < n; ++j) out[j] = y[j] / sqrt_weights_[j];
  return out;
}

// ---------------------------------------------------------------------------
// Brownian-bridge Monte Carlo

McEstimate bridge_mc_kernel(const Potential& potential, const DriftPath& drift, double theta, double eta, double t,
                            std::int64_t n_samples, std::uint64_t seed, const BridgeOptions& options) {
  check_mc_args(drift, t, n_samples, options);
  // Kernel relative to exp(-2 psi(eta)): e^{psi(theta) + psi(eta)} gamma_t(theta, eta) phi_t^h(theta, eta).
  const double log_prefactor = potential.value(theta) + potential.value(eta) -
                               (eta - theta) * (eta - theta) / (2.0 * t) - 0.5 * std::log(2.0 * std::numbers::pi * t) +
                               drift(t) * eta - drift(0.0) * theta;
  std::vector<double> samples(n_samples);
  std::vector<double> bridge;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const rng::Stream stream(seed, 0, static_cast<std::uint64_t>(i));
    sample_bridge(stream, options.u_steps, bridge);
    const double plus = std::exp(log_prefactor + bridge_functional(potential, drift, theta, eta, t, bridge, 1.0));
    const double minus = std::exp(log_prefactor + bridge_functional(potential, drift, theta, eta, t, bridge, -1.0));
    samples[i] = 0.5 * (plus + minus);
  }
  return summarize(samples);
}

McEstimate bridge_mc_expectation(const Potential& potential, const DriftPath& drift, double theta, double t,
                                 const std::function<double(double)>& f, std::int64_t n_samples, std::uint64_t seed,
                                 const BridgeOptions& options) {
  check_mc_args(drift, t, n_samples, options);
  // With eta ~ N(theta, t) the Gaussian factor cancels:
  // E_theta[f] = E[e^{psi(theta) - psi(eta) + h(t) eta - h(0) theta + t int F} f(eta)].
  std::vector<double> samples(n_samples);
  std::vector<double> bridge;
  const double root_t = std::sqrt(t);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const rng::Stream stream(seed, 0, static_cast<std::uint64_t>(i));
    sample_bridge(stream, options.u_steps, bridge);
    const double z = stream.normal(0, rng::Tag::kEndpoint);
    double pair = 0.0;
    for (const double sign : {1.0, -1.0}) {
      const double eta = theta + sign * root_t * z;
      const double log_w = potential.value(theta) - potential.value(eta) + drift(t) * eta - drift(0.0) * theta +
                           bridge_functional(potential, drift, theta, eta, t, bridge, sign);
      pair += 0.5 * std::exp(log_w) * f(eta);
    }
    samples[i] = pair;
  }
  return summarize(samples);
}

// ---------------------------------------------------------------------------
// Quantitative checks

BoundReport norm_growth_check(const ThetaGrid& grid, const DensityPath& path, const DriftPath& drift, double rate) {
  BoundReport report;
  const double initial = weighted_inner(grid, path.at(0), path.at(0));
  for (std::size_t m = 0; m < path.size(); ++m) {
    const double t = path.times()[m];
    const double lhs = weighted_inner(grid, path.at(m), path.at(m));
    const double rhs = std::exp(rate * drift.integral_of_square(t)) * initial;
    report.lhs.push_back(lhs);
    report.rhs.push_back(rhs);
    report.max_ratio = std::max(report.max_ratio, lhs / rhs);
    if (lhs > rhs * (1.0 + kBoundSlack) && report.passed) {
      report.passed = false;
      report.first_violation_time = t;
    }
  }
  return report;
}

BoundReport stability_check(const ThetaGrid& grid, std::span<const double> rho0, const DriftPath& g,
                            const DriftPath& h, double horizon, const FpOptions& options) {
  const DensityPath pg = solve_fp(grid, rho0, g, horizon, options);
  const DensityPath ph = solve_fp(grid, rho0, h, horizon, options);
  const DriftPath diff = g - h;
  const double initial = weighted_inner(grid, rho0, rho0);
  BoundReport report;
  std::vector<double> d(grid.size());
  for (std::size_t m = 0; m < pg.size(); ++m) {
    const double t = pg.times()[m];
    for (int j = 0; j < grid.size(); ++j) d[j] = pg.at(m)[j] - ph.at(m)[j];
    const double lhs = weighted_inner(grid, d, d);
    const double rhs =
        std::exp(g.integral_of_square(t) + h.integral_of_square(t)) * initial * diff.integral_of_square(t);
    report.lhs.push_back(lhs);
    report.rhs.push_back(rhs);
    if (rhs > 0.0) report.max_ratio = std::max(report.max_ratio, lhs / rhs);
    if (lhs > rhs * (1.0 + kBoundSlack) && report.passed) {
      report.passed = false;
      report.first_violation_time = t;
    }
  }
  return report;
}

std::vector<double> first_moment_residuals(const ThetaGrid& grid, const DensityPath& path, const DriftPath& drift) {
  const auto x = grid.nodes();
  const auto w = grid.gibbs_weights();
  std::vector<double> moments(path.size());
  for (std::size_t m = 0; m < path.size(); ++m) moments[m] = weighted_first_moment(grid, path.at(m));
  std::vector<double> residuals(path.size(), 0.0);
  for (std::size_t m = 1; m + 1 < path.size(); ++m) {
    const auto t = path.times();
    const double lhs = (moments[m + 1] - moments[m - 1]) / (t[m + 1] - t[m - 1]);
    const double h = drift(t[m]);
    double rhs = 0.0, scale = 0.0;
    const auto rho = path.at(m);
    for (int j = 0; j < grid.size(); ++j) {
      const double integrand = (h - grid.potential().first_derivative(x[j])) * rho[j] * w[j];
      rhs += integrand;
      scale += std::abs(integrand);
    }
    residuals[m] = std::abs(lhs - rhs) / scale;
  }
  return residuals;
}

double max_mass_error(const ThetaGrid& grid, const DensityPath& path) {
  double err = 0.0;
  for (std::size_t m = 0; m < path.size(); ++m) err = std::max(err, std::abs(weighted_mass(grid, path.at(m)) - 1.0));
  return err;
}

}  // namespace lmf
