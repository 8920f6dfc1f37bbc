#pragma once

#include <span>
#include <vector>

#include "lmf/kernel.hpp"
#include "lmf/mckean_vlasov.hpp"
#include "lmf/particle.hpp"
#include "lmf/potential.hpp"

namespace lmf {

/// mu^N_t: atoms (i/N, theta_i) of mass 1/N^d.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(int n, int dim, std::vector<double> theta, double time = 0.0);
  static EmpiricalMeasure from_state(const ParticleSystemState& state) {
    return {state.n, state.dim, state.theta, state.time};
  }

  int side() const { return n_; }
  int dim() const { return dim_; }
  double time() const { return time_; }
  std::size_t atoms() const { return theta_.size(); }
  std::span<const double> theta() const { return theta_; }
  std::array<double, 2> position(std::size_t i) const { return TorusGrid{dim_, n_}.position(i); }

 private:
  int n_;
  int dim_;
  std::vector<double> theta_;
  double time_;
};

/// Saturating ramp r(theta) = min(1, s) tanh((theta - c) / s): bounded by 1 and 1-Lipschitz.
struct Ramp {
  double center = 0.0;
  double width = 1.0;
  double operator()(double theta) const;
};

/// Torus mode on T^d: 1, cos(2 pi k.x) or sin(2 pi k.x).
struct TorusMode {
  std::array<int, 2> k{0, 0};
  bool sine = false;
  double operator()(std::span<const double> x) const;
  double lipschitz() const;
};

/// Products f(x, theta) = scale * mode(x) * ramp(theta), each scaled so that
/// sup |f| <= 1 and Lip(f) <= 1 on T^d x R.
class TestDictionary {
 public:
  struct Member {
    TorusMode mode;
    Ramp ramp;
    double scale = 1.0;
  };

  TestDictionary(int dim, int max_frequency, std::vector<double> centers, std::vector<double> widths);
  /// K_x = 4, centers linspace(-1, 1, 9), widths {0.5, 1}.
  static TestDictionary standard(int dim = 1);

  int dim() const { return dim_; }
  std::size_t size() const { return members_.size(); }
  const std::vector<Member>& members() const { return members_; }
  const std::vector<TorusMode>& modes() const { return modes_; }
  const std::vector<Ramp>& ramps() const { return ramps_; }
  double value(std::size_t m, std::span<const double> x, double theta) const;

  /// Largest sup-norm and finite-difference Lipschitz estimate over a dense
  /// sample grid of T^d x [-theta_max, theta_max] (d = 1) or a random sample (d = 2).
  std::pair<double, double> verify(double theta_max, int samples = 200) const;

 private:
  int dim_;
  std::vector<TorusMode> modes_;
  std::vector<Ramp> ramps_;
  std::vector<Member> members_;  // mode-major: index = mode * ramps + ramp
};

/// Dictionary means of mu: (1/N^d) sum_i f_m(x_i, theta_i).
std::vector<double> dictionary_means(const TestDictionary& dict, const EmpiricalMeasure& mu);
/// Dictionary integrals of rho: int int f_m rho e^{-2 psi} d theta dx on the x-grid.
std::vector<double> dictionary_integrals(const TestDictionary& dict, const ThetaGrid& grid, const TorusGrid& x_grid,
                                         const std::vector<std::vector<double>>& slices);

/// max over the dictionary of |mu(f) - rho_t(f)|.
double bl_distance(const EmpiricalMeasure& mu, const ThetaGrid& grid, const TorusGrid& x_grid,
                   const std::vector<std::vector<double>>& slices, const TestDictionary& dict);
double bl_distance(const EmpiricalMeasure& mu, const ThetaGrid& grid, const SpaceDensityField& rho, double t,
                   const TestDictionary& dict);

/// (1/N^d) sum_i int_0^T (h^i(theta_s) - h_hat^{i/N}(s))^2 ds, trapezoid over
/// the stored path, h^i(theta) = sum_j J((j - i)/N) theta_j / N^d. Uses all
/// sites when `sites` is empty.
double drift_mismatch(const std::vector<double>& path_times, const std::vector<std::vector<double>>& path_states,
                      const CirculantForceTable& table, const DecoupledDrive& h_hat,
                      std::span<const std::size_t> sites = {});
inline double drift_mismatch(const Trajectory& run, const CirculantForceTable& table, const DecoupledDrive& h_hat,
                             std::span<const std::size_t> sites = {}) {
  return drift_mismatch(run.path_times, run.path_states, table, h_hat, sites);
}

/// Per-site relative entropy of f0 against rho0, averaged over x-grid sites.
double relative_entropy_product(const ThetaGrid& grid, const InitialProfile& f0, const InitialProfile& rho0);

/// One-dimensional building blocks of the k-fold product dictionary on R^k.
class RampFamily {
 public:
  explicit RampFamily(std::vector<Ramp> ramps) : ramps_(std::move(ramps)) {}
  /// Ramps with centers linspace(-1, 1, 9) and widths {0.5, 1}.
  static RampFamily standard();
  const std::vector<Ramp>& ramps() const { return ramps_; }

 private:
  std::vector<Ramp> ramps_;
};

/// Bounded-Lipschitz distance on R^k between the empirical law of the rows of
/// `samples` (R x k, row-major) and the product of the k grid densities
/// `marginals`, over products g_1(theta_1)...g_k(theta_k) with each g in
/// {1} u family, excluding the all-constant product, scaled by
/// 1/sqrt(#nonconstant factors).
double product_distance(const ThetaGrid& grid, std::span<const double> samples, std::size_t k,
                        const std::vector<std::vector<double>>& marginals, const RampFamily& family);

/// Paired comparison of two R x k clouds drawn with common random numbers:
/// max over the same product dictionary of |mean_r f(a_r) - mean_r f(b_r)|.
double paired_product_distance(std::span<const double> a, std::span<const double> b, std::size_t k,
                               const RampFamily& family);

/// theta_{floor(N x_l)} of every replica, row-major R x k.
std::vector<double> site_samples(const std::vector<std::vector<double>>& replica_states, int n,
                                 std::span<const double> sites);

/// Joint law of (theta_{floor(N x_l)}(t))_l over R replicas against the
/// product of rho_t(x_l, .). `replica_states[r]` is the lattice state of replica r at time t.
double marginal_chaos_test(const ThetaGrid& grid, const std::vector<std::vector<double>>& replica_states, int n,
                           const SpaceDensityField& rho, std::span<const double> sites, double t,
                           const RampFamily& family, std::size_t min_replicas = 1000);

}  // namespace lmf
