#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "lmf/error.hpp"
#include "lmf/fokker_planck.hpp"
#include "lmf/kernel.hpp"
#include "lmf/potential.hpp"

namespace lmf {

/// Uniform grid of M^d sites on the unit torus, sites enumerated row-major.
struct TorusGrid {
  int dim = 1;
  int side = 1;

  std::size_t sites() const { return dim == 1 ? side : static_cast<std::size_t>(side) * side; }
  std::array<double, 2> position(std::size_t site) const;
  /// Band-limited interpolation weights from the grid values to the point x.
  std::vector<double> interpolation_weights(std::span<const double> x) const;
};

/// rho_0(x, .) on an x-grid: one normalized grid density per site.
class InitialProfile {
 public:
  InitialProfile(const ThetaGrid& grid, TorusGrid x_grid, std::vector<std::vector<double>> slices);

  /// Tilted Gibbs slices exp(2 b(x) theta) / Z_{b(x)}.
  static InitialProfile tilted_gibbs(const ThetaGrid& grid, TorusGrid x_grid,
                                     const std::function<double(std::span<const double>)>& tilt);

  const TorusGrid& x_grid() const { return x_grid_; }
  std::size_t sites() const { return slices_.size(); }
  std::span<const double> slice(std::size_t site) const { return slices_[site]; }
  /// ||rho_0(x, .)||_{2,psi} per site.
  const std::vector<double>& norms() const { return norms_; }
  double sup_norm() const;
  /// Largest weighted L2 distance between neighbouring slices (grid continuity witness).
  double max_neighbour_jump(const ThetaGrid& grid) const;

  /// Band-limited interpolation of the profile to x, clipped at zero and renormalized.
  std::vector<double> interpolate(const ThetaGrid& grid, std::span<const double> x) const;

 private:
  TorusGrid x_grid_;
  std::vector<std::vector<double>> slices_;
  std::vector<double> norms_;
};

/// h^x(t) on x-grid sites times a uniform time grid.
class SpaceDriftField {
 public:
  SpaceDriftField(TorusGrid x_grid, double time_spacing, int intervals, double fill = 0.0);

  const TorusGrid& x_grid() const { return x_grid_; }
  std::size_t sites() const { return x_grid_.sites(); }
  double time_spacing() const { return spacing_; }
  int intervals() const { return intervals_; }
  double horizon() const { return spacing_ * intervals_; }

  double& at(std::size_t site, int m) { return values_[site * (intervals_ + 1) + m]; }
  double at(std::size_t site, int m) const { return values_[site * (intervals_ + 1) + m]; }
  std::span<const double> site_values(std::size_t site) const {
    return {values_.data() + site * (intervals_ + 1), static_cast<std::size_t>(intervals_ + 1)};
  }

  DriftPath drift_path(std::size_t site) const;
  double sup_norm() const;
  bool is_finite() const;
  /// sup over sites and times of |this - other|.
  double sup_distance(const SpaceDriftField& other) const;
  /// sup over times of the x-grid L2(T^d) distance.
  double sup_l2_distance(const SpaceDriftField& other) const;

  /// Band-limited in x, piecewise linear in t.
  double interpolate(std::span<const double> x, double t) const;
  /// Drift path at point x (band-limited interpolation of every time node).
  DriftPath drift_path_at(std::span<const double> x) const;

 private:
  TorusGrid x_grid_;
  double spacing_;
  int intervals_;
  std::vector<double> values_;
};

/// rho_t(x, theta) on x-grid sites; each site holds the density path on the
/// drift time grid.
class SpaceDensityField {
 public:
  SpaceDensityField(TorusGrid x_grid, std::vector<DensityPath> paths);

  const TorusGrid& x_grid() const { return x_grid_; }
  std::size_t sites() const { return paths_.size(); }
  const DensityPath& path(std::size_t site) const { return paths_[site]; }
  std::span<const double> times() const { return paths_.front().times(); }
  std::span<const double> slice(std::size_t site, std::size_t m) const { return paths_[site].at(m); }

  /// rho_t(x_site, .) at an arbitrary t in range (linear in time between stored nodes).
  std::vector<double> slice_at_time(std::size_t site, double t) const;
  /// rho_t(x, .) at arbitrary x and t (band-limited in x, linear in t).
  std::vector<double> interpolate(std::span<const double> x, double t) const;

 private:
  TorusGrid x_grid_;
  std::vector<DensityPath> paths_;
};

struct MvSettings {
  double horizon = 1.0;
  double drift_spacing = 0.01;
  FpOptions fp{};
  unsigned workers = 0;
};

/// The map Phi = Phi2 o Phi1 for a fixed potential grid, kernel and initial profile.
class DriftMap {
 public:
  DriftMap(const ThetaGrid& grid, const InteractionKernel& kernel, InitialProfile profile, MvSettings settings);

  const ThetaGrid& grid() const { return grid_; }
  const InteractionKernel& kernel() const { return kernel_; }
  const InitialProfile& profile() const { return profile_; }
  const MvSettings& settings() const { return settings_; }
  const TorusGrid& x_grid() const { return profile_.x_grid(); }

  /// Zero drift on the map's grids, or any constant.
  SpaceDriftField constant_drift(double value = 0.0) const;

  /// Per-site Fokker-Planck solves with drift h^x and initial slice rho_0(x, .).
  SpaceDensityField phi1(const SpaceDriftField& h) const;
  /// h^x(t) = int J(y - x) <rho_t(y, .), theta>_psi dy by x-grid convolution.
  SpaceDriftField phi2(const SpaceDensityField& rho) const;
  SpaceDriftField operator()(const SpaceDriftField& h) const { return phi2(phi1(h)); }

 private:
  void check_drift(const SpaceDriftField& h) const;

  ThetaGrid grid_;
  InteractionKernel kernel_;
  InitialProfile profile_;
  MvSettings settings_;
  CirculantForceTable table_;
};

inline SpaceDensityField phi1(const DriftMap& map, const SpaceDriftField& h) { return map.phi1(h); }
inline SpaceDriftField phi2(const DriftMap& map, const SpaceDensityField& rho) { return map.phi2(rho); }

struct PicardRecord {
  int iter = 0;
  double sup_diff = 0.0;  ///< sup |Phi[h^n] - h^n|
  double sup_norm = 0.0;  ///< ||Phi[h^n]||_inf
};

struct PicardResult {
  SpaceDensityField rho_hat;
  SpaceDriftField h_hat;
  std::vector<PicardRecord> trace;
  double residual = 0.0;  ///< sup |Phi[h_hat] - h_hat|
};

class PicardNonConvergence : public NumericalError {
 public:
  PicardNonConvergence(const std::string& what, std::vector<PicardRecord> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<PicardRecord>& trace() const { return trace_; }

 private:
  std::vector<PicardRecord> trace_;
};

/// Iterates h <- Phi[h] from h_init until the sup-norm step falls below tol.
/// The returned h_hat is the last iterate whose image was within tol, and
/// rho_hat = Phi1(h_hat).
PicardResult picard_solve(const DriftMap& map, double tol, int max_iter, const SpaceDriftField& h_init);
PicardResult picard_solve(const DriftMap& map, double tol, int max_iter);

/// d_n = sup_s ||Phi^n[h](s) - Phi^n[g](s)||_{L2(T^d)} for n = 0..n_max.
std::vector<double> contraction_diagnostic(const DriftMap& map, const SpaceDriftField& h, const SpaceDriftField& g,
                                           int n_max);

}  // namespace lmf
