#include "lmf/mckean_vlasov.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "lmf/parallel.hpp"
#include "lmf/torus.hpp"

namespace lmf {
namespace {

// Index m and fraction u with t = (m + u) * spacing, m in [0, intervals - 1].
std::pair<int, double> locate(double t, double spacing, int intervals) {
  const double pos = t / spacing;
  if (pos < -1e-9 || pos > intervals + 1e-9) {
    throw InvalidArgument("time " + std::to_string(t) + " outside the stored horizon");
  }
  const int m = std::clamp(static_cast<int>(std::floor(pos)), 0, std::max(0, intervals - 1));
  return {m, std::clamp(pos - m, 0.0, 1.0)};
}

}  // namespace

// ---------------------------------------------------------------------------
// TorusGrid

std::array<double, 2> TorusGrid::position(std::size_t site) const {
  if (dim == 1) return {static_cast<double>(site) / side, 0.0};
  return {static_cast<double>(site / side) / side, static_cast<double>(site % side) / side};
}

std::vector<double> TorusGrid::interpolation_weights(std::span<const double> x) const {
  if (static_cast<int>(x.size()) < dim) throw InvalidArgument("point has too few coordinates");
  const auto w1 = fourier_interpolation_weights(side, x[0]);
  if (dim == 1) return w1;
  const auto w2 = fourier_interpolation_weights(side, x[1]);
  std::vector<double> w(sites());
  for (int a = 0; a < side; ++a) {
    for (int b = 0; b < side; ++b) w[static_cast<std::size_t>(a) * side + b] = w1[a] * w2[b];
  }
  return w;
}

// ---------------------------------------------------------------------------
// InitialProfile

InitialProfile::InitialProfile(const ThetaGrid& grid, TorusGrid x_grid, std::vector<std::vector<double>> slices)
    : x_grid_(x_grid), slices_(std::move(slices)) {
  if (x_grid_.dim != 1 && x_grid_.dim != 2) throw InvalidArgument("x-grid dimension must be 1 or 2");
  if (x_grid_.side < 1) throw InvalidArgument("x-grid needs at least one site per axis");
  if (slices_.size() != x_grid_.sites()) throw InvalidArgument("profile needs one slice per x-grid site");
  for (std::size_t s = 0; s < slices_.size(); ++s) {
    const auto& sl = slices_[s];
    if (static_cast<int>(sl.size()) != grid.size()) throw InvalidArgument("profile slice does not match theta grid");
    for (double v : sl) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("profile slices must be nonnegative and finite");
    }
    const double mass = weighted_mass(grid, sl);
    if (std::abs(mass - 1.0) > 1e-9) {
      throw InvalidArgument("profile slice " + std::to_string(s) + " is not normalized");
    }
    norms_.push_back(weighted_norm(grid, sl));
  }
}

InitialProfile InitialProfile::tilted_gibbs(const ThetaGrid& grid, TorusGrid x_grid,
                                            const std::function<double(std::span<const double>)>& tilt) {
  std::vector<std::vector<double>> slices;
  for (std::size_t s = 0; s < x_grid.sites(); ++s) {
    const auto x = x_grid.position(s);
    slices.push_back(tilted_gibbs_density(grid, tilt(x)));
  }
  return {grid, x_grid, std::move(slices)};
}

double InitialProfile::sup_norm() const { return *std::max_element(norms_.begin(), norms_.end()); }

double InitialProfile::max_neighbour_jump(const ThetaGrid& grid) const {
  double jump = 0.0;
  std::vector<double> d(grid.size());
  const int side = x_grid_.side;
  for (std::size_t s = 0; s < sites(); ++s) {
    // Neighbour along the last axis, with wrap-around.
    const std::size_t row = s / side;
    const std::size_t next = row * side + (s % side + 1) % side;
    for (int j = 0; j < grid.size(); ++j) d[j] = slices_[s][j] - slices_[next][j];
    jump = std::max(jump, weighted_norm(grid, d));
  }
  return jump;
}

std::vector<double> InitialProfile::interpolate(const ThetaGrid& grid, std::span<const double> x) const {
  const auto w = x_grid_.interpolation_weights(x);
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t s = 0; s < sites(); ++s) {
    if (w[s] == 0.0) continue;
    for (int j = 0; j < grid.size(); ++j) out[j] += w[s] * slices_[s][j];
  }
  for (double& v : out) v = std::max(v, 0.0);
  return normalize_density(grid, out);
}

// ---------------------------------------------------------------------------
// SpaceDriftField

SpaceDriftField::SpaceDriftField(TorusGrid x_grid, double time_spacing, int intervals, double fill)
    : x_grid_(x_grid),
      spacing_(time_spacing),
      intervals_(intervals),
      values_(x_grid.sites() * static_cast<std::size_t>(intervals + 1), fill) {
  if (!(time_spacing > 0.0) || intervals < 1) throw InvalidArgument("drift field needs a positive time grid");
}

DriftPath SpaceDriftField::drift_path(std::size_t site) const {
  const auto v = site_values(site);
  return {spacing_, std::vector<double>(v.begin(), v.end())};
}

double SpaceDriftField::sup_norm() const {
  double s = 0.0;
  for (double v : values_) s = std::max(s, std::abs(v));
  return s;
}

bool SpaceDriftField::is_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double SpaceDriftField::sup_distance(const SpaceDriftField& other) const {
  if (other.values_.size() != values_.size()) throw InvalidArgument("drift fields have different shapes");
  double s = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) s = std::max(s, std::abs(values_[i] - other.values_[i]));
  return s;
}

double SpaceDriftField::sup_l2_distance(const SpaceDriftField& other) const {
  if (other.values_.size() != values_.size()) throw InvalidArgument("drift fields have different shapes");
  double best = 0.0;
  for (int m = 0; m <= intervals_; ++m) {
    double acc = 0.0;
    for (std::size_t s = 0; s < sites(); ++s) {
      const double d = at(s, m) - other.at(s, m);
      acc += d * d;
    }
    best = std::max(best, std::sqrt(acc / static_cast<double>(sites())));
  }
  return best;
}

double SpaceDriftField::interpolate(std::span<const double> x, double t) const {
  const auto w = x_grid_.interpolation_weights(x);
  const auto [m, u] = locate(t, spacing_, intervals_);
  double acc = 0.0;
  for (std::size_t s = 0; s < sites(); ++s) acc += w[s] * ((1.0 - u) * at(s, m) + u * at(s, m + 1));
  return acc;
}

DriftPath SpaceDriftField::drift_path_at(std::span<const double> x) const {
  const auto w = x_grid_.interpolation_weights(x);
  std::vector<double> v(intervals_ + 1, 0.0);
  for (std::size_t s = 0; s < sites(); ++s) {
    for (int m = 0; m <= intervals_; ++m) v[m] += w[s] * at(s, m);
  }
  return {spacing_, std::move(v)};
}

// ---------------------------------------------------------------------------
// SpaceDensityField

SpaceDensityField::SpaceDensityField(TorusGrid x_grid, std::vector<DensityPath> paths)
    : x_grid_(x_grid), paths_(std::move(paths)) {
  if (paths_.size() != x_grid_.sites() || paths_.empty()) throw InvalidArgument("density field needs one path per site");
}

std::vector<double> SpaceDensityField::slice_at_time(std::size_t site, double t) const {
  const auto times = this->times();
  const int intervals = static_cast<int>(times.size()) - 1;
  const auto& p = paths_[site];
  if (intervals == 0) return {p.at(0).begin(), p.at(0).end()};
  const double spacing = times[1] - times[0];
  const auto [m, u] = locate(t, spacing, intervals);
  std::vector<double> out(p.grid_size());
  for (int j = 0; j < p.grid_size(); ++j) out[j] = (1.0 - u) * p.at(m)[j] + u * p.at(m + 1)[j];
  return out;
}

std::vector<double> SpaceDensityField::interpolate(std::span<const double> x, double t) const {
  const auto w = x_grid_.interpolation_weights(x);
  std::vector<double> out(paths_.front().grid_size(), 0.0);
  for (std::size_t s = 0; s < sites(); ++s) {
    if (w[s] == 0.0) continue;
    const auto sl = slice_at_time(s, t);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[s] * sl[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// DriftMap

DriftMap::DriftMap(const ThetaGrid& grid, const InteractionKernel& kernel, InitialProfile profile, MvSettings settings)
    : grid_(grid),
      kernel_(kernel),
      profile_(std::move(profile)),
      settings_(settings),
      table_(kernel, std::max(2, profile_.x_grid().side)) {
  if (kernel.dim() != profile_.x_grid().dim) throw InvalidArgument("kernel and profile dimensions differ");
  const double steps = settings_.horizon / settings_.drift_spacing;
  if (!(settings_.horizon > 0.0) || std::abs(steps - std::round(steps)) > 1e-9 * steps) {
    throw InvalidArgument("horizon must be a positive multiple of the drift time spacing");
  }
}

SpaceDriftField DriftMap::constant_drift(double value) const {
  const int intervals = static_cast<int>(std::llround(settings_.horizon / settings_.drift_spacing));
  return {x_grid(), settings_.drift_spacing, intervals, value};
}

void DriftMap::check_drift(const SpaceDriftField& h) const {
  if (h.sites() != profile_.sites() || h.x_grid().side != x_grid().side) {
    throw InvalidArgument("drift field does not live on the profile's x-grid");
  }
  if (std::abs(h.time_spacing() - settings_.drift_spacing) > 1e-12 ||
      std::abs(h.horizon() - settings_.horizon) > 1e-9) {
    throw InvalidArgument("drift field does not live on the map's time grid");
  }
  if (!h.is_finite()) throw InvalidArgument("drift field has non-finite values");
}

SpaceDensityField DriftMap::phi1(const SpaceDriftField& h) const {
  check_drift(h);
  const std::size_t sites = profile_.sites();
  std::vector<std::optional<DensityPath>> results(sites);
  parallel_for(sites, settings_.workers, [&](std::size_t s) {
    try {
      results[s] = solve_fp(grid_, profile_.slice(s), h.drift_path(s), settings_.horizon, settings_.fp);
    } catch (const NumericalError& e) {
      throw NumericalError("Fokker-Planck solve at x-site " + std::to_string(s) + ": " + e.what());
    }
  });
  std::vector<DensityPath> paths;
  paths.reserve(sites);
  for (auto& r : results) paths.push_back(std::move(*r));
  return {x_grid(), std::move(paths)};
}

SpaceDriftField DriftMap::phi2(const SpaceDensityField& rho) const {
  if (rho.sites() != profile_.sites()) throw InvalidArgument("density field does not live on the profile's x-grid");
  const int intervals = static_cast<int>(rho.times().size()) - 1;
  SpaceDriftField h(x_grid(), settings_.drift_spacing, intervals);
  const std::size_t sites = rho.sites();
  std::vector<double> moments(sites);
  const bool single = x_grid().side == 1;
  for (int m = 0; m <= intervals; ++m) {
    for (std::size_t s = 0; s < sites; ++s) moments[s] = weighted_first_moment(grid_, rho.slice(s, m));
    if (single) {
      // One site: the torus integral collapses to J(0) times the moment.
      const double zero[2] = {0.0, 0.0};
      h.at(0, m) = kernel_(zero) * moments[0];
      continue;
    }
    const auto conv = table_.convolve(moments);
    for (std::size_t s = 0; s < sites; ++s) h.at(s, m) = conv[s];
  }
  return h;
}

// ---------------------------------------------------------------------------
// Picard iteration

PicardResult picard_solve(const DriftMap& map, double tol, int max_iter, const SpaceDriftField& h_init) {
  if (!(tol > 0.0)) throw InvalidArgument("Picard tolerance must be positive");
  if (max_iter < 1) throw InvalidArgument("Picard needs max_iter >= 1");
  SpaceDriftField h = h_init;
  std::vector<PicardRecord> trace;
  for (int iter = 1; iter <= max_iter; ++iter) {
    SpaceDensityField rho = map.phi1(h);
    SpaceDriftField next = map.phi2(rho);
    const double diff = next.sup_distance(h);
    trace.push_back({iter, diff, next.sup_norm()});
    if (diff < tol) return {std::move(rho), std::move(h), std::move(trace), diff};
    h = std::move(next);
  }
  std::ostringstream message;
  message << "Picard iteration did not reach tol " << tol << " in " << max_iter << " iterations (last step "
          << trace.back().sup_diff << ")";
  throw PicardNonConvergence(message.str(), std::move(trace));
}

PicardResult picard_solve(const DriftMap& map, double tol, int max_iter) {
  return picard_solve(map, tol, max_iter, map.constant_drift(0.0));
}

std::vector<double> contraction_diagnostic(const DriftMap& map, const SpaceDriftField& h, const SpaceDriftField& g,
                                           int n_max) {
  if (!h.is_finite() || !g.is_finite()) throw InvalidArgument("contraction diagnostic needs finite drift fields");
  std::vector<double> d;
  SpaceDriftField a = h, b = g;
  d.push_back(a.sup_l2_distance(b));
  for (int n = 1; n <= n_max; ++n) {
    a = map(a);
    b = map(b);
    d.push_back(a.sup_l2_distance(b));
  }
  return d;
}

}  // namespace lmf
