#include "lmf/particle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lmf/error.hpp"
#include "lmf/parallel.hpp"

namespace lmf {

std::uint64_t ParticleSystemState::stream_id(std::size_t site) const {
  const auto side = static_cast<std::uint64_t>(n);
  if (dim == 1) return rng::position_stream_id(site, side);
  return rng::position_stream_id(site / side, site % side, side);
}

double ParticleSystemState::noise(std::size_t site) const {
  // Consecutive steps share one Box-Muller pair.
  const auto pair = rng::Stream(seed, replica, stream_id(site)).normals(step / 2, rng::Tag::kNoise);
  return step % 2 == 0 ? pair.first : pair.second;
}

void SimConfig::validate() const {
  if (dim != 1 && dim != 2) throw InvalidArgument("sim: dim must be 1 or 2");
  if (n < 2) throw InvalidArgument("sim: N must be at least 2");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("sim: horizon must be positive");
  if (!(dt > 0.0) || dt > horizon) throw InvalidArgument("sim: dt must be in (0, horizon]");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw InvalidArgument("sim: noise_scale must be >= 0");
  if (!(guard > 0.0)) throw InvalidArgument("sim: guard must be positive");
}

namespace {

std::size_t lattice_sites(int n, int dim) {
  return dim == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n;
}

// Position in a cell of width dx carrying mass r under the density that is
// linear from p0 to p1.
double invert_linear_cell(double p0, double p1, double dx, double r) {
  const double slope = (p1 - p0) / dx;
  const double disc = std::max(0.0, p0 * p0 + 2.0 * slope * r);
  const double denom = p0 + std::sqrt(disc);
  if (denom <= 0.0) return 0.5 * dx;
  return std::clamp(2.0 * r / denom, 0.0, dx);
}

double sample_slice(const ThetaGrid& grid, std::span<const double> rho, double u) {
  const auto& nodes = grid.nodes();
  const auto& psi = grid.psi_values();
  const double dx = grid.spacing();
  const std::size_t n = grid.size();
  std::vector<double> p(n);
  for (std::size_t j = 0; j < n; ++j) p[j] = rho[j] * std::exp(-2.0 * psi[j]);
  std::vector<double> cumulative(n, 0.0);
  for (std::size_t j = 0; j + 1 < n; ++j) cumulative[j + 1] = cumulative[j] + 0.5 * dx * (p[j] + p[j + 1]);
  const double target = u * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  std::size_t cell = it == cumulative.begin() ? 0 : static_cast<std::size_t>(it - cumulative.begin()) - 1;
  cell = std::min(cell, n - 2);
  return nodes[cell] + invert_linear_cell(p[cell], p[cell + 1], dx, target - cumulative[cell]);
}

double tamed_increment(double drift, double dt, bool taming) {
  return taming ? dt * drift / (1.0 + dt * std::abs(drift)) : dt * drift;
}

void check_site(double value, std::size_t site, double guard) {
  if (!std::isfinite(value) || std::abs(value) >= guard) {
    throw NumericalError("particle state left the guard box at site " + std::to_string(site) +
                         " (theta = " + std::to_string(value) + ")");
  }
}

template <class DriftFn>
void update_sites(ParticleSystemState& state, double dt, const StepOptions& options, DriftFn&& drift_of) {
  if (!(dt > 0.0)) throw InvalidArgument("step: dt must be positive");
  const std::size_t sites = state.sites();
  const double noise_amp = options.noise_scale * std::sqrt(dt);
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (sites + kChunk - 1) / kChunk;
  std::vector<double> next(sites);
  parallel_for(chunks, options.workers, [&](std::size_t c) {
    const std::size_t end = std::min(sites, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      double value = state.theta[i] + tamed_increment(drift_of(i), dt, options.taming);
      if (noise_amp > 0.0) value += noise_amp * state.noise(i);
      check_site(value, i, options.guard);
      next[i] = value;
    }
  });
  state.theta = std::move(next);
  state.time += dt;
  ++state.step;
}

}  // namespace

ParticleSystemState sample_initial(const ThetaGrid& grid, const InitialProfile& profile, int n, std::uint64_t seed,
                                   std::uint32_t replica) {
  const int dim = profile.x_grid().dim;
  if (n < 2) throw InvalidArgument("sample_initial: N must be at least 2");
  ParticleSystemState state;
  state.n = n;
  state.dim = dim;
  state.seed = seed;
  state.replica = replica;
  state.theta.resize(lattice_sites(n, dim));
  for (std::size_t i = 0; i < state.sites(); ++i) {
    const auto pos = state.position(i);
    const auto slice = profile.interpolate(grid, std::span<const double>(pos.data(), dim));
    const double u = rng::Stream(seed, replica, state.stream_id(i)).uniform(0, rng::Tag::kInitial);
    state.theta[i] = sample_slice(grid, slice, u);
  }
  return state;
}

void step_coupled(ParticleSystemState& state, const CirculantForceTable& table, const Potential& potential, double dt,
                  const StepOptions& options) {
  if (table.side() != state.n || table.dim() != state.dim) {
    throw InvalidArgument("step_coupled: force table does not match the lattice");
  }
  const auto force = table.convolve(state.theta);
  update_sites(state, dt, options,
               [&](std::size_t i) { return -potential.first_derivative(state.theta[i]) + force[i]; });
}

DecoupledDrive::DecoupledDrive(const SpaceDriftField& h_hat, int n, int dim) {
  if (dim != h_hat.x_grid().dim) throw InvalidArgument("DecoupledDrive: dimension mismatch");
  const std::size_t sites = lattice_sites(n, dim);
  const TorusGrid lattice{dim, n};
  paths_.reserve(sites);
  for (std::size_t i = 0; i < sites; ++i) {
    const auto pos = lattice.position(i);
    paths_.push_back(h_hat.drift_path_at(std::span<const double>(pos.data(), dim)));
  }
}

DecoupledDrive::DecoupledDrive(std::size_t sites, DriftPath path) : paths_(sites, std::move(path)) {}

void step_decoupled(ParticleSystemState& state, const DecoupledDrive& drive, const Potential& potential, double dt,
                    const StepOptions& options) {
  if (drive.sites() != state.sites()) throw InvalidArgument("step_decoupled: drive does not match the lattice");
  const double t = state.time;
  update_sites(state, dt, options,
               [&](std::size_t i) { return -potential.first_derivative(state.theta[i]) + drive(i, t); });
}

Trajectory run_trajectory(const SimConfig& config, SimMode mode, const ParticleSystemState& initial,
                          const Potential& potential, const CirculantForceTable* table, const DecoupledDrive* drive,
                          const TrajectoryRequest& request) {
  config.validate();
  if (initial.n != config.n || initial.dim != config.dim) {
    throw InvalidArgument("run_trajectory: initial state does not match the configuration");
  }
  if (mode == SimMode::kCoupled && table == nullptr) throw InvalidArgument("run_trajectory: coupled mode needs a table");
  if (mode == SimMode::kDecoupled && drive == nullptr) {
    throw InvalidArgument("run_trajectory: decoupled mode needs a drive");
  }
  if (request.path_stride < 0) throw InvalidArgument("run_trajectory: path_stride must be >= 0");
  const auto& snaps = request.snapshot_times;
  Trajectory out;
  out.initial = initial;
  if (snaps.empty()) return out;
  if (!std::is_sorted(snaps.begin(), snaps.end())) throw InvalidArgument("run_trajectory: snapshot times not sorted");
  if (snaps.front() < initial.time || snaps.back() > config.horizon + 1e-12) {
    throw InvalidArgument("run_trajectory: snapshot times outside [t0, horizon]");
  }

  const StepOptions options{config.noise_scale, config.taming, config.guard, config.workers};
  ParticleSystemState state = initial;
  state.seed = config.seed;
  state.replica = config.replica;
  std::uint64_t steps_taken = 0;
  auto record_path = [&] {
    out.path_times.push_back(state.time);
    out.path_states.push_back(state.theta);
  };
  if (request.path_stride > 0) record_path();

  for (const double target : snaps) {
    while (target - state.time > 1e-12 * std::max(1.0, target)) {
      double h = std::min(config.dt, target - state.time);
      const bool lands = target - state.time - h < 1e-9 * config.dt;
      if (lands) h = target - state.time;
      if (mode == SimMode::kCoupled) {
        step_coupled(state, *table, potential, h, options);
      } else {
        step_decoupled(state, *drive, potential, h, options);
      }
      if (lands) state.time = target;
      ++steps_taken;
      if (request.path_stride > 0 && steps_taken % static_cast<std::uint64_t>(request.path_stride) == 0) record_path();
    }
    state.time = target;
    out.snapshots.push_back({target, state.theta});
  }
  if (request.path_stride > 0 && out.path_times.back() < state.time) record_path();
  return out;
}

}  // namespace lmf
