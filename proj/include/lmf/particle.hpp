#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lmf/kernel.hpp"
#include "lmf/mckean_vlasov.hpp"
#include "lmf/potential.hpp"
#include "lmf/rng.hpp"

namespace lmf {

/// Spins theta_i on the discrete torus T_N^d, with the key of the counter-based
/// noise stream. The noise of site i at step k is a pure function of
/// (seed, replica, position of i, k).
struct ParticleSystemState {
  int n = 0;
  int dim = 1;
  std::vector<double> theta;
  double time = 0.0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;

  std::size_t sites() const { return theta.size(); }
  std::array<double, 2> position(std::size_t site) const { return TorusGrid{dim, n}.position(site); }
  std::uint64_t stream_id(std::size_t site) const;
  /// Standard normal increment of `site` for the current step.
  double noise(std::size_t site) const;
};

struct SimConfig {
  int n = 64;
  int dim = 1;
  double horizon = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  std::uint32_t replica = 0;
  bool taming = true;
  double noise_scale = 1.0;
  double guard = 5.0;  ///< |theta| must stay below this; defaults to twice the PDE grid bound
  unsigned workers = 1;

  void validate() const;
};

/// Draws theta_i independently from rho_0(i/N, .) e^{-2 psi} by inverse CDF on
/// the theta grid (density linear on each cell). Deterministic in (seed, replica).
ParticleSystemState sample_initial(const ThetaGrid& grid, const InitialProfile& profile, int n, std::uint64_t seed,
                                   std::uint32_t replica = 0);

struct StepOptions {
  double noise_scale = 1.0;
  bool taming = true;
  double guard = 5.0;
  unsigned workers = 1;
};

/// One tamed Euler-Maruyama step of the coupled system, drift
/// -psi'(theta_i) + (1/N^d) sum_j J((j - i)/N) theta_j.
void step_coupled(ParticleSystemState& state, const CirculantForceTable& table, const Potential& potential, double dt,
                  const StepOptions& options = {});

/// Per-site drift paths h_hat^{i/N}(t) for the decoupled system, interpolated
/// from the x-grid solution.
class DecoupledDrive {
 public:
  DecoupledDrive(const SpaceDriftField& h_hat, int n, int dim);
  /// Site-constant drive (used for exchangeability tests and zero drift).
  DecoupledDrive(std::size_t sites, DriftPath path);

  std::size_t sites() const { return paths_.size(); }
  double operator()(std::size_t site, double t) const { return paths_[site](t); }
  const DriftPath& path(std::size_t site) const { return paths_[site]; }

 private:
  std::vector<DriftPath> paths_;
};

/// One tamed Euler-Maruyama step of the decoupled system, drift
/// -psi'(theta_i) + h_hat^{i/N}(t).
void step_decoupled(ParticleSystemState& state, const DecoupledDrive& drive, const Potential& potential, double dt,
                    const StepOptions& options = {});

enum class SimMode { kCoupled, kDecoupled };

struct TrajectoryRequest {
  std::vector<double> snapshot_times;
  /// Record the full state every `path_stride` steps (0 disables).
  int path_stride = 0;
};

struct Snapshot {
  double time = 0.0;
  std::vector<double> theta;
};

struct Trajectory {
  ParticleSystemState initial;
  std::vector<Snapshot> snapshots;
  std::vector<double> path_times;
  std::vector<std::vector<double>> path_states;
};

/// Integrates from `initial` up to the last requested snapshot time (no
/// snapshots: returns the initial state only). Steps are
/// of size config.dt except that the step landing on a snapshot time is
/// shortened to hit it exactly. Only one of `table` / `drive` is used,
/// depending on `mode`.
Trajectory run_trajectory(const SimConfig& config, SimMode mode, const ParticleSystemState& initial,
                          const Potential& potential, const CirculantForceTable* table, const DecoupledDrive* drive,
                          const TrajectoryRequest& request);

}  // namespace lmf
