#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lmf/error.hpp"
#include "lmf/fokker_planck.hpp"
#include "lmf/kernel.hpp"
#include "lmf/mckean_vlasov.hpp"
#include "lmf/particle.hpp"
#include "lmf/potential.hpp"

namespace lmf {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct ExperimentConfig {
  std::vector<double> potential_coefficients{0.0, 0.0, 0.0, 0.0, 1.0};
  double theta_max = 2.5;
  int n_theta = 512;
  KernelForm kernel_form = KernelForm::kCosine;
  double kernel_amplitude = 0.5;
  double kernel_width = 0.1;
  int dim = 1;
  int m_sites = 32;
  /// rho_0(x, .) is tilted Gibbs with tilt b(x) = tilt_mean + tilt_amplitude cos(2 pi x_1).
  double tilt_mean = 0.3;
  double tilt_amplitude = 0.5;
  double horizon = 1.0;
  double dt_pde = 1e-3;
  double dt_sde = 1e-3;
  double drift_spacing = 0.01;
  double picard_tol = 1e-9;
  int picard_max_iter = 25;
  std::vector<int> sim_n{64, 256, 1024};
  int sim_replicas = 8;
  std::uint64_t sim_seed = 1;
  std::vector<double> sim_snap{0.25, 0.5, 1.0};
  int sim_path_stride = 10;
  std::vector<int> chaos_n{64, 256};
  std::vector<double> chaos_sites{0.25, 0.75};
  double chaos_time = 1.0;
  int chaos_replicas = 2000;
  int fp_trials = 20;
  std::uint64_t fp_seed = 7;
  std::vector<double> density_times{0.0, 0.5, 1.0};
  std::filesystem::path output_directory = "out";
  std::string output_format = "csv";
  unsigned workers = 0;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Parses the JSON text of a config file. Unknown keys are errors. `overrides`
/// are "dotted.key=value" strings applied before parsing; values are read as
/// JSON and fall back to plain strings.
ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
/// The reference configuration as JSON text.
std::string default_config_json();

/// Everything derived from the configuration that the experiments share.
struct Problem {
  Potential potential;
  ThetaGrid grid;
  InteractionKernel kernel;
  InitialProfile profile;
  MvSettings settings;
};
Problem build_problem(const ExperimentConfig& config);
DriftMap build_map(const Problem& problem);

/// One output table; cells are integers or reals.
struct Table {
  using Cell = std::variant<long long, double>;
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};
/// Writes `<name>.csv` or `<name>.json` into the directory and returns the path.
std::filesystem::path write_table(const Table& table, const std::filesystem::path& directory,
                                  const std::string& format);

struct SolveMvOutput {
  PicardResult result;
  std::vector<std::filesystem::path> files;
};
/// Picard solve; writes picard, hhat and rho_hat tables. On non-convergence the
/// picard table is written and PicardNonConvergence propagates.
SolveMvOutput run_solve_mv(const ExperimentConfig& config);

struct SimulateOptions {
  SimMode mode = SimMode::kCoupled;
  std::optional<int> n;
  std::optional<double> horizon;
  std::optional<double> dt;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> snap;
};
std::vector<std::filesystem::path> run_simulate(const ExperimentConfig& config, const SimulateOptions& options);

struct HdlRow {
  int n = 0;
  std::uint64_t seed = 0;
  double t = 0.0;
  double bl_distance = 0.0;
};
struct EntropyRow {
  int n = 0;
  std::uint64_t seed = 0;
  double drift_mismatch = 0.0;
};
struct HdlOutput {
  std::vector<HdlRow> hdl;
  std::vector<EntropyRow> entropy;
  std::vector<std::filesystem::path> files;
};
/// Coupled runs for every N and seed, bl_distance against rho_hat at the
/// snapshot times and the drift mismatch against h_hat. `solution` is reused
/// when given, otherwise the mean-field problem is solved inline.
HdlOutput run_hdl_sweep(const ExperimentConfig& config, const PicardResult* solution = nullptr,
                        bool write_files = true);

struct ChaosRow {
  int n = 0;
  int k = 0;
  double t = 0.0;
  double distance = 0.0;
  int replicas = 0;
};
struct ChaosFloorRow {
  double site = 0.0;
  double t = 0.0;
  double distance = 0.0;
  int replicas = 0;
};
struct ChaosOutput {
  std::vector<ChaosRow> joint;          ///< coupled replicas, all sites jointly
  std::vector<ChaosRow> paired;         ///< coupled vs decoupled replicas sharing their noise
  std::vector<ChaosFloorRow> floor;     ///< decoupled replicas, one site at a time
  double decoupled_joint = 0.0;         ///< decoupled replicas, all sites jointly
  std::vector<std::filesystem::path> files;
  double noise_floor() const;           ///< mean of the single-site decoupled distances
};
ChaosOutput run_chaos_test(const ExperimentConfig& config, const PicardResult* solution = nullptr,
                           bool write_files = true);

/// Random smooth drift h(t) = sum_{k=0..3} a_k cos(pi k t) + b_k sin(pi k t).
DriftPath random_smooth_drift(std::uint64_t seed, std::uint32_t trial, std::uint32_t salt, double horizon,
                              double spacing, double scale = 1.0);
/// Random smooth normalized density exp(b theta + c cos(w theta + phi)) / Z.
std::vector<double> random_smooth_density(const ThetaGrid& grid, std::uint64_t seed, std::uint32_t trial);

struct FpSuite {
  std::vector<BoundReport> norm_growth;        ///< rate 1/2
  std::vector<BoundReport> norm_growth_rate1;  ///< rate 1
  std::vector<BoundReport> stability;
  std::size_t violations(const std::vector<BoundReport>& reports) const;
};
FpSuite fp_property_suite(const ThetaGrid& grid, int trials, std::uint64_t seed, double horizon, double drift_spacing,
                          const FpOptions& options, unsigned workers = 0);

struct FpValidateOutput {
  FpSuite suite;
  double max_mass_error = 0.0;
  double max_moment_residual = 0.0;
  std::vector<std::filesystem::path> files;
};
/// Reference-slice diagnostics (fp_validate table) plus the random-drift bound
/// suites (fp_bounds table).
FpValidateOutput run_fp_validate(const ExperimentConfig& config);

}  // namespace lmf
