#include "lmf/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "lmf/measures.hpp"
#include "lmf/parallel.hpp"
#include "lmf/rng.hpp"

namespace lmf {

using nlohmann::json;

namespace {

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("malformed key '" + key + "'");
    parts.push_back(part);
  }
  if (parts.empty()) throw ConfigError("empty key");
  return parts;
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const auto parts = split_key(assignment.substr(0, eq));
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& child = (*node)[parts[i]];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError("override '" + assignment + "' descends into a non-section");
    node = &child;
  }
  (*node)[parts.back()] = value;
}

// Reads known keys out of a copy of the document; whatever is left is unknown.
class Reader {
 public:
  explicit Reader(json doc) : rest_(std::move(doc)) {}

  template <class T>
  void get(const std::string& key, T& out) {
    const auto parts = split_key(key);
    json* node = &rest_;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->is_object() || !node->contains(parts[i])) return;
      node = &(*node)[parts[i]];
    }
    if (!node->is_object()) throw ConfigError("'" + key + "': parent is not a section");
    auto it = node->find(parts.back());
    if (it == node->end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("'" + key + "' has the wrong type");
    }
    node->erase(it);
  }

  void finish() const {
    std::vector<std::string> leftovers;
    collect(rest_, "", leftovers);
    if (!leftovers.empty()) throw ConfigError("unknown config key '" + leftovers.front() + "'");
  }

 private:
  static void collect(const json& node, const std::string& prefix, std::vector<std::string>& out) {
    if (!node.is_object()) {
      out.push_back(prefix);
      return;
    }
    for (auto it = node.begin(); it != node.end(); ++it) {
      collect(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  }

  json rest_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

bool strictly_increasing(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](double a, double b) { return !(a < b); }) == v.end();
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_cell(const Table::Cell& cell) {
  if (std::holds_alternative<long long>(cell)) return std::to_string(std::get<long long>(cell));
  return format_real(std::get<double>(cell));
}

SimConfig sim_config(const ExperimentConfig& c, int n, std::uint64_t seed, std::uint32_t replica, unsigned workers) {
  SimConfig s;
  s.n = n;
  s.dim = c.dim;
  s.horizon = c.horizon;
  s.dt = c.dt_sde;
  s.seed = seed;
  s.replica = replica;
  s.guard = 2.0 * c.theta_max;
  s.workers = workers;
  return s;
}

PicardResult solve_or_reuse(const ExperimentConfig& config, const DriftMap& map, const PicardResult* solution) {
  if (solution != nullptr) {
    if (solution->h_hat.sites() != map.x_grid().sites() || solution->h_hat.horizon() + 1e-12 < config.horizon) {
      throw InvalidArgument("supplied mean-field solution does not match the configuration");
    }
    return *solution;
  }
  return picard_solve(map, config.picard_tol, config.picard_max_iter);
}

std::vector<std::size_t> entropy_sites(std::size_t sites, std::uint64_t seed, int n) {
  std::vector<std::size_t> all(sites);
  for (std::size_t i = 0; i < sites; ++i) all[i] = i;
  constexpr std::size_t kMaxSites = 1024;
  if (sites <= kMaxSites) return all;
  const rng::Stream stream(seed, 0, static_cast<std::uint64_t>(n));
  for (std::size_t i = 0; i < kMaxSites; ++i) {
    const double u = stream.uniform(i, rng::Tag::kSubsample);
    const std::size_t j = i + static_cast<std::size_t>(u * static_cast<double>(sites - i));
    std::swap(all[i], all[std::min(j, sites - 1)]);
  }
  all.resize(kMaxSites);
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<std::string> position_header(int dim) {
  return dim == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x1", "x2"};
}

void append_position(std::vector<Table::Cell>& row, const std::array<double, 2>& x, int dim) {
  row.emplace_back(x[0]);
  if (dim == 2) row.emplace_back(x[1]);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(potential_coefficients.size() >= 5 && potential_coefficients.size() % 2 == 1,
          "potential.coefficients must describe an even polynomial degree >= 4");
  require(theta_max > 0.0, "grid.theta_max must be positive");
  require(n_theta >= 64, "grid.n_theta must be at least 64");
  require(kernel_amplitude >= 0.0 && std::isfinite(kernel_amplitude), "kernel.amplitude must be >= 0");
  require(kernel_width > 0.0, "kernel.width must be positive");
  require(dim == 1 || dim == 2, "system.dim must be 1 or 2");
  require(m_sites >= 1, "system.M must be >= 1");
  require(std::isfinite(tilt_mean) && std::isfinite(tilt_amplitude), "initial tilt must be finite");
  require(horizon > 0.0 && std::isfinite(horizon), "time.T must be positive");
  require(dt_pde > 0.0, "time.dt_pde must be positive");
  require(dt_sde > 0.0 && dt_sde <= horizon, "time.dt_sde must be in (0, T]");
  require(drift_spacing > 0.0 && drift_spacing <= horizon, "time.drift_spacing must be in (0, T]");
  require(dt_pde <= drift_spacing, "time.dt_pde must not exceed time.drift_spacing");
  const double intervals = horizon / drift_spacing;
  require(std::abs(intervals - std::round(intervals)) < 1e-9, "time.T must be a multiple of time.drift_spacing");
  require(picard_tol > 0.0, "picard.tol must be positive");
  require(picard_max_iter >= 1, "picard.max_iter must be >= 1");
  require(!sim_n.empty(), "sim.N must be nonempty");
  require(std::adjacent_find(sim_n.begin(), sim_n.end(), [](int a, int b) { return a >= b; }) == sim_n.end(),
          "sim.N must be sorted strictly increasing");
  require(sim_n.front() >= 2, "sim.N entries must be >= 2");
  require(sim_replicas >= 1, "sim.replicas must be >= 1");
  require(strictly_increasing(sim_snap), "sim.snap must be strictly increasing");
  require(sim_snap.empty() || (sim_snap.front() > 0.0 && sim_snap.back() <= horizon + 1e-12),
          "sim.snap times must lie in (0, T]");
  require(sim_path_stride >= 1, "sim.path_stride must be >= 1");
  require(!chaos_n.empty() && chaos_n.front() >= 2, "chaos.N must be nonempty with entries >= 2");
  require(std::adjacent_find(chaos_n.begin(), chaos_n.end(), [](int a, int b) { return a >= b; }) == chaos_n.end(),
          "chaos.N must be sorted strictly increasing");
  require(!chaos_sites.empty() && chaos_sites.size() <= 3, "chaos.sites must hold 1 to 3 sites");
  for (double x : chaos_sites) require(x >= 0.0 && x < 1.0, "chaos.sites must lie in [0, 1)");
  require(std::set<double>(chaos_sites.begin(), chaos_sites.end()).size() == chaos_sites.size(),
          "chaos.sites must be distinct");
  require(chaos_time > 0.0 && chaos_time <= horizon + 1e-12, "chaos.time must lie in (0, T]");
  require(chaos_replicas >= 1000, "chaos.replicas must be at least 1000");
  require(fp_trials >= 1, "fp.trials must be >= 1");
  for (double t : density_times) require(t >= 0.0 && t <= horizon + 1e-12, "output.density_times must lie in [0, T]");
  require(output_format == "csv" || output_format == "json", "output.format must be csv or json");
}

ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json doc = json::parse(json_text, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  if (doc.is_null()) doc = json::object();
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& o : overrides) apply_override(doc, o);

  ExperimentConfig c;
  Reader r(doc);
  r.get("potential.coefficients", c.potential_coefficients);
  r.get("grid.theta_max", c.theta_max);
  r.get("grid.n_theta", c.n_theta);
  std::string form = "cosine";
  r.get("kernel.form", form);
  if (form == "cosine") {
    c.kernel_form = KernelForm::kCosine;
  } else if (form == "wrapped_gaussian") {
    c.kernel_form = KernelForm::kWrappedGaussian;
  } else {
    throw ConfigError("kernel.form must be cosine or wrapped_gaussian");
  }
  r.get("kernel.amplitude", c.kernel_amplitude);
  r.get("kernel.width", c.kernel_width);
  r.get("system.dim", c.dim);
  r.get("system.M", c.m_sites);
  r.get("initial.tilt_mean", c.tilt_mean);
  r.get("initial.tilt_amplitude", c.tilt_amplitude);
  r.get("time.T", c.horizon);
  r.get("time.dt_pde", c.dt_pde);
  r.get("time.dt_sde", c.dt_sde);
  r.get("time.drift_spacing", c.drift_spacing);
  r.get("picard.tol", c.picard_tol);
  r.get("picard.max_iter", c.picard_max_iter);
  r.get("sim.N", c.sim_n);
  r.get("sim.replicas", c.sim_replicas);
  long long seed = static_cast<long long>(c.sim_seed);
  r.get("sim.seed", seed);
  require(seed >= 0, "sim.seed must be >= 0");
  c.sim_seed = static_cast<std::uint64_t>(seed);
  r.get("sim.snap", c.sim_snap);
  r.get("sim.path_stride", c.sim_path_stride);
  r.get("chaos.N", c.chaos_n);
  r.get("chaos.sites", c.chaos_sites);
  r.get("chaos.time", c.chaos_time);
  r.get("chaos.replicas", c.chaos_replicas);
  r.get("fp.trials", c.fp_trials);
  long long fp_seed = static_cast<long long>(c.fp_seed);
  r.get("fp.seed", fp_seed);
  require(fp_seed >= 0, "fp.seed must be >= 0");
  c.fp_seed = static_cast<std::uint64_t>(fp_seed);
  std::string directory = c.output_directory.string();
  r.get("output.directory", directory);
  c.output_directory = directory;
  r.get("output.format", c.output_format);
  r.get("output.density_times", c.density_times);
  int workers = 0;
  r.get("workers", workers);
  require(workers >= 0, "workers must be >= 0");
  c.workers = static_cast<unsigned>(workers);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string default_config_json() {
  const ExperimentConfig c;
  json doc = {
      {"potential", {{"coefficients", c.potential_coefficients}}},
      {"grid", {{"theta_max", c.theta_max}, {"n_theta", c.n_theta}}},
      {"kernel", {{"form", "cosine"}, {"amplitude", c.kernel_amplitude}, {"width", c.kernel_width}}},
      {"system", {{"dim", c.dim}, {"M", c.m_sites}}},
      {"initial", {{"tilt_mean", c.tilt_mean}, {"tilt_amplitude", c.tilt_amplitude}}},
      {"time", {{"T", c.horizon}, {"dt_pde", c.dt_pde}, {"dt_sde", c.dt_sde}, {"drift_spacing", c.drift_spacing}}},
      {"picard", {{"tol", c.picard_tol}, {"max_iter", c.picard_max_iter}}},
      {"sim",
       {{"N", c.sim_n},
        {"replicas", c.sim_replicas},
        {"seed", c.sim_seed},
        {"snap", c.sim_snap},
        {"path_stride", c.sim_path_stride}}},
      {"chaos",
       {{"N", c.chaos_n}, {"sites", c.chaos_sites}, {"time", c.chaos_time}, {"replicas", c.chaos_replicas}}},
      {"fp", {{"trials", c.fp_trials}, {"seed", c.fp_seed}}},
      {"output",
       {{"directory", c.output_directory.string()}, {"format", c.output_format}, {"density_times", c.density_times}}},
      {"workers", c.workers},
  };
  return doc.dump(2) + "\n";
}

Problem build_problem(const ExperimentConfig& config) {
  Potential potential(config.potential_coefficients);
  ThetaGrid grid(potential, config.theta_max, config.n_theta);
  InteractionKernel kernel(config.kernel_form, config.dim, config.kernel_amplitude, config.kernel_width);
  const double mean = config.tilt_mean;
  const double amp = config.tilt_amplitude;
  auto profile = InitialProfile::tilted_gibbs(grid, TorusGrid{config.dim, config.m_sites},
                                              [mean, amp](std::span<const double> x) {
                                                return mean + amp * std::cos(2.0 * std::numbers::pi * x[0]);
                                              });
  MvSettings settings;
  settings.horizon = config.horizon;
  settings.drift_spacing = config.drift_spacing;
  settings.fp.dt = config.dt_pde;
  settings.workers = config.workers;
  return {std::move(potential), std::move(grid), kernel, std::move(profile), settings};
}

DriftMap build_map(const Problem& problem) {
  return DriftMap(problem.grid, problem.kernel, problem.profile, problem.settings);
}

std::filesystem::path write_table(const Table& table, const std::filesystem::path& directory,
                                  const std::string& format) {
  if (format != "csv" && format != "json") throw InvalidArgument("unknown output format '" + format + "'");
  std::filesystem::create_directories(directory);
  const auto path = directory / (table.name + (format == "json" ? ".json" : ".csv"));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  if (format == "json") {
    json rows = json::array();
    for (const auto& row : table.rows) {
      json obj = json::object();
      for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (std::holds_alternative<long long>(row[c])) {
          obj[table.header[c]] = std::get<long long>(row[c]);
        } else {
          obj[table.header[c]] = std::get<double>(row[c]);
        }
      }
      rows.push_back(std::move(obj));
    }
    out << rows.dump(2) << "\n";
  } else {
    for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
    out << "\n";
    for (const auto& row : table.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_cell(row[c]);
      out << "\n";
    }
  }
  if (!out) throw Error("failed writing " + path.string());
  return path;
}

SolveMvOutput run_solve_mv(const ExperimentConfig& config) {
  const Problem problem = build_problem(config);
  const DriftMap map = build_map(problem);
  const auto& dir = config.output_directory;
  const auto& fmt = config.output_format;
  auto picard_table = [](const std::vector<PicardRecord>& trace) {
    Table t{"picard", {"iter", "sup_diff", "sup_norm"}, {}};
    for (const auto& rec : trace) t.rows.push_back({static_cast<long long>(rec.iter), rec.sup_diff, rec.sup_norm});
    return t;
  };

  SolveMvOutput out{[&] {
    try {
      return picard_solve(map, config.picard_tol, config.picard_max_iter);
    } catch (const PicardNonConvergence& e) {
      write_table(picard_table(e.trace()), dir, fmt);
      throw;
    }
  }(), {}};
  const auto& res = out.result;
  out.files.push_back(write_table(picard_table(res.trace), dir, fmt));

  const TorusGrid& xg = map.x_grid();
  Table hhat{"hhat", position_header(config.dim), {}};
  hhat.header.insert(hhat.header.end(), {"t", "h"});
  for (std::size_t s = 0; s < xg.sites(); ++s) {
    for (int m = 0; m <= res.h_hat.intervals(); ++m) {
      std::vector<Table::Cell> row;
      append_position(row, xg.position(s), config.dim);
      row.emplace_back(m * res.h_hat.time_spacing());
      row.emplace_back(res.h_hat.at(s, m));
      hhat.rows.push_back(std::move(row));
    }
  }
  out.files.push_back(write_table(hhat, dir, fmt));

  Table rho{"rho_hat", position_header(config.dim), {}};
  rho.header.insert(rho.header.end(), {"t", "theta", "rho"});
  const auto nodes = problem.grid.nodes();
  for (double t : config.density_times) {
    for (std::size_t s = 0; s < xg.sites(); ++s) {
      const auto slice = res.rho_hat.slice_at_time(s, t);
      for (std::size_t j = 0; j < slice.size(); ++j) {
        std::vector<Table::Cell> row;
        append_position(row, xg.position(s), config.dim);
        row.emplace_back(t);
        row.emplace_back(nodes[j]);
        row.emplace_back(slice[j]);
        rho.rows.push_back(std::move(row));
      }
    }
  }
  out.files.push_back(write_table(rho, dir, fmt));
  return out;
}

std::vector<std::filesystem::path> run_simulate(const ExperimentConfig& base, const SimulateOptions& options) {
  ExperimentConfig config = base;
  if (options.horizon) config.horizon = *options.horizon;
  if (options.dt) config.dt_sde = *options.dt;
  if (options.seed) config.sim_seed = *options.seed;
  if (options.snap) config.sim_snap = *options.snap;
  const int n = options.n.value_or(config.sim_n.front());
  require(n >= 2, "--N must be >= 2");
  if (options.mode == SimMode::kDecoupled) {
    require(std::abs(config.horizon / config.drift_spacing - std::round(config.horizon / config.drift_spacing)) < 1e-9,
            "--T must be a multiple of time.drift_spacing in decoupled mode");
  }
  config.validate();

  const Problem problem = build_problem(config);
  const auto initial = sample_initial(problem.grid, problem.profile, n, config.sim_seed);
  const SimConfig sim = sim_config(config, n, config.sim_seed, 0, config.workers);
  TrajectoryRequest request{config.sim_snap, 0};
  Trajectory run;
  if (options.mode == SimMode::kCoupled) {
    const CirculantForceTable table(problem.kernel, n);
    run = run_trajectory(sim, SimMode::kCoupled, initial, problem.potential, &table, nullptr, request);
  } else {
    const DriftMap map = build_map(problem);
    const auto solution = picard_solve(map, config.picard_tol, config.picard_max_iter);
    const DecoupledDrive drive(solution.h_hat, n, config.dim);
    run = run_trajectory(sim, SimMode::kDecoupled, initial, problem.potential, nullptr, &drive, request);
  }

  std::vector<std::filesystem::path> files;
  const TorusGrid lattice{config.dim, n};
  auto emit = [&](double t, const std::vector<double>& theta) {
    Table snap{"snap_" + format_real(t), {"site_index"}, {}};
    const auto pos = position_header(config.dim);
    snap.header.insert(snap.header.end(), pos.begin(), pos.end());
    snap.header.push_back("theta");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      std::vector<Table::Cell> row{static_cast<long long>(i)};
      append_position(row, lattice.position(i), config.dim);
      row.emplace_back(theta[i]);
      snap.rows.push_back(std::move(row));
    }
    files.push_back(write_table(snap, config.output_directory, config.output_format));
  };
  if (run.snapshots.empty()) emit(run.initial.time, run.initial.theta);
  for (const auto& s : run.snapshots) emit(s.time, s.theta);
  return files;
}

HdlOutput run_hdl_sweep(const ExperimentConfig& config, const PicardResult* solution, bool write_files) {
  config.validate();
  require(!config.sim_snap.empty(), "sim.snap must be nonempty for hdl-sweep");
  const Problem problem = build_problem(config);
  const DriftMap map = build_map(problem);
  const PicardResult mf = solve_or_reuse(config, map, solution);
  const auto dict = TestDictionary::standard(config.dim);

  // rho_hat slices at the snapshot times are shared by every run.
  std::vector<std::vector<std::vector<double>>> slices(config.sim_snap.size());
  for (std::size_t k = 0; k < config.sim_snap.size(); ++k) {
    for (std::size_t s = 0; s < mf.rho_hat.sites(); ++s) {
      slices[k].push_back(mf.rho_hat.slice_at_time(s, config.sim_snap[k]));
    }
  }

  struct Lattice {
    int n;
    CirculantForceTable table;
    DecoupledDrive drive;
  };
  std::vector<Lattice> lattices;
  for (int n : config.sim_n) {
    lattices.push_back({n, CirculantForceTable(problem.kernel, n), DecoupledDrive(mf.h_hat, n, config.dim)});
  }

  const std::size_t seeds = static_cast<std::size_t>(config.sim_replicas);
  const std::size_t jobs = lattices.size() * seeds;
  std::vector<std::vector<double>> distances(jobs);
  std::vector<double> mismatch(jobs);
  parallel_for(jobs, config.workers, [&](std::size_t job) {
    const Lattice& lat = lattices[job / seeds];
    const std::uint64_t seed = config.sim_seed + job % seeds;
    const auto initial = sample_initial(problem.grid, problem.profile, lat.n, seed);
    const SimConfig sim = sim_config(config, lat.n, seed, 0, 1);
    const TrajectoryRequest request{config.sim_snap, config.sim_path_stride};
    const auto run = run_trajectory(sim, SimMode::kCoupled, initial, problem.potential, &lat.table, nullptr, request);
    for (std::size_t k = 0; k < run.snapshots.size(); ++k) {
      const EmpiricalMeasure mu(lat.n, config.dim, run.snapshots[k].theta, run.snapshots[k].time);
      distances[job].push_back(bl_distance(mu, problem.grid, mf.rho_hat.x_grid(), slices[k], dict));
    }
    const auto sites = entropy_sites(lat.table.sites(), seed, lat.n);
    mismatch[job] = drift_mismatch(run, lat.table, lat.drive, sites);
  });

  HdlOutput out;
  for (std::size_t job = 0; job < jobs; ++job) {
    const int n = lattices[job / seeds].n;
    const std::uint64_t seed = config.sim_seed + job % seeds;
    for (std::size_t k = 0; k < config.sim_snap.size(); ++k) {
      out.hdl.push_back({n, seed, config.sim_snap[k], distances[job][k]});
    }
    out.entropy.push_back({n, seed, mismatch[job]});
  }
  if (write_files) {
    Table hdl{"hdl", {"N", "seed", "t", "bl_distance"}, {}};
    for (const auto& r : out.hdl) {
      hdl.rows.push_back({static_cast<long long>(r.n), static_cast<long long>(r.seed), r.t, r.bl_distance});
    }
    Table ent{"entropy", {"N", "seed", "drift_mismatch"}, {}};
    for (const auto& r : out.entropy) {
      ent.rows.push_back({static_cast<long long>(r.n), static_cast<long long>(r.seed), r.drift_mismatch});
    }
    out.files.push_back(write_table(hdl, config.output_directory, config.output_format));
    out.files.push_back(write_table(ent, config.output_directory, config.output_format));
  }
  return out;
}

double ChaosOutput::noise_floor() const {
  if (floor.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : floor) acc += r.distance;
  return acc / static_cast<double>(floor.size());
}

ChaosOutput run_chaos_test(const ExperimentConfig& config, const PicardResult* solution, bool write_files) {
  config.validate();
  require(config.dim == 1, "chaos-test supports system.dim = 1 only");
  const Problem problem = build_problem(config);
  const DriftMap map = build_map(problem);
  const PicardResult mf = solve_or_reuse(config, map, solution);
  const auto family = RampFamily::standard();
  const std::size_t reps = static_cast<std::size_t>(config.chaos_replicas);
  const double t = config.chaos_time;
  const TrajectoryRequest request{{t}, 0};

  auto replicate = [&](int n, SimMode mode, const CirculantForceTable* table, const DecoupledDrive* drive) {
    std::vector<std::vector<double>> states(reps);
    parallel_for(reps, config.workers, [&](std::size_t r) {
      const auto replica = static_cast<std::uint32_t>(r);
      const auto initial = sample_initial(problem.grid, problem.profile, n, config.sim_seed, replica);
      const SimConfig sim = sim_config(config, n, config.sim_seed, replica, 1);
      states[r] = run_trajectory(sim, mode, initial, problem.potential, table, drive, request).snapshots.back().theta;
    });
    return states;
  };

  ChaosOutput out;
  const int k = static_cast<int>(config.chaos_sites.size());
  const int n_floor = config.chaos_n.front();
  const DecoupledDrive drive(mf.h_hat, n_floor, 1);
  const auto decoupled = replicate(n_floor, SimMode::kDecoupled, nullptr, &drive);
  for (double x : config.chaos_sites) {
    const double d = marginal_chaos_test(problem.grid, decoupled, n_floor, mf.rho_hat, std::span<const double>(&x, 1),
                                         t, family);
    out.floor.push_back({x, t, d, config.chaos_replicas});
  }
  out.decoupled_joint =
      marginal_chaos_test(problem.grid, decoupled, n_floor, mf.rho_hat, config.chaos_sites, t, family);
  const auto reference = site_samples(decoupled, n_floor, config.chaos_sites);

  for (int n : config.chaos_n) {
    const CirculantForceTable table(problem.kernel, n);
    const auto states = replicate(n, SimMode::kCoupled, &table, nullptr);
    const double d = marginal_chaos_test(problem.grid, states, n, mf.rho_hat, config.chaos_sites, t, family);
    out.joint.push_back({n, k, t, d, config.chaos_replicas});
    const double p = paired_product_distance(site_samples(states, n, config.chaos_sites), reference,
                                             config.chaos_sites.size(), family);
    out.paired.push_back({n, k, t, p, config.chaos_replicas});
  }

  if (write_files) {
    Table chaos{"chaos", {"N", "k", "t", "distance", "replicas"}, {}};
    for (const auto& r : out.joint) {
      chaos.rows.push_back({static_cast<long long>(r.n), static_cast<long long>(r.k), r.t, r.distance,
                            static_cast<long long>(r.replicas)});
    }
    Table floor{"chaos_floor", {"site", "t", "distance", "replicas"}, {}};
    for (const auto& r : out.floor) floor.rows.push_back({r.site, r.t, r.distance, static_cast<long long>(r.replicas)});
    Table paired{"chaos_paired", {"N", "k", "t", "distance", "replicas"}, {}};
    for (const auto& r : out.paired) {
      paired.rows.push_back({static_cast<long long>(r.n), static_cast<long long>(r.k), r.t, r.distance,
                             static_cast<long long>(r.replicas)});
    }
    out.files.push_back(write_table(chaos, config.output_directory, config.output_format));
    out.files.push_back(write_table(floor, config.output_directory, config.output_format));
    out.files.push_back(write_table(paired, config.output_directory, config.output_format));
  }
  return out;
}

DriftPath random_smooth_drift(std::uint64_t seed, std::uint32_t trial, std::uint32_t salt, double horizon,
                              double spacing, double scale) {
  const rng::Stream stream(seed, trial, 0x100 + salt);
  std::array<double, 4> a{};
  std::array<double, 4> b{};
  for (std::size_t k = 0; k < 4; ++k) {
    const auto [n1, n2] = stream.normals(k, rng::Tag::kTest);
    a[k] = scale * n1 / (1.0 + k);
    b[k] = scale * n2 / (1.0 + k);
  }
  return DriftPath::from_function(
      [a, b](double t) {
        double v = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          v += a[k] * std::cos(std::numbers::pi * k * t) + b[k] * std::sin(std::numbers::pi * k * t);
        }
        return v;
      },
      horizon, spacing);
}

std::vector<double> random_smooth_density(const ThetaGrid& grid, std::uint64_t seed, std::uint32_t trial) {
  const rng::Stream stream(seed, trial, 0x200);
  const auto [u1, u2] = stream.uniforms(0, rng::Tag::kTest);
  const auto [u3, u4] = stream.uniforms(1, rng::Tag::kTest);
  const double tilt = u1 - 0.5;
  const double bump = 0.5 * u2;
  const double freq = 1.0 + 2.0 * u3;
  const double phase = 2.0 * std::numbers::pi * u4;
  const auto nodes = grid.nodes();
  std::vector<double> rho(nodes.size());
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    rho[j] = std::exp(tilt * nodes[j] + bump * std::cos(freq * nodes[j] + phase));
  }
  return normalize_density(grid, rho);
}

std::size_t FpSuite::violations(const std::vector<BoundReport>& reports) const {
  return static_cast<std::size_t>(
      std::count_if(reports.begin(), reports.end(), [](const BoundReport& r) { return !r.passed; }));
}

FpSuite fp_property_suite(const ThetaGrid& grid, int trials, std::uint64_t seed, double horizon, double drift_spacing,
                          const FpOptions& options, unsigned workers) {
  if (trials < 1) throw InvalidArgument("fp_property_suite: trials must be >= 1");
  FpSuite suite;
  const auto n = static_cast<std::size_t>(trials);
  suite.norm_growth.resize(n);
  suite.norm_growth_rate1.resize(n);
  suite.stability.resize(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto trial = static_cast<std::uint32_t>(i);
    const auto rho0 = random_smooth_density(grid, seed, trial);
    const auto h = random_smooth_drift(seed, trial, 0, horizon, drift_spacing);
    const auto path = solve_fp(grid, rho0, h, horizon, options);
    suite.norm_growth[i] = norm_growth_check(grid, path, h, 0.5);
    suite.norm_growth_rate1[i] = norm_growth_check(grid, path, h, 1.0);
    const auto g1 = random_smooth_drift(seed, trial, 1, horizon, drift_spacing);
    const auto g2 = random_smooth_drift(seed, trial, 2, horizon, drift_spacing);
    suite.stability[i] = stability_check(grid, rho0, g1, g2, horizon, options);
  });
  return suite;
}

FpValidateOutput run_fp_validate(const ExperimentConfig& config) {
  config.validate();
  const Problem problem = build_problem(config);
  const DriftMap map = build_map(problem);
  const PicardResult mf = picard_solve(map, config.picard_tol, config.picard_max_iter);
  const auto& grid = problem.grid;

  FpValidateOutput out;
  const auto drift = mf.h_hat.drift_path(0);
  const auto rho0 = problem.profile.slice(0);
  const auto path = solve_fp(grid, rho0, drift, config.horizon, problem.settings.fp);
  const auto report = norm_growth_check(grid, path, drift, 0.5);
  const auto residuals = first_moment_residuals(grid, path, drift);
  Table diag{"fp_validate", {"t", "mass_error", "l2_norm", "l2_bound_rhs", "moment_residual"}, {}};
  for (std::size_t m = 0; m < path.size(); ++m) {
    const double mass_error = std::abs(weighted_mass(grid, path.at(m)) - 1.0);
    const bool interior = m > 0 && m + 1 < path.size();
    diag.rows.push_back({path.times()[m], mass_error, std::sqrt(report.lhs[m]), std::sqrt(report.rhs[m]),
                         interior ? residuals[m] : std::nan("")});
    out.max_mass_error = std::max(out.max_mass_error, mass_error);
    if (interior) out.max_moment_residual = std::max(out.max_moment_residual, residuals[m]);
  }

  out.suite = fp_property_suite(grid, config.fp_trials, config.fp_seed, config.horizon, config.drift_spacing,
                                problem.settings.fp, config.workers);
  Table bounds{"fp_bounds", {"check", "trial", "passed", "max_ratio", "first_violation_time"}, {}};
  auto add = [&](long long check, const std::vector<BoundReport>& reports) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      bounds.rows.push_back({check, static_cast<long long>(i), static_cast<long long>(r.passed), r.max_ratio,
                             r.first_violation_time.value_or(std::nan(""))});
    }
  };
  // check: 0 norm growth at rate 1/2, 1 norm growth at rate 1, 2 stability
  add(0, out.suite.norm_growth);
  add(1, out.suite.norm_growth_rate1);
  add(2, out.suite.stability);
  out.files.push_back(write_table(diag, config.output_directory, config.output_format));
  out.files.push_back(write_table(bounds, config.output_directory, config.output_format));
  return out;
}

}  // namespace lmf
