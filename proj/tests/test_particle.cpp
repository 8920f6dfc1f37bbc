#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "lmf/error.hpp"
#include "lmf/experiment.hpp"
#include "lmf/particle.hpp"
#include "oracles.hpp"

using namespace lmf;

namespace {

constexpr double kPi = std::numbers::pi;

const ThetaGrid& quartic_grid() {
  static const ThetaGrid grid(Potential::quartic(), 2.5, 512);
  return grid;
}

InitialProfile tilted(int m, const std::function<double(double)>& tilt) {
  return InitialProfile::tilted_gibbs(quartic_grid(), TorusGrid{1, m},
                                      [&](std::span<const double> x) { return tilt(x[0]); });
}

ParticleSystemState constant_state(int n, double value, std::uint64_t seed = 1) {
  ParticleSystemState s;
  s.n = n;
  s.theta.assign(n, value);
  s.seed = seed;
  return s;
}

SimConfig deterministic(int n, double horizon, double dt) {
  SimConfig c;
  c.n = n;
  c.horizon = horizon;
  c.dt = dt;
  c.noise_scale = 0.0;
  return c;
}

Trajectory run(const SimConfig& c, SimMode mode, const ParticleSystemState& init, const CirculantForceTable* table,
               const DecoupledDrive* drive, std::vector<double> snaps, int stride = 0) {
  return run_trajectory(c, mode, init, Potential::quartic(), table, drive, TrajectoryRequest{std::move(snaps), stride});
}

}  // namespace

TEST_CASE("sim config validation") {
  SimConfig c;
  CHECK_NOTHROW(c.validate());
  c.n = 1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SimConfig{};
  c.dt = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SimConfig{};
  c.noise_scale = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("zero is a fixed point without noise") {
  const CirculantForceTable none(InteractionKernel::constant(0.0), 16);
  const auto out = run(deterministic(16, 1.0, 1e-3), SimMode::kCoupled, constant_state(16, 0.0), &none, nullptr, {1.0});
  for (double v : out.snapshots.back().theta) CHECK(v == 0.0);
  const DecoupledDrive zero(16, DriftPath::constant(0.0, 1.0, 0.01));
  const auto dec = run(deterministic(16, 1.0, 1e-3), SimMode::kDecoupled, constant_state(16, 0.0), nullptr, &zero, {1.0});
  for (double v : dec.snapshots.back().theta) CHECK(v == 0.0);
}

TEST_CASE("uniform start under J = 1 follows the scalar ODE m' = m - 4 m^3") {
  const CirculantForceTable ones(InteractionKernel::constant(1.0), 4);
  const double c = 0.3;
  const auto out = run(deterministic(4, 1.0, 1e-6), SimMode::kCoupled, constant_state(4, c), &ones, nullptr, {1.0});
  const double exact = oracle::rk4([](double, double m) { return m - 4 * m * m * m; }, c, 0.0, 1.0, 100000);
  for (double v : out.snapshots.back().theta) CHECK(std::abs(v - exact) < 1e-6);
}

TEST_CASE("coupled force equals naive summation at N = 8") {
  const auto j = InteractionKernel::wrapped_gaussian(0.8, 0.2);
  const CirculantForceTable table(j, 8);
  const auto p = Potential::quartic();
  auto state = sample_initial(quartic_grid(), tilted(8, [](double x) { return 0.4 * std::sin(2 * kPi * x); }), 8, 3);
  const auto before = state.theta;
  const double dt = 1e-3;
  step_coupled(state, table, p, dt, StepOptions{0.0, false, 5.0, 1});
  for (int i = 0; i < 8; ++i) {
    double force = 0.0;
    for (int k = 0; k < 8; ++k) force += j(static_cast<double>(k - i) / 8.0) * before[k] / 8.0;
    const double implied = (state.theta[i] - before[i]) / dt + p.first_derivative(before[i]);
    CHECK(std::abs(implied - force) < 1e-10);
  }
  CHECK(state.step == 1);
  CHECK(state.time == doctest::Approx(dt));
}

TEST_CASE("initial sampling is deterministic and seed dependent") {
  const auto profile = tilted(16, [](double x) { return 0.3 + 0.5 * std::cos(2 * kPi * x); });
  const auto a = sample_initial(quartic_grid(), profile, 64, 5);
  const auto b = sample_initial(quartic_grid(), profile, 64, 5);
  const auto c = sample_initial(quartic_grid(), profile, 64, 6);
  CHECK(a.theta == b.theta);
  CHECK(a.theta != c.theta);
  const auto r = sample_initial(quartic_grid(), profile, 64, 5, 1);
  CHECK(a.theta != r.theta);
}

TEST_CASE("concentrated profile samples near its centre") {
  const auto& grid = quartic_grid();
  const int m = 16;
  const double width = grid.spacing();
  auto centre = [](double x) { return 0.5 * std::cos(2 * kPi * x); };
  std::vector<std::vector<double>> slices;
  const auto psi = grid.psi_values();
  const auto nodes = grid.nodes();
  for (int s = 0; s < m; ++s) {
    const double c = centre(static_cast<double>(s) / m);
    std::vector<double> rho(grid.size());
    for (int j = 0; j < grid.size(); ++j) {
      const double z = (nodes[j] - c) / width;
      rho[j] = std::exp(-0.5 * z * z + 2.0 * psi[j]);
    }
    slices.push_back(normalize_density(grid, rho));
  }
  const InitialProfile profile(grid, TorusGrid{1, m}, std::move(slices));
  const auto state = sample_initial(grid, profile, m, 9);
  for (int i = 0; i < m; ++i) CHECK(std::abs(state.theta[i] - centre(static_cast<double>(i) / m)) < 3 * grid.spacing());
}

TEST_CASE("sample mean of 1e5 draws matches the quadrature first moment") {
  const double b = 0.4;
  const auto state = sample_initial(quartic_grid(), tilted(1, [b](double) { return b; }), 100000, 11);
  auto w = [b](double t) { return std::exp(2 * b * t - 2 * std::pow(t, 4)); };
  const double z = oracle::integrate(w, -4, 4);
  const double mean = oracle::integrate([&](double t) { return t * w(t); }, -4, 4) / z;
  const double second = oracle::integrate([&](double t) { return t * t * w(t); }, -4, 4) / z;
  double s = 0.0;
  for (double v : state.theta) s += v;
  const double sample_mean = s / state.theta.size();
  const double se = std::sqrt((second - mean * mean) / state.theta.size());
  CHECK(std::abs(sample_mean - mean) < 4 * se);
}

TEST_CASE("decoupled marginal at T = 1 matches the Fokker-Planck density") {
  const auto& grid = quartic_grid();
  const int n = 100000;
  const auto profile = tilted(1, [](double) { return 0.3; });
  const auto h = DriftPath::from_function([](double t) { return 0.3 + 0.2 * std::sin(3 * t); }, 1.0, 0.01);
  const DecoupledDrive drive(n, h);
  SimConfig c;
  c.n = n;
  c.seed = 4;
  c.workers = 4;
  const auto out = run(c, SimMode::kDecoupled, sample_initial(grid, profile, n, 4), nullptr, &drive, {1.0});
  const auto rho = solve_fp(grid, profile.slice(0), h, 1.0);
  const auto gw = grid.gibbs_weights();
  const auto nodes = grid.nodes();
  // bounded-Lipschitz test functions: |f| <= 1, Lip(f) <= 1
  for (double centre : {-1.0, -0.5, 0.0, 0.25, 0.5, 1.0}) {
    auto f = [centre](double t) { return 0.5 * std::tanh((t - centre) / 0.5); };
    double pde = 0.0;
    for (int j = 0; j < grid.size(); ++j) pde += gw[j] * rho.back()[j] * f(nodes[j]);
    double s = 0.0;
    double s2 = 0.0;
    for (double v : out.snapshots.back().theta) {
      s += f(v);
      s2 += f(v) * f(v);
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    INFO("centre " << centre << " mc " << mean << " pde " << pde << " se " << se);
    CHECK(std::abs(mean - pde) < 4 * se);
  }
}

TEST_CASE("lattice translation commutes with coupled stepping without noise") {
  const CirculantForceTable table(InteractionKernel::cosine(0.5), 32);
  const auto init = sample_initial(quartic_grid(), tilted(8, [](double x) { return std::cos(2 * kPi * x); }), 32, 2);
  auto shifted = init;
  std::rotate(shifted.theta.begin(), shifted.theta.begin() + 5, shifted.theta.end());
  const auto a = run(deterministic(32, 0.5, 1e-3), SimMode::kCoupled, init, &table, nullptr, {0.5});
  const auto b = run(deterministic(32, 0.5, 1e-3), SimMode::kCoupled, shifted, &table, nullptr, {0.5});
  auto expect = a.snapshots.back().theta;
  std::rotate(expect.begin(), expect.begin() + 5, expect.end());
  for (int i = 0; i < 32; ++i) CHECK(std::abs(b.snapshots.back().theta[i] - expect[i]) < 1e-12);
}

TEST_CASE("exchangeability: site moments agree across the lattice") {
  const int n = 32;
  const int replicas = 400;
  const CirculantForceTable table(InteractionKernel::cosine(0.5), n);
  const auto profile = tilted(4, [](double) { return 0.3; });
  std::vector<double> a;
  std::vector<double> b;
  for (int r = 0; r < replicas; ++r) {
    SimConfig c;
    c.n = n;
    c.seed = 8;
    c.replica = r;
    const auto out = run(c, SimMode::kCoupled, sample_initial(quartic_grid(), profile, n, 8, r), &table, nullptr, {0.5});
    a.push_back(out.snapshots.back().theta[0]);
    b.push_back(out.snapshots.back().theta[n / 2 + 3]);
  }
  auto moments = [](const std::vector<double>& v, int p) {
    double s = 0.0;
    double s2 = 0.0;
    for (double x : v) {
      s += std::pow(x, p);
      s2 += std::pow(x, 2 * p);
    }
    const double m = s / v.size();
    return std::pair{m, (s2 / v.size() - m * m) / v.size()};
  };
  for (int p : {1, 2}) {
    const auto [ma, va] = moments(a, p);
    const auto [mb, vb] = moments(b, p);
    INFO("moment " << p);
    CHECK(std::abs(ma - mb) < 4 * std::sqrt(va + vb));
  }
}

TEST_CASE("decoupled stepping with a site-constant drive is label-equivariant") {
  const DecoupledDrive drive(16, DriftPath::constant(0.4, 1.0, 0.01));
  const auto init = sample_initial(quartic_grid(), tilted(4, [](double x) { return std::sin(2 * kPi * x); }), 16, 3);
  auto perm = init;
  std::reverse(perm.theta.begin(), perm.theta.end());
  const auto a = run(deterministic(16, 0.5, 1e-3), SimMode::kDecoupled, init, nullptr, &drive, {0.5});
  const auto b = run(deterministic(16, 0.5, 1e-3), SimMode::kDecoupled, perm, nullptr, &drive, {0.5});
  auto expect = a.snapshots.back().theta;
  std::reverse(expect.begin(), expect.end());
  CHECK(b.snapshots.back().theta == expect);
}

TEST_CASE("empty snapshot list returns the initial state") {
  const CirculantForceTable table(InteractionKernel::cosine(0.5), 8);
  const auto init = sample_initial(quartic_grid(), tilted(4, [](double) { return 0.3; }), 8, 1);
  SimConfig c;
  c.n = 8;
  const auto out = run(c, SimMode::kCoupled, init, &table, nullptr, {});
  CHECK(out.snapshots.empty());
  CHECK(out.initial.theta == init.theta);
  CHECK(out.initial.time == 0.0);
}

TEST_CASE("snapshot times are hit exactly") {
  const CirculantForceTable table(InteractionKernel::cosine(0.5), 8);
  const auto init = sample_initial(quartic_grid(), tilted(4, [](double) { return 0.3; }), 8, 1);
  SimConfig c;
  c.n = 8;
  c.dt = 0.003;
  const auto out = run(c, SimMode::kCoupled, init, &table, nullptr, {0.01, 0.5, 1.0});
  REQUIRE(out.snapshots.size() == 3);
  CHECK(out.snapshots[0].time == 0.01);
  CHECK(out.snapshots[1].time == 0.5);
  CHECK(out.snapshots[2].time == 1.0);
}

TEST_CASE("results do not depend on the worker count") {
  const CirculantForceTable table(InteractionKernel::cosine(0.5), 1024);
  const auto init = sample_initial(quartic_grid(), tilted(8, [](double x) { return 0.3 + 0.5 * std::cos(2 * kPi * x); }),
                                   1024, 6);
  SimConfig c;
  c.n = 1024;
  c.horizon = 0.2;
  c.seed = 6;
  c.workers = 1;
  const auto a = run(c, SimMode::kCoupled, init, &table, nullptr, {0.1, 0.2}, 10);
  c.workers = 4;
  const auto b = run(c, SimMode::kCoupled, init, &table, nullptr, {0.1, 0.2}, 10);
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) CHECK(a.snapshots[k].theta == b.snapshots[k].theta);
  CHECK(a.path_states == b.path_states);
}

TEST_CASE("coupled reference run at N = 256 stays inside the guard box") {
  const auto problem = build_problem(ExperimentConfig{});
  const CirculantForceTable table(problem.kernel, 256);
  const auto init = sample_initial(problem.grid, problem.profile, 256, 1);
  SimConfig c;
  c.n = 256;
  c.workers = 2;
  Trajectory out;
  CHECK_NOTHROW(out = run(c, SimMode::kCoupled, init, &table, nullptr, {0.25, 0.5, 1.0}));
  for (const auto& snap : out.snapshots) {
    for (double v : snap.theta) CHECK(std::abs(v) < 5.0);
  }
}

TEST_CASE("energy is non-increasing for the noiseless uncoupled flow") {
  const CirculantForceTable none(InteractionKernel::constant(0.0), 64);
  const auto p = Potential::quartic();
  auto init = constant_state(64, 0.0);
  for (int i = 0; i < 64; ++i) init.theta[i] = -2.0 + 4.0 * i / 63.0;
  const auto out = run(deterministic(64, 1.0, 1e-3), SimMode::kCoupled, init, &none, nullptr, {1.0}, 1);
  auto energy = [&](const std::vector<double>& th) {
    double e = 0.0;
    for (double v : th) e += p.value(v);
    return e;
  };
  REQUIRE(out.path_states.size() > 900);
  for (std::size_t k = 1; k < out.path_states.size(); ++k) {
    CHECK(energy(out.path_states[k]) <= energy(out.path_states[k - 1]));
  }
}

TEST_CASE("leaving the guard box is an error naming the site") {
  const CirculantForceTable table(InteractionKernel::cosine(0.5), 8);
  SimConfig c;
  c.n = 8;
  c.noise_scale = 500.0;
  try {
    run(c, SimMode::kCoupled, constant_state(8, 0.0), &table, nullptr, {1.0});
    FAIL("expected a guard-box error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("site") != std::string::npos);
  }
}

TEST_CASE("taming consistency: tamed and plain Euler differ by O(dt)") {
  const double dt = 1e-3;
  const CirculantForceTable table(InteractionKernel::cosine(0.5), 64);
  const auto init =
      sample_initial(quartic_grid(), tilted(8, [](double x) { return 0.3 + 0.5 * std::cos(2 * kPi * x); }), 64, 12);
  auto config = [&](double step, bool taming, double noise) {
    SimConfig c;
    c.n = 64;
    c.dt = step;
    c.taming = taming;
    c.noise_scale = noise;
    c.seed = 12;
    return c;
  };
  auto max_diff = [](const Trajectory& a, const Trajectory& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.snapshots.back().theta.size(); ++i) {
      d = std::max(d, std::abs(a.snapshots.back().theta[i] - b.snapshots.back().theta[i]));
    }
    return d;
  };
  // same Brownian increments, same step
  const auto tamed = run(config(dt, true, 1.0), SimMode::kCoupled, init, &table, nullptr, {1.0});
  const auto plain = run(config(dt, false, 1.0), SimMode::kCoupled, init, &table, nullptr, {1.0});
  CHECK(max_diff(tamed, plain) < 5 * dt);
  // step halving needs a common driving path; compare noiselessly
  const auto coarse = run(config(dt, true, 0.0), SimMode::kCoupled, init, &table, nullptr, {1.0});
  const auto fine = run(config(dt / 2, false, 0.0), SimMode::kCoupled, init, &table, nullptr, {1.0});
  CHECK(max_diff(coarse, fine) < 5 * dt);
}
