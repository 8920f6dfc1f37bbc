#include "lmf/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "lmf/error.hpp"
#include "lmf/rng.hpp"

namespace lmf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t points(const ThetaGrid& grid) { return static_cast<std::size_t>(grid.size()); }

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return out;
}

std::vector<Ramp> ramp_grid(const std::vector<double>& centers, const std::vector<double>& widths) {
  std::vector<Ramp> ramps;
  for (double w : widths) {
    if (!(w > 0.0)) throw InvalidArgument("ramp widths must be positive");
    for (double c : centers) ramps.push_back({c, w});
  }
  return ramps;
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(int n, int dim, std::vector<double> theta, double time)
    : n_(n), dim_(dim), theta_(std::move(theta)), time_(time) {
  if (dim != 1 && dim != 2) throw InvalidArgument("EmpiricalMeasure: dim must be 1 or 2");
  if (n < 1 || theta_.size() != TorusGrid{dim, n}.sites()) {
    throw InvalidArgument("EmpiricalMeasure: need exactly N^d atoms");
  }
}

double Ramp::operator()(double theta) const { return std::min(1.0, width) * std::tanh((theta - center) / width); }

double TorusMode::operator()(std::span<const double> x) const {
  if (k[0] == 0 && k[1] == 0) return 1.0;
  double phase = k[0] * x[0];
  if (x.size() > 1) phase += k[1] * x[1];
  return sine ? std::sin(kTwoPi * phase) : std::cos(kTwoPi * phase);
}

double TorusMode::lipschitz() const { return kTwoPi * std::hypot(k[0], k[1]); }

TestDictionary::TestDictionary(int dim, int max_frequency, std::vector<double> centers, std::vector<double> widths)
    : dim_(dim) {
  if (dim != 1 && dim != 2) throw InvalidArgument("TestDictionary: dim must be 1 or 2");
  if (max_frequency < 0) throw InvalidArgument("TestDictionary: max_frequency must be >= 0");
  ramps_ = ramp_grid(centers, widths);
  if (ramps_.empty()) throw InvalidArgument("TestDictionary: empty ramp family");
  modes_.push_back({});
  for (int k = 1; k <= max_frequency; ++k) {
    for (bool sine : {false, true}) {
      modes_.push_back({{k, 0}, sine});
      if (dim == 2) modes_.push_back({{0, k}, sine});
    }
  }
  for (const auto& mode : modes_) {
    for (const auto& ramp : ramps_) {
      const double bound = std::min(1.0, ramp.width);
      const double lip = std::hypot(mode.lipschitz() * bound, 1.0);
      members_.push_back({mode, ramp, 1.0 / std::max(1.0, lip)});
    }
  }
}

TestDictionary TestDictionary::standard(int dim) { return {dim, 4, linspace(-1.0, 1.0, 9), {0.5, 1.0}}; }

double TestDictionary::value(std::size_t m, std::span<const double> x, double theta) const {
  const auto& f = members_.at(m);
  return f.scale * f.mode(x) * f.ramp(theta);
}

std::pair<double, double> TestDictionary::verify(double theta_max, int samples) const {
  double sup = 0.0;
  double lip = 0.0;
  constexpr double kStep = 1e-5;
  const rng::Stream stream(0x5eed, 0, 0);
  const std::size_t points = dim_ == 1 ? static_cast<std::size_t>(samples) * samples : 20000;
  for (std::size_t p = 0; p < points; ++p) {
    std::array<double, 3> z{};
    if (dim_ == 1) {
      z[0] = static_cast<double>(p / samples) / samples;
      z[2] = -theta_max + 2.0 * theta_max * static_cast<double>(p % samples) / (samples - 1);
    } else {
      const auto [u1, u2] = stream.uniforms(p, rng::Tag::kTest);
      z = {u1, u2, -theta_max + 2.0 * theta_max * stream.uniform(p + points, rng::Tag::kTest)};
    }
    for (std::size_t m = 0; m < members_.size(); ++m) {
      auto eval = [&](const std::array<double, 3>& q) { return value(m, {q.data(), 2}, q[2]); };
      sup = std::max(sup, std::abs(eval(z)));
      double grad2 = 0.0;
      for (int axis : {0, 1, 2}) {
        if (dim_ == 1 && axis == 1) continue;
        auto hi = z, lo = z;
        hi[axis] += kStep;
        lo[axis] -= kStep;
        const double d = (eval(hi) - eval(lo)) / (2.0 * kStep);
        grad2 += d * d;
      }
      lip = std::max(lip, std::sqrt(grad2));
    }
  }
  return {sup, lip};
}

std::vector<double> dictionary_means(const TestDictionary& dict, const EmpiricalMeasure& mu) {
  if (dict.dim() != mu.dim()) throw InvalidArgument("dictionary_means: dimension mismatch");
  const auto& modes = dict.modes();
  const auto& ramps = dict.ramps();
  std::vector<double> sums(dict.size(), 0.0);
  std::vector<double> mv(modes.size());
  std::vector<double> rv(ramps.size());
  for (std::size_t i = 0; i < mu.atoms(); ++i) {
    const auto x = mu.position(i);
    for (std::size_t a = 0; a < modes.size(); ++a) mv[a] = modes[a](std::span<const double>(x.data(), mu.dim()));
    for (std::size_t b = 0; b < ramps.size(); ++b) rv[b] = ramps[b](mu.theta()[i]);
    for (std::size_t a = 0; a < modes.size(); ++a) {
      for (std::size_t b = 0; b < ramps.size(); ++b) sums[a * ramps.size() + b] += mv[a] * rv[b];
    }
  }
  const double inv = 1.0 / static_cast<double>(mu.atoms());
  for (std::size_t m = 0; m < sums.size(); ++m) sums[m] *= inv * dict.members()[m].scale;
  return sums;
}

std::vector<double> dictionary_integrals(const TestDictionary& dict, const ThetaGrid& grid, const TorusGrid& x_grid,
                                         const std::vector<std::vector<double>>& slices) {
  if (dict.dim() != x_grid.dim) throw InvalidArgument("dictionary_integrals: dimension mismatch");
  if (slices.size() != x_grid.sites()) throw InvalidArgument("dictionary_integrals: one slice per site required");
  const auto& modes = dict.modes();
  const auto& ramps = dict.ramps();
  const auto& gw = grid.gibbs_weights();
  const auto& nodes = grid.nodes();
  std::vector<std::vector<double>> ramp_weights(ramps.size(), std::vector<double>(points(grid)));
  for (std::size_t b = 0; b < ramps.size(); ++b) {
    for (std::size_t j = 0; j < points(grid); ++j) ramp_weights[b][j] = gw[j] * ramps[b](nodes[j]);
  }
  std::vector<double> sums(dict.size(), 0.0);
  std::vector<double> iv(ramps.size());
  for (std::size_t s = 0; s < slices.size(); ++s) {
    if (slices[s].size() != points(grid)) throw InvalidArgument("dictionary_integrals: slice length mismatch");
    for (std::size_t b = 0; b < ramps.size(); ++b) {
      double acc = 0.0;
      for (std::size_t j = 0; j < points(grid); ++j) acc += ramp_weights[b][j] * slices[s][j];
      iv[b] = acc;
    }
    const auto x = x_grid.position(s);
    for (std::size_t a = 0; a < modes.size(); ++a) {
      const double xv = modes[a](std::span<const double>(x.data(), x_grid.dim));
      for (std::size_t b = 0; b < ramps.size(); ++b) sums[a * ramps.size() + b] += xv * iv[b];
    }
  }
  const double inv = 1.0 / static_cast<double>(slices.size());
  for (std::size_t m = 0; m < sums.size(); ++m) sums[m] *= inv * dict.members()[m].scale;
  return sums;
}

double bl_distance(const EmpiricalMeasure& mu, const ThetaGrid& grid, const TorusGrid& x_grid,
                   const std::vector<std::vector<double>>& slices, const TestDictionary& dict) {
  if (dict.size() == 0) throw InvalidArgument("bl_distance: empty dictionary");
  const auto lhs = dictionary_means(dict, mu);
  const auto rhs = dictionary_integrals(dict, grid, x_grid, slices);
  double worst = 0.0;
  for (std::size_t m = 0; m < lhs.size(); ++m) worst = std::max(worst, std::abs(lhs[m] - rhs[m]));
  return worst;
}

double bl_distance(const EmpiricalMeasure& mu, const ThetaGrid& grid, const SpaceDensityField& rho, double t,
                   const TestDictionary& dict) {
  std::vector<std::vector<double>> slices;
  slices.reserve(rho.sites());
  for (std::size_t s = 0; s < rho.sites(); ++s) slices.push_back(rho.slice_at_time(s, t));
  return bl_distance(mu, grid, rho.x_grid(), slices, dict);
}

double drift_mismatch(const std::vector<double>& path_times, const std::vector<std::vector<double>>& path_states,
                      const CirculantForceTable& table, const DecoupledDrive& h_hat,
                      std::span<const std::size_t> sites) {
  if (path_times.size() < 2 || path_states.size() != path_times.size()) {
    throw InvalidArgument("drift_mismatch: the run has no retained path");
  }
  if (h_hat.sites() != table.sites()) throw InvalidArgument("drift_mismatch: drive does not match the lattice");
  std::vector<std::size_t> all;
  if (sites.empty()) {
    all.resize(table.sites());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    sites = all;
  }
  std::vector<double> rate(path_times.size());
  for (std::size_t k = 0; k < path_times.size(); ++k) {
    const auto force = table.convolve(path_states[k]);
    double acc = 0.0;
    for (std::size_t i : sites) {
      if (i >= force.size()) throw InvalidArgument("drift_mismatch: site out of range");
      const double d = force[i] - h_hat(i, path_times[k]);
      acc += d * d;
    }
    rate[k] = acc / static_cast<double>(sites.size());
  }
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < rate.size(); ++k) {
    total += 0.5 * (path_times[k + 1] - path_times[k]) * (rate[k] + rate[k + 1]);
  }
  return total;
}

double relative_entropy_product(const ThetaGrid& grid, const InitialProfile& f0, const InitialProfile& rho0) {
  if (f0.sites() != rho0.sites() || f0.x_grid().dim != rho0.x_grid().dim) {
    throw InvalidArgument("relative_entropy_product: profiles live on different grids");
  }
  const auto& gw = grid.gibbs_weights();
  double total = 0.0;
  for (std::size_t s = 0; s < f0.sites(); ++s) {
    const auto f = f0.slice(s);
    const auto r = rho0.slice(s);
    if (f.size() != points(grid) || r.size() != points(grid)) {
      throw InvalidArgument("relative_entropy_product: slice length mismatch");
    }
    double kl = 0.0;
    for (std::size_t j = 0; j < points(grid); ++j) {
      if (f[j] <= 0.0) continue;
      if (r[j] <= 0.0) {
        throw InvalidArgument("relative_entropy_product: f0 is not absolutely continuous w.r.t. rho0 at site " +
                              std::to_string(s));
      }
      kl += gw[j] * f[j] * std::log(f[j] / r[j]);
    }
    total += kl;
  }
  return total / static_cast<double>(f0.sites());
}

RampFamily RampFamily::standard() { return RampFamily(ramp_grid(linspace(-1.0, 1.0, 9), {0.5, 1.0})); }

double product_distance(const ThetaGrid& grid, std::span<const double> samples, std::size_t k,
                        const std::vector<std::vector<double>>& marginals, const RampFamily& family) {
  if (k < 1 || k > 3) throw InvalidArgument("product_distance: k must be in 1..3");
  if (marginals.size() != k) throw InvalidArgument("product_distance: one marginal per coordinate required");
  if (samples.empty() || samples.size() % k != 0) throw InvalidArgument("product_distance: bad sample array");
  const std::size_t reps = samples.size() / k;
  const auto& ramps = family.ramps();
  const std::size_t f = ramps.size() + 1;  // index 0 is the constant 1
  const auto& gw = grid.gibbs_weights();
  const auto& nodes = grid.nodes();

  // expect[l][a] = int g_a rho_l e^{-2 psi}, values[l][a][r] = g_a(theta_l^r)
  std::vector<std::vector<double>> expect(k, std::vector<double>(f, 1.0));
  std::vector<std::vector<std::vector<double>>> values(k, std::vector<std::vector<double>>(f));
  for (std::size_t l = 0; l < k; ++l) {
    if (marginals[l].size() != points(grid)) throw InvalidArgument("product_distance: marginal length mismatch");
    values[l][0].assign(reps, 1.0);
    for (std::size_t a = 1; a < f; ++a) {
      double acc = 0.0;
      for (std::size_t j = 0; j < points(grid); ++j) acc += gw[j] * ramps[a - 1](nodes[j]) * marginals[l][j];
      expect[l][a] = acc;
      values[l][a].resize(reps);
      for (std::size_t r = 0; r < reps; ++r) values[l][a][r] = ramps[a - 1](samples[r * k + l]);
    }
  }

  std::size_t combos = 1;
  for (std::size_t l = 0; l < k; ++l) combos *= f;
  double worst = 0.0;
  std::vector<double> prod(reps);
  for (std::size_t c = 1; c < combos; ++c) {
    std::size_t rest = c;
    std::fill(prod.begin(), prod.end(), 1.0);
    double target = 1.0;
    int nonconstant = 0;
    for (std::size_t l = 0; l < k; ++l) {
      const std::size_t a = rest % f;
      rest /= f;
      if (a == 0) continue;
      ++nonconstant;
      target *= expect[l][a];
      for (std::size_t r = 0; r < reps; ++r) prod[r] *= values[l][a][r];
    }
    double mean = 0.0;
    for (double v : prod) mean += v;
    mean /= static_cast<double>(reps);
    worst = std::max(worst, std::abs(mean - target) / std::sqrt(static_cast<double>(nonconstant)));
  }
  return worst;
}

double paired_product_distance(std::span<const double> a, std::span<const double> b, std::size_t k,
                               const RampFamily& family) {
  if (k < 1 || k > 3) throw InvalidArgument("paired_product_distance: k must be in 1..3");
  if (a.size() != b.size() || a.empty() || a.size() % k != 0) {
    throw InvalidArgument("paired_product_distance: clouds must have the same nonzero R x k shape");
  }
  const std::size_t reps = a.size() / k;
  const auto& ramps = family.ramps();
  const std::size_t f = ramps.size() + 1;
  std::size_t combos = 1;
  for (std::size_t l = 0; l < k; ++l) combos *= f;
  auto eval = [&](std::span<const double> cloud, std::size_t r, std::size_t c) {
    double v = 1.0;
    for (std::size_t l = 0; l < k; ++l, c /= f) {
      if (c % f != 0) v *= ramps[c % f - 1](cloud[r * k + l]);
    }
    return v;
  };
  double worst = 0.0;
  for (std::size_t c = 1; c < combos; ++c) {
    int nonconstant = 0;
    for (std::size_t l = 0, rest = c; l < k; ++l, rest /= f) nonconstant += rest % f != 0;
    double acc = 0.0;
    for (std::size_t r = 0; r < reps; ++r) acc += eval(a, r, c) - eval(b, r, c);
    worst = std::max(worst, std::abs(acc) / static_cast<double>(reps) / std::sqrt(static_cast<double>(nonconstant)));
  }
  return worst;
}

std::vector<double> site_samples(const std::vector<std::vector<double>>& replica_states, int n,
                                 std::span<const double> sites) {
  const std::size_t k = sites.size();
  std::vector<std::size_t> index(k);
  std::set<std::size_t> seen;
  for (std::size_t l = 0; l < k; ++l) {
    const double x = sites[l];
    if (!(x >= 0.0 && x < 1.0)) throw InvalidArgument("site_samples: sites must lie in [0, 1)");
    index[l] = static_cast<std::size_t>(std::floor(n * x));
    if (!seen.insert(index[l]).second) throw InvalidArgument("site_samples: duplicate sites");
  }
  std::vector<double> samples(replica_states.size() * k);
  for (std::size_t r = 0; r < replica_states.size(); ++r) {
    if (replica_states[r].size() != static_cast<std::size_t>(n)) {
      throw InvalidArgument("site_samples: replica state has wrong size");
    }
    for (std::size_t l = 0; l < k; ++l) samples[r * k + l] = replica_states[r][index[l]];
  }
  return samples;
}

double marginal_chaos_test(const ThetaGrid& grid, const std::vector<std::vector<double>>& replica_states, int n,
                           const SpaceDensityField& rho, std::span<const double> sites, double t,
                           const RampFamily& family, std::size_t min_replicas) {
  const std::size_t k = sites.size();
  if (k < 1 || k > 3) throw InvalidArgument("marginal_chaos_test: k must be in 1..3");
  if (rho.x_grid().dim != 1) throw InvalidArgument("marginal_chaos_test: only d = 1 is supported");
  if (replica_states.size() < min_replicas) {
    throw InvalidArgument("marginal_chaos_test: at least " + std::to_string(min_replicas) + " replicas required");
  }
  const auto samples = site_samples(replica_states, n, sites);
  std::vector<std::vector<double>> marginals;
  for (std::size_t l = 0; l < k; ++l) marginals.push_back(rho.interpolate(sites.subspan(l, 1), t));
  return product_distance(grid, samples, k, marginals, family);
}

}  // namespace lmf
