#include "lmf/kernel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include "lmf/error.hpp"

namespace lmf {
namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double wrap_to_half(double x) { return std::abs(x - std::nearbyint(x)); }

}  // namespace

InteractionKernel::InteractionKernel(KernelForm form, int dim, double amplitude, double width)
    : form_(form), dim_(dim), amplitude_(amplitude), width_(width) {
  if (dim != 1 && dim != 2) throw InvalidArgument("kernel dimension must be 1 or 2");
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw InvalidArgument("kernel amplitude must be >= 0");
  if (form == KernelForm::kWrappedGaussian && !(width > 0.0 && std::isfinite(width))) {
    throw InvalidArgument("wrapped Gaussian width must be positive");
  }
}

InteractionKernel InteractionKernel::constant(double value, int dim) {
  InteractionKernel k(KernelForm::kCosine, dim, value);
  k.constant_ = true;
  return k;
}

double InteractionKernel::factor(double x) const {
  const double r = wrap_to_half(x);
  if (constant_) return 1.0;
  if (form_ == KernelForm::kCosine) return 1.0 + std::cos(2.0 * std::numbers::pi * r);
  // Images beyond |m| > 1 + 9 w contribute below exp(-40).
  const int images = 1 + static_cast<int>(std::ceil(9.0 * width_));
  const double inv = 1.0 / (2.0 * width_ * width_);
  double acc = 0.0;
  for (int m = -images; m <= images; ++m) acc += std::exp(-(r + m) * (r + m) * inv);
  return acc;
}

double InteractionKernel::operator()(std::span<const double> x) const {
  if (static_cast<int>(x.size()) < dim_) throw InvalidArgument("kernel point has too few coordinates");
  double value = amplitude_;
  for (int k = 0; k < dim_; ++k) value *= factor(x[k]);
  return value;
}

double InteractionKernel::l1_norm() const {
  // J >= 0, so the L1 norm is the mean over a fine periodic grid (exact for
  // trigonometric polynomials of low degree).
  constexpr int kPoints = 256;
  double one_dim = 0.0;
  for (int j = 0; j < kPoints; ++j) one_dim += factor(static_cast<double>(j) / kPoints);
  one_dim /= kPoints;
  return amplitude_ * std::pow(one_dim, dim_);
}

double InteractionKernel::l2_norm_squared() const {
  constexpr int kPoints = 256;
  double one_dim = 0.0;
  for (int j = 0; j < kPoints; ++j) {
    const double f = factor(static_cast<double>(j) / kPoints);
    one_dim += f * f;
  }
  one_dim /= kPoints;
  return amplitude_ * amplitude_ * std::pow(one_dim, dim_);
}

struct CirculantForceTable::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  ~Plans() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }
};

CirculantForceTable::CirculantForceTable(const InteractionKernel& kernel, int n) : n_(n), dim_(kernel.dim()) {
  if (n < 2) throw InvalidArgument("lattice side must be >= 2, got " + std::to_string(n));
  const std::size_t total = dim_ == 1 ? n : static_cast<std::size_t>(n) * n;
  const std::size_t spectral = dim_ == 1 ? n / 2 + 1 : static_cast<std::size_t>(n) * (n / 2 + 1);
  const double scale = 1.0 / static_cast<double>(total);

  values_.resize(total);
  if (dim_ == 1) {
    for (int j = 0; j < n; ++j) values_[j] = kernel(static_cast<double>(j) / n) * scale;
  } else {
    for (int j1 = 0; j1 < n; ++j1) {
      for (int j2 = 0; j2 < n; ++j2) {
        const double x[2] = {static_cast<double>(j1) / n, static_cast<double>(j2) / n};
        values_[static_cast<std::size_t>(j1) * n + j2] = kernel(x) * scale;
      }
    }
  }

  plans_ = std::make_unique<Plans>();
  std::vector<double> real_buf(total);
  std::vector<std::complex<double>> cplx_buf(spectral);
  auto* cplx = reinterpret_cast<fftw_complex*>(cplx_buf.data());
  {
    std::lock_guard lock(planner_mutex());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    if (dim_ == 1) {
      plans_->forward = fftw_plan_dft_r2c_1d(n, real_buf.data(), cplx, flags);
      plans_->backward = fftw_plan_dft_c2r_1d(n, cplx, real_buf.data(), flags);
    } else {
      plans_->forward = fftw_plan_dft_r2c_2d(n, n, real_buf.data(), cplx, flags);
      plans_->backward = fftw_plan_dft_c2r_2d(n, n, cplx, real_buf.data(), flags);
    }
  }
  if (!plans_->forward || !plans_->backward) throw NumericalError("FFTW planning failed");

  real_buf = values_;
  fftw_execute_dft_r2c(plans_->forward, real_buf.data(), cplx);
  spectrum_.resize(spectral);
  // The table is even under index reversal, so its transform is real.
  for (std::size_t k = 0; k < spectral; ++k) spectrum_[k] = cplx_buf[k].real();
}

CirculantForceTable::~CirculantForceTable() = default;
CirculantForceTable::CirculantForceTable(CirculantForceTable&&) noexcept = default;
CirculantForceTable& CirculantForceTable::operator=(CirculantForceTable&&) noexcept = default;

std::vector<double> CirculantForceTable::convolve(std::span<const double> v) const {
  std::vector<double> out(values_.size());
  convolve(v, out);
  return out;
}

void CirculantForceTable::convolve(std::span<const double> v, std::span<double> out) const {
  if (v.size() != values_.size() || out.size() != values_.size()) {
    throw InvalidArgument("field has " + std::to_string(v.size()) + " entries, lattice has " +
                          std::to_string(values_.size()));
  }
  std::vector<double> in(v.begin(), v.end());
  std::vector<std::complex<double>> freq(spectrum_.size());
  auto* cplx = reinterpret_cast<fftw_complex*>(freq.data());
  fftw_execute_dft_r2c(plans_->forward, in.data(), cplx);
  for (std::size_t k = 0; k < freq.size(); ++k) freq[k] *= spectrum_[k];
  fftw_execute_dft_c2r(plans_->backward, cplx, out.data());
  const double inv = 1.0 / static_cast<double>(values_.size());
  for (double& o : out) o *= inv;
}

ContractionConstants contraction_constants(const InteractionKernel& kernel, const ThetaGrid& grid,
                                           std::span<const double> rho0_norms) {
  ContractionConstants c;
  const auto x = grid.nodes();
  const auto w = grid.gibbs_weights();
  double second_moment = 0.0;
  for (int j = 0; j < grid.size(); ++j) second_moment += x[j] * x[j] * w[j];
  c.c_j = kernel.l2_norm_squared() * second_moment;
  double sup_sq = 0.0;
  for (double n : rho0_norms) {
    if (!std::isfinite(n)) throw InvalidArgument("initial profile norms must be finite");
    sup_sq = std::max(sup_sq, n * n);
  }
  c.c_j_prime = sup_sq * c.c_j;
  return c;
}

}  // namespace lmf
