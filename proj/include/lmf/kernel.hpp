#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "lmf/potential.hpp"

namespace lmf {

enum class KernelForm { kCosine, kWrappedGaussian };

/// Smooth, symmetric, nonnegative interaction J on the unit torus T^d, d in {1, 2}.
///
///   cosine:           J(x) = a * prod_k (1 + cos(2 pi x_k))
///   wrapped_gaussian: J(x) = a * prod_k sum_m exp(-(x_k + m)^2 / (2 w^2))
class InteractionKernel {
 public:
  InteractionKernel(KernelForm form, int dim, double amplitude, double width = 0.1);

  static InteractionKernel cosine(double amplitude, int dim = 1) {
    return {KernelForm::kCosine, dim, amplitude};
  }
  static InteractionKernel wrapped_gaussian(double amplitude, double width, int dim = 1) {
    return {KernelForm::kWrappedGaussian, dim, amplitude, width};
  }
  /// J identically equal to `value` (cosine family does not contain it; it is
  /// a wrapped Gaussian of infinite width, kept separate for exact tests).
  static InteractionKernel constant(double value, int dim = 1);

  KernelForm form() const { return form_; }
  int dim() const { return dim_; }
  double amplitude() const { return amplitude_; }
  double width() const { return width_; }

  /// J at a point of T^d given by its coordinates (only the first dim() are used).
  double operator()(std::span<const double> x) const;
  double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }

  /// Integral of |J| over the torus.
  double l1_norm() const;
  /// Integral of J^2 over the torus (periodic trapezoid, spectrally accurate).
  double l2_norm_squared() const;

 private:
  double factor(double x) const;

  KernelForm form_;
  int dim_;
  double amplitude_;
  double width_;
  bool constant_ = false;
};

/// J(j/N) / N^d on the lattice T_N^d together with its discrete spectrum.
/// Immutable after construction and safe to share between threads.
class CirculantForceTable {
 public:
  CirculantForceTable(const InteractionKernel& kernel, int n);
  ~CirculantForceTable();
  CirculantForceTable(const CirculantForceTable&) = delete;
  CirculantForceTable& operator=(const CirculantForceTable&) = delete;
  CirculantForceTable(CirculantForceTable&&) noexcept;
  CirculantForceTable& operator=(CirculantForceTable&&) noexcept;

  int side() const { return n_; }
  int dim() const { return dim_; }
  std::size_t sites() const { return values_.size(); }

  /// values[j] = J(j/N)/N^d in row-major order.
  std::span<const double> values() const { return values_; }
  /// Real spectrum of the table (r2c layout: last axis holds N/2 + 1 entries).
  std::span<const double> spectrum() const { return spectrum_; }

  /// out[i] = sum_j values[j - i] v[j], computed by FFT.
  std::vector<double> convolve(std::span<const double> v) const;
  void convolve(std::span<const double> v, std::span<double> out) const;

 private:
  struct Plans;

  int n_;
  int dim_;
  std::vector<double> values_;
  std::vector<double> spectrum_;
  std::unique_ptr<Plans> plans_;
};

inline std::vector<double> convolve_field(const CirculantForceTable& table, std::span<const double> v) {
  return table.convolve(v);
}

struct ContractionConstants {
  double c_j = 0.0;        ///< int_T int_R J^2(y) eta^2 e^{-2 psi(eta)} d eta dy
  double c_j_prime = 0.0;  ///< sup_x ||rho_0(x, .)||^2_{2,psi} * c_j
};

/// Constants of the short-time contraction bound for the drift map.
ContractionConstants contraction_constants(const InteractionKernel& kernel, const ThetaGrid& grid,
                                           std::span<const double> rho0_norms);

}  // namespace lmf
