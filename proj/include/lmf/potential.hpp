#pragma once

#include <span>
#include <vector>

namespace lmf {

/// Confining single-spin potential psi(theta) = theta^{2k} + lower order terms.
///
/// Coefficients are stored in increasing order c_0..c_{2k}; the leading one is
/// exactly 1 and the degree is even and at least 4.
class Potential {
 public:
  explicit Potential(std::vector<double> coefficients);

  /// psi(theta) = theta^4.
  static Potential quartic();

  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  const std::vector<double>& coefficients() const { return coeffs_; }

  double value(double theta) const;
  double first_derivative(double theta) const;
  double second_derivative(double theta) const;

 private:
  std::vector<double> coeffs_;
  std::vector<double> d1_;
  std::vector<double> d2_;
};

/// Uniform symmetric grid on [-theta_max, theta_max] carrying the trapezoid
/// rule against the Gibbs weight exp(-2 psi).
class ThetaGrid {
 public:
  static constexpr int kMinPoints = 64;
  static constexpr double kTailRatio = 1e-12;

  ThetaGrid(const Potential& potential, double theta_max, int n_points);

  const Potential& potential() const { return potential_; }
  double theta_max() const { return theta_max_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  double spacing() const { return spacing_; }

  std::span<const double> nodes() const { return nodes_; }
  double node(int j) const { return nodes_[j]; }

  /// Trapezoid weight times exp(-2 psi(theta_j)).
  std::span<const double> gibbs_weights() const { return gibbs_weights_; }
  /// Plain trapezoid weight (spacing, halved at both ends).
  std::span<const double> trapezoid_weights() const { return trapezoid_; }
  /// psi evaluated at the nodes.
  std::span<const double> psi_values() const { return psi_; }

  /// Samples f on the nodes.
  template <class F>
  std::vector<double> sample(F&& f) const {
    std::vector<double> out(nodes_.size());
    for (std::size_t j = 0; j < nodes_.size(); ++j) out[j] = f(nodes_[j]);
    return out;
  }

 private:
  Potential potential_;
  double theta_max_;
  double spacing_;
  std::vector<double> nodes_;
  std::vector<double> trapezoid_;
  std::vector<double> psi_;
  std::vector<double> gibbs_weights_;
};

/// Sum_j f_j g_j w_j, the discrete <f, g>_psi.
double weighted_inner(const ThetaGrid& grid, std::span<const double> f, std::span<const double> g);

/// Weighted L2 norm ||f||_{2,psi}.
double weighted_norm(const ThetaGrid& grid, std::span<const double> f);

/// Total Gibbs mass <f, 1>_psi.
double weighted_mass(const ThetaGrid& grid, std::span<const double> f);

/// First moment <f, theta>_psi.
double weighted_first_moment(const ThetaGrid& grid, std::span<const double> f);

/// Rescales a nonnegative grid function to unit Gibbs mass.
std::vector<double> normalize_density(const ThetaGrid& grid, std::span<const double> rho);

/// Density of the tilted Gibbs law exp(2 b theta - 2 psi) / Z_b relative to exp(-2 psi),
/// normalized on the grid.
std::vector<double> tilted_gibbs_density(const ThetaGrid& grid, double tilt);

}  // namespace lmf
