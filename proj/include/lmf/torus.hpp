#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace lmf {

/// Weights of trigonometric (band-limited) interpolation from the uniform grid
/// x_m = m / M on the unit circle to the point x: f(x) ~ sum_m w_m f(x_m).
/// For even M the Nyquist mode is split symmetrically (cosine only).
inline std::vector<double> fourier_interpolation_weights(int m_sites, double x) {
  std::vector<double> w(m_sites);
  const int half = (m_sites - 1) / 2;
  for (int m = 0; m < m_sites; ++m) {
    const double delta = x - static_cast<double>(m) / m_sites;
    double acc = 1.0;
    for (int k = 1; k <= half; ++k) acc += 2.0 * std::cos(2.0 * std::numbers::pi * k * delta);
    if (m_sites % 2 == 0) acc += std::cos(std::numbers::pi * m_sites * delta);
    w[m] = acc / m_sites;
  }
  return w;
}

}  // namespace lmf
