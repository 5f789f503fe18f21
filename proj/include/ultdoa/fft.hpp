#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace ultdoa::detail {

inline constexpr bool is_power_of_two(std::size_t n)
{
  return n != 0 && (n & (n - 1)) == 0;
}

// Iterative radix-2 transform, decimation in time. All grid and oversampling
// sizes are constrained to powers of two, so no mixed-radix support is needed.
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse)
{
  const std::size_t n = a.size();
  if (!is_power_of_two(n))
    throw std::invalid_argument("fft size must be a power of two");
  if (n == 1)
    return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1)
      j ^= bit;
    j ^= bit;
    if (i < j)
      std::swap(a[i], a[j]);
  }

  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = {std::cos(ang), std::sin(ang)};
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * twiddle[k * stride];
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

inline void ifft_normalized(std::vector<std::complex<double>>& a)
{
  fft_radix2(a, true);
  const double scale = 1.0 / static_cast<double>(a.size());
  for (auto& x : a)
    x *= scale;
}

}  // namespace ultdoa::detail
