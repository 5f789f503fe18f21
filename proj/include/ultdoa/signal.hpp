#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ultdoa/fft.hpp"

namespace ultdoa {

// Uplink sounding pilot configuration. The pilot occupies every k_tc-th
// subcarrier of an n_sc-wide band placed at the bottom of an n_fft grid.
struct SrsConfig {
  unsigned k_tc = 2;           // comb spacing between pilot subcarriers
  std::size_t m_sc = 636;      // number of pilot subcarriers
  std::size_t n_sc = 1272;     // occupied band width in subcarriers
  std::size_t n_fft = 2048;
  std::size_t k0 = 0;          // subcarrier of the first pilot
  std::size_t n_symb_srs = 1;  // sounding symbols per occasion
  std::size_t n_rx = 1;        // receive antennas (one per TRP)
  std::size_t p_rx = 1;        // receive ports per antenna
  std::size_t oversampling = 16;
  double sample_period_s = 1.0 / 61.44e6;

  void validate() const
  {
    if (k_tc != 1 && k_tc != 2 && k_tc != 4 && k_tc != 8)
      throw std::invalid_argument("k_tc must be one of {1, 2, 4, 8}");
    if (m_sc == 0)
      throw std::invalid_argument("m_sc must be positive");
    if (n_symb_srs == 0 || n_rx == 0 || p_rx == 0)
      throw std::invalid_argument("grid dimensions must be positive");
    if (!detail::is_power_of_two(n_fft))
      throw std::invalid_argument("n_fft must be a power of two");
    if (!detail::is_power_of_two(oversampling))
      throw std::invalid_argument("oversampling must be a power of two");
    if (m_sc * static_cast<std::size_t>(k_tc) > n_sc)
      throw std::invalid_argument("comb does not fit the occupied band (m_sc * k_tc > n_sc)");
    if (n_sc > n_fft)
      throw std::invalid_argument("occupied band exceeds the FFT grid (n_sc > n_fft)");
    if (k0 + (m_sc - 1) * static_cast<std::size_t>(k_tc) >= n_sc)
      throw std::invalid_argument("last pilot subcarrier falls outside the occupied band");
    if (!(sample_period_s > 0.0) || !std::isfinite(sample_period_s))
      throw std::invalid_argument("sample_period_s must be positive and finite");
  }

  std::size_t comb_bin(std::size_t i) const { return k0 + static_cast<std::size_t>(k_tc) * i; }
  std::size_t last_comb_bin() const { return comb_bin(m_sc - 1); }
  std::size_t cir_length() const { return oversampling * n_fft; }
  double sample_rate_hz() const { return 1.0 / sample_period_s; }
  double symbol_duration_s() const { return static_cast<double>(n_fft) * sample_period_s; }
};

// Dense complex grid indexed [antenna][port][symbol][bin]. The same storage
// carries received subcarriers (n_bins = n_sc), spectral channel estimates
// (n_sc or oversampling * n_fft bins) and time-domain series.
struct ComplexGrid {
  std::size_t n_ant = 0;
  std::size_t n_port = 0;
  std::size_t n_symb = 0;
  std::size_t n_bins = 0;
  std::vector<std::complex<double>> cells;

  ComplexGrid() = default;
  ComplexGrid(std::size_t ant, std::size_t port, std::size_t symb, std::size_t bins)
      : n_ant(ant), n_port(port), n_symb(symb), n_bins(bins), cells(ant * port * symb * bins)
  {
  }

  std::size_t index(std::size_t a, std::size_t p, std::size_t l, std::size_t k) const
  {
    return ((a * n_port + p) * n_symb + l) * n_bins + k;
  }
  std::complex<double>& at(std::size_t a, std::size_t p, std::size_t l, std::size_t k)
  {
    return cells[index(a, p, l, k)];
  }
  const std::complex<double>& at(std::size_t a, std::size_t p, std::size_t l, std::size_t k) const
  {
    return cells[index(a, p, l, k)];
  }
  bool same_shape(const ComplexGrid& o) const
  {
    return n_ant == o.n_ant && n_port == o.n_port && n_symb == o.n_symb && n_bins == o.n_bins;
  }
};

using ResourceGrid = ComplexGrid;

struct SrsSequence {
  std::vector<std::complex<double>> values;
};

inline bool is_prime(std::size_t n)
{
  if (n < 2)
    return false;
  for (std::size_t d = 2; d * d <= n; ++d)
    if (n % d == 0)
      return false;
  return true;
}

// Base sequence length: the largest prime not exceeding the pilot count.
inline std::size_t zadoff_chu_length(std::size_t m_sc)
{
  for (std::size_t n = m_sc; n >= 2; --n)
    if (is_prime(n))
      return n;
  throw std::invalid_argument("no prime Zadoff-Chu length exists for m_sc < 2");
}

// x_q(n) = exp(-j pi q n (n+1) / N_ZC), cyclically extended to m_sc samples.
// The exponent is reduced mod 2*N_ZC in integers to keep the phase exact.
inline SrsSequence generate_srs_sequence(const SrsConfig& cfg, unsigned root)
{
  cfg.validate();
  const std::size_t n_zc = zadoff_chu_length(cfg.m_sc);
  if (root == 0 || root >= n_zc)
    throw std::invalid_argument("Zadoff-Chu root must lie in [1, N_ZC)");

  SrsSequence seq;
  seq.values.reserve(cfg.m_sc);
  const std::uint64_t mod = 2 * static_cast<std::uint64_t>(n_zc);
  for (std::size_t n = 0; n < cfg.m_sc; ++n) {
    const std::uint64_t m = n % n_zc;
    const std::uint64_t num = (root % mod) * (m % mod) % mod * ((m + 1) % mod) % mod;
    const double phase = -std::numbers::pi * static_cast<double>(num) / static_cast<double>(n_zc);
    seq.values.emplace_back(std::cos(phase), std::sin(phase));
  }
  return seq;
}

// Places the pilot on its comb positions of every antenna, port and sounding
// symbol; the remaining subcarriers stay zero.
inline ResourceGrid map_to_grid(const SrsConfig& cfg, const SrsSequence& seq)
{
  cfg.validate();
  if (seq.values.size() != cfg.m_sc)
    throw std::invalid_argument("pilot sequence length does not match m_sc");

  ResourceGrid grid(cfg.n_rx, cfg.p_rx, cfg.n_symb_srs, cfg.n_sc);
  for (std::size_t a = 0; a < grid.n_ant; ++a)
    for (std::size_t p = 0; p < grid.n_port; ++p)
      for (std::size_t l = 0; l < grid.n_symb; ++l)
        for (std::size_t i = 0; i < cfg.m_sc; ++i)
          grid.at(a, p, l, cfg.comb_bin(i)) = seq.values[i];
  return grid;
}

}  // namespace ultdoa
