#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "ultdoa/signal.hpp"

namespace ultdoa {

inline constexpr double kSpeedOfLightMps = 299792458.0;

struct Position3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline double distance_m(const Position3D& a, const Position3D& b)
{
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

inline double geometric_delay(const Position3D& a, const Position3D& b)
{
  return distance_m(a, b) / kSpeedOfLightMps;
}

struct PathComponent {
  double delay_s = 0.0;
  std::complex<double> gain{1.0, 0.0};
};

// Static multipath channel plus white Gaussian noise. The first path is the
// line-of-sight component whose delay carries the geometry.
struct ChannelModel {
  std::vector<PathComponent> paths;
  double noise_std = 0.0;  // per real dimension
  std::uint64_t seed = 0;

  void validate(const SrsConfig& cfg) const
  {
    if (paths.empty())
      throw std::invalid_argument("channel needs at least the line-of-sight path");
    for (const auto& p : paths) {
      if (!(p.delay_s >= 0.0) || !std::isfinite(p.delay_s))
        throw std::invalid_argument("path delay must be nonnegative and finite");
      if (p.delay_s > cfg.symbol_duration_s())
        throw std::invalid_argument("path delay exceeds the OFDM symbol duration");
      if (!std::isfinite(p.gain.real()) || !std::isfinite(p.gain.imag()))
        throw std::invalid_argument("path gain must be finite");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
      throw std::invalid_argument("noise_std must be nonnegative and finite");
  }
};

// Baseband frequency of subcarrier k under the DFT convention: the upper half
// of the grid wraps to negative frequencies. Keeping this consistent with the
// transform is what preserves sub-sample delay fidelity for wide bands.
inline double dft_bin_frequency_hz(std::size_t k, const SrsConfig& cfg)
{
  const double df = 1.0 / (static_cast<double>(cfg.n_fft) * cfg.sample_period_s);
  const double idx = (k < cfg.n_fft / 2) ? static_cast<double>(k)
                                         : static_cast<double>(k) - static_cast<double>(cfg.n_fft);
  return idx * df;
}

namespace detail {

inline std::vector<std::complex<double>> frequency_response(const SrsConfig& cfg, const ChannelModel& model)
{
  std::vector<std::complex<double>> h(cfg.n_sc);
  for (std::size_t k = 0; k < cfg.n_sc; ++k) {
    const double f = dft_bin_frequency_hz(k, cfg);
    std::complex<double> acc{0.0, 0.0};
    for (const auto& p : model.paths) {
      const double ang = -2.0 * std::numbers::pi * f * p.delay_s;
      acc += p.gain * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    h[k] = acc;
  }
  return h;
}

inline void add_noise(ResourceGrid& grid, std::size_t antenna, double noise_std, std::uint64_t seed)
{
  if (noise_std <= 0.0)
    return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, noise_std);
  for (std::size_t p = 0; p < grid.n_port; ++p)
    for (std::size_t l = 0; l < grid.n_symb; ++l)
      for (std::size_t k = 0; k < grid.n_bins; ++k) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        grid.at(antenna, p, l, k) += std::complex<double>(re, im);
      }
}

}  // namespace detail

// Applies one channel to the whole grid: every subcarrier is scaled by the
// frequency response, then noise is drawn once across all cells.
inline ResourceGrid apply_channel(const ResourceGrid& tx, const SrsConfig& cfg, const ChannelModel& model)
{
  cfg.validate();
  model.validate(cfg);
  if (tx.n_ant != cfg.n_rx || tx.n_port != cfg.p_rx || tx.n_symb != cfg.n_symb_srs || tx.n_bins != cfg.n_sc)
    throw std::invalid_argument("grid shape does not match the configuration");

  ResourceGrid rx = tx;
  const auto h = detail::frequency_response(cfg, model);
  for (std::size_t a = 0; a < rx.n_ant; ++a)
    for (std::size_t p = 0; p < rx.n_port; ++p)
      for (std::size_t l = 0; l < rx.n_symb; ++l)
        for (std::size_t k = 0; k < rx.n_bins; ++k)
          rx.at(a, p, l, k) *= h[k];

  if (model.noise_std > 0.0) {
    std::mt19937_64 rng(model.seed);
    std::normal_distribution<double> gauss(0.0, model.noise_std);
    for (auto& c : rx.cells) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      c += std::complex<double>(re, im);
    }
  }
  return rx;
}

// One independent channel per receive antenna, as seen by spatially separate
// TRPs observing the same transmission.
inline ResourceGrid apply_channels(const ResourceGrid& tx, const SrsConfig& cfg,
                                   const std::vector<ChannelModel>& per_antenna)
{
  cfg.validate();
  if (tx.n_ant != cfg.n_rx || tx.n_port != cfg.p_rx || tx.n_symb != cfg.n_symb_srs || tx.n_bins != cfg.n_sc)
    throw std::invalid_argument("grid shape does not match the configuration");
  if (per_antenna.size() != tx.n_ant)
    throw std::invalid_argument("need exactly one channel model per receive antenna");

  ResourceGrid rx = tx;
  for (std::size_t a = 0; a < rx.n_ant; ++a) {
    const auto& model = per_antenna[a];
    model.validate(cfg);
    const auto h = detail::frequency_response(cfg, model);
    for (std::size_t p = 0; p < rx.n_port; ++p)
      for (std::size_t l = 0; l < rx.n_symb; ++l)
        for (std::size_t k = 0; k < rx.n_bins; ++k)
          rx.at(a, p, l, k) *= h[k];
    detail::add_noise(rx, a, model.noise_std, model.seed);
  }
  return rx;
}

}  // namespace ultdoa
