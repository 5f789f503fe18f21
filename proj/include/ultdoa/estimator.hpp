#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ultdoa/channel.hpp"
#include "ultdoa/fft.hpp"
#include "ultdoa/signal.hpp"

namespace ultdoa {

using ChannelEstimateGrid = ComplexGrid;

// NR basic time unit T_c = 1 / (480 kHz * 4096); UL-RTOA is reported as a
// multiple of T_c * 2^k.
inline constexpr double kTcSeconds = 1.0 / (480000.0 * 4096.0);
inline constexpr int kUlRtoaKMin = 0;
inline constexpr int kUlRtoaKMax = 5;
inline constexpr std::uint8_t kLocalizationSrsUsage = 5;
inline constexpr std::uint8_t kLocalizationReportTag = 1;
inline constexpr const char* kLocalizationReportType = "Localization";

struct PeakDetectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Half-open sample range [first, last) of the oversampled impulse response.
struct PeakSearchWindow {
  std::size_t first = 0;
  std::size_t last = 0;
};

// Delays of interest stay within the cyclic-prefix share of the symbol.
inline PeakSearchWindow default_peak_window(const SrsConfig& cfg)
{
  return {0, static_cast<std::size_t>(0.07 * static_cast<double>(cfg.cir_length()))};
}

struct ToaMeasurement {
  std::uint32_t trp_id = 0;
  double toa_s = 0.0;
  std::size_t peak_index = 0;
  std::uint64_t ul_rtoa_index = 0;
  double rsrp_dbfs = 0.0;
  double rx_tx_diff_s = 0.0;
};

// Averaged impulse-response power profile, one series per antenna.
struct Cir {
  std::vector<std::vector<double>> power;
};

// Least-squares estimate H = Y / X on the pilot comb; other bins stay zero.
inline ChannelEstimateGrid ls_estimate(const ResourceGrid& rx, const SrsSequence& pilot, const SrsConfig& cfg)
{
  cfg.validate();
  if (rx.n_ant != cfg.n_rx || rx.n_port != cfg.p_rx || rx.n_symb != cfg.n_symb_srs || rx.n_bins != cfg.n_sc)
    throw std::invalid_argument("grid shape does not match the configuration");
  if (pilot.values.size() != cfg.m_sc)
    throw std::invalid_argument("pilot sequence length does not match m_sc");
  for (const auto& x : pilot.values)
    if (std::abs(x) == 0.0)
      throw std::invalid_argument("pilot sequence must not contain zeros");

  ChannelEstimateGrid est(rx.n_ant, rx.n_port, rx.n_symb, cfg.n_sc);
  for (std::size_t a = 0; a < rx.n_ant; ++a)
    for (std::size_t p = 0; p < rx.n_port; ++p)
      for (std::size_t l = 0; l < rx.n_symb; ++l)
        for (std::size_t i = 0; i < cfg.m_sc; ++i) {
          const std::size_t k = cfg.comb_bin(i);
          est.at(a, p, l, k) = rx.at(a, p, l, k) / pilot.values[i];
        }
  return est;
}

// Fills the gaps of the comb estimate over the occupied band: complex-linear
// interpolation between neighbouring pilots, edge replication outside the
// first/last pilot.
inline ChannelEstimateGrid interpolate_estimate(const ChannelEstimateGrid& est, const SrsConfig& cfg)
{
  cfg.validate();
  if (est.n_bins != cfg.n_sc)
    throw std::invalid_argument("estimate width does not match the occupied band");

  ChannelEstimateGrid out(est.n_ant, est.n_port, est.n_symb, est.n_bins);
  const std::size_t first = cfg.comb_bin(0);
  const std::size_t last = cfg.last_comb_bin();
  const std::size_t step = cfg.k_tc;

  for (std::size_t a = 0; a < est.n_ant; ++a)
    for (std::size_t p = 0; p < est.n_port; ++p)
      for (std::size_t l = 0; l < est.n_symb; ++l)
        for (std::size_t k = 0; k < est.n_bins; ++k) {
          if (k <= first) {
            out.at(a, p, l, k) = est.at(a, p, l, first);
          } else if (k >= last) {
            out.at(a, p, l, k) = est.at(a, p, l, last);
          } else {
            const std::size_t i = (k - first) / step;
            const std::size_t lo = cfg.comb_bin(i);
            if (k == lo) {
              out.at(a, p, l, k) = est.at(a, p, l, lo);
            } else {
              const std::size_t hi = cfg.comb_bin(i + 1);
              const double t = static_cast<double>(k - lo) / static_cast<double>(step);
              out.at(a, p, l, k) = (1.0 - t) * est.at(a, p, l, lo) + t * est.at(a, p, l, hi);
            }
          }
        }
  return out;
}

// Zero-pads the band estimate into the oversampled spectrum: the lower half of
// the n_fft grid leads, the upper half is moved to the tail, and
// (oversampling - 1) * n_fft zeros sit in between.
inline ChannelEstimateGrid oversample_frequency(const ChannelEstimateGrid& est, const SrsConfig& cfg)
{
  cfg.validate();
  if (est.n_bins != cfg.n_sc)
    throw std::invalid_argument("estimate width does not match the occupied band");

  ChannelEstimateGrid out(est.n_ant, est.n_port, est.n_symb, cfg.cir_length());
  const std::size_t half = cfg.n_fft / 2;
  const std::size_t tail_offset = cfg.cir_length() - cfg.n_fft;

  for (std::size_t a = 0; a < est.n_ant; ++a)
    for (std::size_t p = 0; p < est.n_port; ++p)
      for (std::size_t l = 0; l < est.n_symb; ++l)
        for (std::size_t b = 0; b < cfg.n_fft; ++b) {
          const std::complex<double> v = (b < cfg.n_sc) ? est.at(a, p, l, b) : 0.0;
          const std::size_t dst = (b < half) ? b : tail_offset + b;
          out.at(a, p, l, dst) = v;
        }
  return out;
}

// Normalized inverse transform of each oversampled spectrum row.
inline ChannelEstimateGrid to_time_domain(const ChannelEstimateGrid& spectrum, const SrsConfig& cfg)
{
  cfg.validate();
  if (spectrum.n_bins != cfg.cir_length())
    throw std::invalid_argument("spectrum width does not match the oversampled grid");

  ChannelEstimateGrid out = spectrum;
  std::vector<std::complex<double>> row(spectrum.n_bins);
  for (std::size_t a = 0; a < out.n_ant; ++a)
    for (std::size_t p = 0; p < out.n_port; ++p)
      for (std::size_t l = 0; l < out.n_symb; ++l) {
        for (std::size_t k = 0; k < out.n_bins; ++k)
          row[k] = out.at(a, p, l, k);
        detail::ifft_normalized(row);
        for (std::size_t k = 0; k < out.n_bins; ++k)
          out.at(a, p, l, k) = row[k];
      }
  return out;
}

// Power profile averaged over sounding symbols, summed over ports.
inline Cir average_cir(const ChannelEstimateGrid& time_grid)
{
  Cir cir;
  cir.power.assign(time_grid.n_ant, std::vector<double>(time_grid.n_bins, 0.0));
  const double scale = 1.0 / static_cast<double>(time_grid.n_symb);
  for (std::size_t a = 0; a < time_grid.n_ant; ++a)
    for (std::size_t p = 0; p < time_grid.n_port; ++p)
      for (std::size_t l = 0; l < time_grid.n_symb; ++l)
        for (std::size_t k = 0; k < time_grid.n_bins; ++k)
          cir.power[a][k] += scale * std::norm(time_grid.at(a, p, l, k));
  return cir;
}

// Strongest sample in the window; ties resolve to the earliest index. A
// profile with no energy above 1e-12 of the window mean has no usable peak.
inline std::size_t detect_peak(const std::vector<double>& power, const PeakSearchWindow& window)
{
  if (window.first >= window.last || window.last > power.size())
    throw std::invalid_argument("peak search window is empty or out of range");

  std::size_t best = window.first;
  double best_power = power[window.first];
  double sum = 0.0;
  for (std::size_t k = window.first; k < window.last; ++k) {
    sum += power[k];
    if (power[k] > best_power) {
      best_power = power[k];
      best = k;
    }
  }
  const double mean = sum / static_cast<double>(window.last - window.first);
  if (best_power <= 1e-12 * mean)
    throw PeakDetectionError("no detectable peak in the search window");
  return best;
}

inline double toa_seconds(std::size_t peak_index, const SrsConfig& cfg)
{
  return static_cast<double>(peak_index) / static_cast<double>(cfg.oversampling) * cfg.sample_period_s;
}

inline std::uint64_t quantize_ul_rtoa(double toa_s, int k)
{
  if (k < kUlRtoaKMin || k > kUlRtoaKMax)
    throw std::invalid_argument("UL-RTOA resolution exponent k must lie in [0, 5]");
  if (!(toa_s >= 0.0) || !std::isfinite(toa_s))
    throw std::invalid_argument("toa must be nonnegative and finite");
  const double step = kTcSeconds * static_cast<double>(1 << k);
  return static_cast<std::uint64_t>(std::llround(toa_s / step));
}

inline double dequantize_ul_rtoa(std::uint64_t index, int k)
{
  if (k < kUlRtoaKMin || k > kUlRtoaKMax)
    throw std::invalid_argument("UL-RTOA resolution exponent k must lie in [0, 5]");
  const double step = kTcSeconds * static_cast<double>(1 << k);
  return static_cast<double>(index) * step;
}

namespace detail {

inline double rsrp_dbfs(const ChannelEstimateGrid& ls, const SrsConfig& cfg, std::size_t antenna)
{
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < ls.n_port; ++p)
    for (std::size_t l = 0; l < ls.n_symb; ++l)
      for (std::size_t i = 0; i < cfg.m_sc; ++i) {
        acc += std::norm(ls.at(antenna, p, l, cfg.comb_bin(i)));
        ++count;
      }
  return 10.0 * std::log10(acc / static_cast<double>(count));
}

}  // namespace detail

// Full per-antenna ToA chain: LS estimate, gap interpolation, frequency-domain
// oversampling, inverse transform, power averaging and peak search. The
// receiver is assumed time-aligned with its own transmissions, so the
// Rx-Tx difference is identically zero here.
inline std::vector<ToaMeasurement> estimate_toa(const ResourceGrid& rx, const SrsSequence& pilot,
                                                const SrsConfig& cfg,
                                                std::optional<PeakSearchWindow> window = std::nullopt,
                                                int rtoa_k = 0)
{
  const auto ls = ls_estimate(rx, pilot, cfg);
  const auto interpolated = interpolate_estimate(ls, cfg);
  const auto spectrum = oversample_frequency(interpolated, cfg);
  const auto impulse = to_time_domain(spectrum, cfg);
  const auto cir = average_cir(impulse);
  const PeakSearchWindow w = window.value_or(default_peak_window(cfg));

  std::vector<ToaMeasurement> out;
  out.reserve(rx.n_ant);
  for (std::size_t a = 0; a < rx.n_ant; ++a) {
    ToaMeasurement m;
    m.trp_id = static_cast<std::uint32_t>(a);
    m.peak_index = detect_peak(cir.power[a], w);
    m.toa_s = toa_seconds(m.peak_index, cfg);
    m.ul_rtoa_index = quantize_ul_rtoa(m.toa_s, rtoa_k);
    m.rsrp_dbfs = detail::rsrp_dbfs(ls, cfg, a);
    m.rx_tx_diff_s = 0.0;
    out.push_back(m);
  }
  return out;
}

// FAPI-style SRS indication carrying per-TRP arrival offsets in whole
// nanoseconds, 16 bits each.
struct SrsIndicationReport {
  std::uint8_t srs_usage_type = kLocalizationSrsUsage;
  std::string report_type = kLocalizationReportType;
  std::vector<std::uint16_t> offsets_ns;
};

inline SrsIndicationReport encode_srs_indication(const std::vector<ToaMeasurement>& measurements)
{
  SrsIndicationReport report;
  report.offsets_ns.reserve(measurements.size());
  for (const auto& m : measurements) {
    const double ns = std::round(m.toa_s * 1e9);
    if (ns < 0.0 || ns > 65535.0)
      throw std::out_of_range("toa offset does not fit the 16-bit nanosecond field");
    report.offsets_ns.push_back(static_cast<std::uint16_t>(ns));
  }
  return report;
}

// Wire layout: usage byte, report-type tag byte, big-endian offset count,
// big-endian 16-bit offsets.
inline std::vector<std::uint8_t> serialize_srs_indication(const SrsIndicationReport& report)
{
  if (report.srs_usage_type != kLocalizationSrsUsage)
    throw std::invalid_argument("unsupported SRS usage type");
  if (report.report_type != kLocalizationReportType)
    throw std::invalid_argument("unsupported SRS report type");
  if (report.offsets_ns.size() > 65535)
    throw std::invalid_argument("too many offsets for one indication");

  std::vector<std::uint8_t> bytes;
  bytes.reserve(4 + 2 * report.offsets_ns.size());
  bytes.push_back(report.srs_usage_type);
  bytes.push_back(kLocalizationReportTag);
  const std::uint16_t count = static_cast<std::uint16_t>(report.offsets_ns.size());
  bytes.push_back(static_cast<std::uint8_t>(count >> 8));
  bytes.push_back(static_cast<std::uint8_t>(count & 0xff));
  for (const std::uint16_t v : report.offsets_ns) {
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return bytes;
}

inline SrsIndicationReport parse_srs_indication(const std::vector<std::uint8_t>& bytes)
{
  if (bytes.size() < 4)
    throw std::invalid_argument("truncated SRS indication");
  if (bytes[0] != kLocalizationSrsUsage)
    throw std::invalid_argument("unsupported SRS usage type");
  if (bytes[1] != kLocalizationReportTag)
    throw std::invalid_argument("unsupported SRS report type");
  const std::size_t count = (static_cast<std::size_t>(bytes[2]) << 8) | bytes[3];
  if (bytes.size() != 4 + 2 * count)
    throw std::invalid_argument("SRS indication length does not match its count field");

  SrsIndicationReport report;
  report.offsets_ns.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = 4 + 2 * i;
    report.offsets_ns.push_back(
        static_cast<std::uint16_t>((static_cast<std::uint16_t>(bytes[off]) << 8) | bytes[off + 1]));
  }
  return report;
}

}  // namespace ultdoa
