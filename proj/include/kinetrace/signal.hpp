#pragma once

// Deterministic DSP primitives: windowed-sinc FIR design and causal
// application, average re-referencing, decimation, z-score and min-max
// normalization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kinetrace/errors.hpp"

namespace kinetrace::signal {

struct ChannelSeries {
  std::vector<double> samples;
  double rate_hz = 0.0;
};

struct ZScoreParams {
  double mean = 0.0;
  double std = 1.0;
};

struct MinMaxParams {
  double min = 0.0;
  double max = 1.0;
};

enum class FilterKind { lowpass, bandpass, highpass };

inline std::string_view to_string(FilterKind k) {
  switch (k) {
    case FilterKind::lowpass: return "lowpass";
    case FilterKind::bandpass: return "bandpass";
    case FilterKind::highpass: return "highpass";
  }
  return "?";
}

struct FirDesign {
  FilterKind kind = FilterKind::lowpass;
  double low_hz = 0.0;   // unused for lowpass
  double high_hz = 0.0;  // unused for highpass
  double rate_hz = 0.0;
  std::size_t num_taps = 0;
};

// Symmetric (Type-I, linear-phase) FIR kernel.
struct FirKernel {
  std::vector<double> taps;
  FirDesign design;

  // Delay in samples introduced by causal application.
  std::size_t group_delay() const noexcept { return (taps.size() - 1) / 2; }
};

enum class BandId { FB1, FB2, FB3, FB4, FB5, FB6, FB7 };

struct FrequencyBand {
  BandId id;
  double low_hz;
  double high_hz;
};

inline constexpr std::array<FrequencyBand, 7> kBands{{
    {BandId::FB1, 0.5, 3.0},   // delta
    {BandId::FB2, 4.0, 8.0},   // theta
    {BandId::FB3, 9.0, 12.0},  // alpha
    {BandId::FB4, 13.0, 30.0}, // beta
    {BandId::FB5, 30.0, 50.0}, // gamma
    {BandId::FB6, 0.5, 8.0},   // delta + theta
    {BandId::FB7, 0.5, 12.0},  // delta + theta + alpha
}};

inline std::string to_string(BandId id) { return "FB" + std::to_string(static_cast<int>(id) + 1); }

inline const FrequencyBand& band(BandId id) { return kBands[static_cast<std::size_t>(id)]; }

inline BandId parse_band(std::string_view name) {
  for (const auto& b : kBands)
    if (to_string(b.id) == name) return b.id;
  throw ArgumentError("unknown frequency band '" + std::string(name) + "' (expected FB1..FB7)");
}

// Hamming rule of thumb: next odd integer >= 3.3 * rate / transition, capped.
inline std::size_t hamming_num_taps(double rate_hz, double transition_hz, std::size_t cap = 1001) {
  if (!(rate_hz > 0.0) || !(transition_hz > 0.0))
    throw DesignError("hamming_num_taps: rate and transition width must be positive");
  auto n = static_cast<std::size_t>(std::ceil(3.3 * rate_hz / transition_hz - 1e-9));
  if (n % 2 == 0) ++n;
  n = std::max<std::size_t>(n, 11);
  if (n > cap) n = (cap % 2 == 0) ? cap - 1 : cap;
  return n;
}

// Default length for a band: transition width of 1 Hz, narrowed to the lower
// band edge when that edge is below 1 Hz so the stopband below it is resolved.
inline std::size_t default_num_taps(const FrequencyBand& b, double rate_hz) {
  return hamming_num_taps(rate_hz, std::min(1.0, b.low_hz));
}

namespace detail {

inline double hamming(std::size_t i, std::size_t n) {
  return 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
}

// Hamming-windowed ideal lowpass, normalized to unit DC gain and symmetrized.
inline std::vector<double> windowed_sinc(double cutoff_hz, double rate_hz, std::size_t n) {
  const double fc = cutoff_hz / rate_hz;
  const std::size_t mid = (n - 1) / 2;
  std::vector<double> h(n);
  for (std::size_t i = 0; i <= mid; ++i) {
    const double m = static_cast<double>(i) - static_cast<double>(mid);
    const double ideal = (m == 0.0) ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    h[i] = ideal * hamming(i, n);
    h[n - 1 - i] = h[i];
  }
  double sum = 0.0;
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace detail

inline FirKernel design_fir(FilterKind kind, double low_hz, double high_hz, double rate_hz, std::size_t num_taps) {
  if (!(rate_hz > 0.0)) throw DesignError("design_fir: rate_hz must be positive");
  if (num_taps % 2 == 0) throw DesignError("design_fir: num_taps must be odd");
  if (num_taps < 11) throw DesignError("design_fir: num_taps must be at least 11");
  const double nyquist = rate_hz / 2.0;
  FirKernel k;
  k.design = {kind, low_hz, high_hz, rate_hz, num_taps};
  switch (kind) {
    case FilterKind::lowpass:
      if (!(high_hz > 0.0 && high_hz < nyquist)) throw DesignError("design_fir: lowpass cutoff must lie in (0, rate/2)");
      k.taps = detail::windowed_sinc(high_hz, rate_hz, num_taps);
      break;
    case FilterKind::bandpass: {
      if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist))
        throw DesignError("design_fir: bandpass edges must satisfy 0 < low < high < rate/2");
      auto hi = detail::windowed_sinc(high_hz, rate_hz, num_taps);
      const auto lo = detail::windowed_sinc(low_hz, rate_hz, num_taps);
      for (std::size_t i = 0; i < num_taps; ++i) hi[i] -= lo[i];
      k.taps = std::move(hi);
      break;
    }
    case FilterKind::highpass: {
      if (!(low_hz > 0.0 && low_hz < nyquist)) throw DesignError("design_fir: highpass cutoff must lie in (0, rate/2)");
      auto lo = detail::windowed_sinc(low_hz, rate_hz, num_taps);
      for (double& v : lo) v = -v;
      lo[(num_taps - 1) / 2] += 1.0;
      k.taps = std::move(lo);
      break;
    }
  }
  return k;
}

// Kernel for one of the FB1..FB7 bands. A band reaching the Nyquist frequency
// becomes a highpass from its lower edge.
inline FirKernel design_band(const FrequencyBand& b, double rate_hz, std::optional<std::size_t> num_taps = std::nullopt) {
  const std::size_t n = num_taps.value_or(default_num_taps(b, rate_hz));
  if (b.high_hz >= rate_hz / 2.0) return design_fir(FilterKind::highpass, b.low_hz, b.high_hz, rate_hz, n);
  return design_fir(FilterKind::bandpass, b.low_hz, b.high_hz, rate_hz, n);
}

// Causal direct-form convolution, zero history before the first sample.
inline std::vector<double> apply_fir(std::span<const double> x, const FirKernel& k) {
  const std::size_t n = k.taps.size();
  if (x.size() < n) throw LengthError("apply_fir: input shorter than the kernel");
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    const std::size_t span = std::min(n, t + 1);
    double acc = 0.0;
    for (std::size_t j = 0; j < span; ++j) acc += k.taps[j] * x[t - j];
    y[t] = acc;
  }
  return y;
}

inline ChannelSeries apply_fir(const ChannelSeries& x, const FirKernel& k) {
  return {apply_fir(std::span<const double>(x.samples), k), x.rate_hz};
}

inline std::vector<ChannelSeries> average_rereference(const std::vector<ChannelSeries>& channels) {
  if (channels.size() < 2) throw ShapeError("average_rereference: need at least two channels");
  const std::size_t len = channels.front().samples.size();
  const double rate = channels.front().rate_hz;
  for (const auto& c : channels)
    if (c.samples.size() != len || c.rate_hz != rate)
      throw ShapeError("average_rereference: channels differ in length or rate");
  std::vector<double> mean(len, 0.0);
  for (const auto& c : channels)
    for (std::size_t t = 0; t < len; ++t) mean[t] += c.samples[t];
  const double inv = 1.0 / static_cast<double>(channels.size());
  for (double& m : mean) m *= inv;
  std::vector<ChannelSeries> out = channels;
  for (auto& c : out)
    for (std::size_t t = 0; t < len; ++t) c.samples[t] -= mean[t];
  return out;
}

// Keeps indices 0, factor, 2*factor, ... The caller band-limits first.
inline ChannelSeries downsample(const ChannelSeries& x, std::size_t factor) {
  if (factor == 0) throw ArgumentError("downsample: factor must be >= 1");
  ChannelSeries out;
  out.rate_hz = x.rate_hz / static_cast<double>(factor);
  out.samples.reserve((x.samples.size() + factor - 1) / factor);
  for (std::size_t i = 0; i < x.samples.size(); i += factor) out.samples.push_back(x.samples[i]);
  return out;
}

// Mean and (T-1)-denominator standard deviation.
inline ZScoreParams fit_zscore(std::span<const double> x) {
  if (x.size() < 2) throw LengthError("zscore: need at least two samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  if (!(sd > 1e-12)) throw DegenerateChannelError("zscore: channel is constant");
  return {mean, sd};
}

inline std::vector<double> apply_zscore(std::span<const double> x, const ZScoreParams& p) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - p.mean) / p.std;
  return out;
}

inline std::pair<ChannelSeries, ZScoreParams> zscore(const ChannelSeries& x) {
  const auto p = fit_zscore(x.samples);
  return {{apply_zscore(x.samples, p), x.rate_hz}, p};
}

inline MinMaxParams fit_minmax(std::span<const double> x) {
  if (x.empty()) throw LengthError("minmax: empty series");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (!(*hi > *lo)) throw DegenerateChannelError("minmax: series is constant");
  return {*lo, *hi};
}

// (x - min) / (max - min) elementwise; values outside [min, max] are not clipped.
inline std::vector<double> apply_minmax(std::span<const double> x, const MinMaxParams& p) {
  if (!(p.max > p.min)) throw DegenerateChannelError("minmax: max must exceed min");
  const double range = p.max - p.min;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - p.min) / range;
  return out;
}

inline std::vector<double> invert_minmax(std::span<const double> x, const MinMaxParams& p) {
  const double range = p.max - p.min;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * range + p.min;
  return out;
}

inline std::pair<ChannelSeries, MinMaxParams> minmax_normalize(const ChannelSeries& x,
                                                               std::optional<MinMaxParams> params = std::nullopt) {
  const MinMaxParams p = params ? *params : fit_minmax(x.samples);
  return {{apply_minmax(x.samples, p), x.rate_hz}, p};
}

}  // namespace kinetrace::signal
