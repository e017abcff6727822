#pragma once

// Recording-level preprocessing built from the signal primitives:
// channel selection, re-referencing, kinematics smoothing, decimation, band
// filtering, and leakage-free normalization fitted on training trials.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kinetrace/dataset.hpp"
#include "kinetrace/signal.hpp"

namespace kinetrace::preprocess {

using signal::BandId;

// Causal per-channel band filter; the recording keeps its length and the
// band id is recorded. EEG is delayed by the kernel's group delay.
inline SubjectRecording band_filter(const SubjectRecording& r, BandId id, std::optional<std::size_t> num_taps = std::nullopt) {
  const auto kernel = signal::design_band(signal::band(id), r.rate_hz, num_taps);
  SubjectRecording out = r;
  for (std::size_t n = 0; n < r.n_channels(); ++n) {
    const auto y = signal::apply_fir(r.eeg.row(n), kernel);
    std::copy(y.begin(), y.end(), out.eeg.row(n).begin());
  }
  out.band = signal::to_string(id);
  return out;
}

inline SubjectRecording rereference(const SubjectRecording& r) {
  std::vector<signal::ChannelSeries> ch(r.n_channels());
  for (std::size_t n = 0; n < r.n_channels(); ++n) {
    const auto row = r.eeg.row(n);
    ch[n] = {{row.begin(), row.end()}, r.rate_hz};
  }
  const auto rr = signal::average_rereference(ch);
  SubjectRecording out = r;
  for (std::size_t n = 0; n < r.n_channels(); ++n) std::copy(rr[n].samples.begin(), rr[n].samples.end(), out.eeg.row(n).begin());
  return out;
}

// Lowpass-smooths the kinematics. Targets are not decoder inputs, so the
// kernel's group delay is removed. Both ends are padded by odd reflection
// about the edge sample so the first and last samples follow the local trend.
inline SubjectRecording smooth_kinematics(const SubjectRecording& r, double cutoff_hz,
                                          std::optional<std::size_t> num_taps = std::nullopt) {
  const std::size_t n = num_taps.value_or(signal::hamming_num_taps(r.rate_hz, 1.0));
  const auto kernel = signal::design_fir(signal::FilterKind::lowpass, 0.0, cutoff_hz, r.rate_hz, n);
  const std::size_t d = kernel.group_delay();
  SubjectRecording out = r;
  const std::size_t T = r.n_samples();
  if (T == 0) return out;
  for (std::size_t a = 0; a < 3; ++a) {
    const auto x = r.kinematics.row(a);
    std::vector<double> padded(T + 2 * d);
    for (std::size_t j = 1; j <= d; ++j) {
      padded[d - j] = 2.0 * x[0] - x[std::min(j, T - 1)];
      padded[d + T - 1 + j] = 2.0 * x[T - 1] - x[T - 1 - std::min(j, T - 1)];
    }
    std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(d));
    const auto y = signal::apply_fir(padded, kernel);
    auto dst = out.kinematics.row(a);
    for (std::size_t t = 0; t < T; ++t) dst[t] = y[t + 2 * d];
  }
  return out;
}

// Decimates EEG and kinematics together. When `antialias` is set the EEG is
// first lowpass-filtered at 0.4 x the new rate. Trial markers map to the
// retained samples that fall inside each trial.
inline SubjectRecording downsample(const SubjectRecording& r, std::size_t factor, bool antialias = true) {
  if (factor == 0) throw ArgumentError("downsample: factor must be >= 1");
  if (factor == 1) return r;
  const double new_rate = r.rate_hz / static_cast<double>(factor);
  std::optional<signal::FirKernel> aa;
  if (antialias)
    aa = signal::design_fir(signal::FilterKind::lowpass, 0.0, 0.4 * new_rate, r.rate_hz,
                            signal::hamming_num_taps(r.rate_hz, 0.1 * new_rate));
  const std::size_t S = (r.n_samples() + factor - 1) / factor;
  SubjectRecording out = r;
  out.rate_hz = new_rate;
  out.eeg = Matrix(r.n_channels(), S);
  out.kinematics = Matrix(3, S);
  for (std::size_t n = 0; n < r.n_channels(); ++n) {
    const auto row = r.eeg.row(n);
    signal::ChannelSeries x{{row.begin(), row.end()}, r.rate_hz};
    if (aa) x = signal::apply_fir(x, *aa);
    const auto d = signal::downsample(x, factor);
    std::copy(d.samples.begin(), d.samples.end(), out.eeg.row(n).begin());
  }
  for (std::size_t a = 0; a < 3; ++a) {
    const auto row = r.kinematics.row(a);
    const auto d = signal::downsample(signal::ChannelSeries{{row.begin(), row.end()}, r.rate_hz}, factor);
    std::copy(d.samples.begin(), d.samples.end(), out.kinematics.row(a).begin());
  }
  out.trials.clear();
  for (const auto& t : r.trials) {
    const std::size_t onset = (t.onset_sample + factor - 1) / factor;
    const std::size_t end = t.end_sample / factor;
    if (end > onset) out.trials.push_back({onset, end});
  }
  if (out.trials.size() != r.trials.size()) throw ValidationError("downsample: a trial became shorter than two samples");
  return out;
}

struct PreprocessConfig {
  std::vector<std::string> channels;  // empty keeps the recording's channels
  bool rereference = true;
  double kin_lowpass_hz = 2.0;        // 0 disables kinematics smoothing
  std::size_t downsample_factor = 1;
  std::optional<BandId> band;         // nullopt: no band filtering
  std::optional<std::size_t> num_taps;
};

inline SubjectRecording run(const SubjectRecording& input, const PreprocessConfig& cfg) {
  SubjectRecording r = cfg.channels.empty() ? input : select_channels(input, cfg.channels);
  if (cfg.rereference) r = rereference(r);
  if (cfg.kin_lowpass_hz > 0.0) r = smooth_kinematics(r, cfg.kin_lowpass_hz);
  if (cfg.downsample_factor > 1) r = downsample(r, cfg.downsample_factor);
  if (cfg.band) r = band_filter(r, *cfg.band, cfg.num_taps);
  return r;
}

// Per-channel EEG z-score and per-axis kinematics min-max parameters.
struct Normalization {
  std::vector<signal::ZScoreParams> eeg;
  std::array<signal::MinMaxParams, 3> kin{};
};

// A recording together with the trials that contribute to a fit.
struct TrialSelection {
  const SubjectRecording* recording;
  std::vector<std::size_t> trials;
};

// Fits on the pooled training trials: EEG over [onset - lag_far, end] of each
// trial, kinematics over [onset, end].
inline Normalization fit_normalization(const std::vector<TrialSelection>& training, const LagWindowSpec& spec) {
  if (training.empty()) throw ArgumentError("fit_normalization: no training data");
  const std::size_t N = training.front().recording->n_channels();
  const std::size_t far = spec.far_samples();
  std::vector<std::vector<double>> eeg(N);
  std::array<std::vector<double>, 3> kin;
  for (const auto& sel : training) {
    const auto& r = *sel.recording;
    if (r.n_channels() != N) throw ShapeError("fit_normalization: recordings differ in channel count");
    for (std::size_t i : sel.trials) {
      const auto& tr = r.trials.at(i);
      const std::size_t first = tr.onset_sample >= far ? tr.onset_sample - far : 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = first; t <= tr.end_sample; ++t) eeg[n].push_back(r.eeg(n, t));
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t t = tr.onset_sample; t <= tr.end_sample; ++t) kin[a].push_back(r.kinematics(a, t));
    }
  }
  Normalization norm;
  for (std::size_t n = 0; n < N; ++n) norm.eeg.push_back(signal::fit_zscore(eeg[n]));
  for (std::size_t a = 0; a < 3; ++a) norm.kin[a] = signal::fit_minmax(kin[a]);
  return norm;
}

inline SubjectRecording apply_normalization(const SubjectRecording& r, const Normalization& norm) {
  if (norm.eeg.size() != r.n_channels()) throw ShapeError("apply_normalization: channel count mismatch");
  SubjectRecording out = r;
  for (std::size_t n = 0; n < r.n_channels(); ++n) {
    const auto z = signal::apply_zscore(r.eeg.row(n), norm.eeg[n]);
    std::copy(z.begin(), z.end(), out.eeg.row(n).begin());
  }
  for (std::size_t a = 0; a < 3; ++a) {
    const auto m = signal::apply_minmax(r.kinematics.row(a), norm.kin[a]);
    std::copy(m.begin(), m.end(), out.kinematics.row(a).begin());
  }
  return out;
}

}  // namespace kinetrace::preprocess
