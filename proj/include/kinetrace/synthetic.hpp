#pragma once

// Synthetic subjects with a known EEG -> kinematics mapping, used to verify
// the decoders end to end.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kinetrace/dataset.hpp"
#include "kinetrace/matrix.hpp"
#include "kinetrace/rng.hpp"
#include "kinetrace/signal.hpp"

namespace kinetrace::synth {

enum class Mapping { linear, nonlinear };

inline std::string_view to_string(Mapping m) { return m == Mapping::linear ? "linear" : "nonlinear"; }

inline Mapping parse_mapping(std::string_view s) {
  if (s == "linear") return Mapping::linear;
  if (s == "nonlinear") return Mapping::nonlinear;
  throw ArgumentError("unknown mapping '" + std::string(s) + "' (expected linear|nonlinear)");
}

struct SyntheticConfig {
  std::string subject_id = "SYN01";
  std::size_t n_channels = 21;
  std::size_t n_trials = 10;
  double rate_hz = 100.0;
  std::size_t trial_samples = 160;  // movement segment per trial
  std::size_t rest_samples = 40;    // rest before each movement onset
  Mapping mapping = Mapping::linear;
  double noise_std = 0.01;
  std::uint64_t seed = 1;
  double lag_ms = 150.0;          // ground-truth window is [lag_ms, 0]
  double eeg_cutoff_hz = 30.0;    // EEG is lowpass-filtered white noise
  double nonlinear_gain = 1.5;    // slope of the tanh squashing
  double nonlinear_even = 1.5;    // weight of the even (squared) component
};

// Exact mapping used by the generator. For a lag-feature row f (layout of
// build_lag_features with `spec`):
//   linear:    k_d = offset_d + scale_d * (u_d)
//   nonlinear: k_d = offset_d + scale_d * (tanh(g u_d) + e tanh(g v_d)^2)
// with u_d = <primary_d, f>, v_d = <secondary_d, f>; noise is added on top.
struct GroundTruth {
  Mapping mapping = Mapping::linear;
  LagWindowSpec spec;
  Matrix primary;    // 3 x (L*N)
  Matrix secondary;  // 3 x (L*N), nonlinear only
  double gain = 1.0;
  double even = 0.0;
  std::vector<double> scale = std::vector<double>(3, 1.0);
  std::vector<double> offset = std::vector<double>(3, 0.0);

  double latent(std::size_t d, std::span<const double> f) const {
    double u = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) u += primary(d, j) * f[j];
    if (mapping == Mapping::linear) return u;
    double v = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) v += secondary(d, j) * f[j];
    const double sv = std::tanh(gain * v);
    return std::tanh(gain * u) + even * sv * sv;
  }

  double evaluate(std::size_t d, std::span<const double> f) const { return offset[d] + scale[d] * latent(d, f); }
};

inline void validate(const SyntheticConfig& c) {
  if (c.n_channels == 0 || c.n_trials == 0 || c.trial_samples < 2)
    throw ArgumentError("synthetic: n_channels, n_trials must be positive and trial_samples >= 2");
  if (!(c.rate_hz > 0.0)) throw ArgumentError("synthetic: rate_hz must be positive");
  if (!(c.noise_std >= 0.0)) throw ArgumentError("synthetic: noise_std must be >= 0");
  if (!(c.eeg_cutoff_hz > 0.0 && c.eeg_cutoff_hz < c.rate_hz / 2.0))
    throw ArgumentError("synthetic: eeg_cutoff_hz must lie in (0, rate/2)");
  LagWindowSpec{c.lag_ms, 0.0, c.rate_hz}.validate();
  if (c.rest_samples < LagWindowSpec{c.lag_ms, 0.0, c.rate_hz}.far_samples())
    throw ArgumentError("synthetic: rest_samples must cover the lag window");
}

inline std::pair<SubjectRecording, GroundTruth> generate_synthetic_subject(const SyntheticConfig& c) {
  validate(c);
  const LagWindowSpec spec{c.lag_ms, 0.0, c.rate_hz};
  const std::size_t far = spec.far_samples();
  const std::size_t L = spec.length();
  const std::size_t N = c.n_channels;
  const std::size_t P = L * N;
  const std::size_t S = c.n_trials * (c.rest_samples + c.trial_samples);

  Rng rng(c.seed);
  const auto lowpass = signal::design_fir(signal::FilterKind::lowpass, 0.0, c.eeg_cutoff_hz, c.rate_hz, 31);
  const std::size_t warm = lowpass.taps.size() + far;

  // EEG: white noise -> lowpass -> unit variance -> float32 grid. The first
  // `far` samples of `full` are history that precedes the stored recording.
  Matrix full(N, S + far);
  for (std::size_t n = 0; n < N; ++n) {
    std::vector<double> white(S + warm);
    for (double& v : white) v = rng.normal();
    auto filtered = signal::apply_fir(std::span<const double>(white), lowpass);
    std::vector<double> kept(filtered.begin() + static_cast<std::ptrdiff_t>(lowpass.taps.size()), filtered.end());
    const auto z = signal::fit_zscore(kept);
    for (std::size_t t = 0; t < S + far; ++t) full(n, t) = static_cast<float>((kept[t] - z.mean) / z.std);
  }

  GroundTruth gt;
  gt.mapping = c.mapping;
  gt.spec = spec;
  gt.gain = c.nonlinear_gain;
  gt.even = c.mapping == Mapping::nonlinear ? c.nonlinear_even : 0.0;
  auto random_projection = [&](Matrix& m) {
    m = Matrix(3, P);
    for (double& v : m.data()) v = rng.normal();
  };
  random_projection(gt.primary);
  if (c.mapping == Mapping::nonlinear) random_projection(gt.secondary);

  auto feature_row = [&](std::size_t t, std::vector<double>& f) {
    // t indexes the stored recording; full is offset by `far`.
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < L; ++j) f[n * L + j] = full(n, t + j);
  };

  // Scale projections so each latent has unit variance over the recording.
  std::vector<double> f(P);
  auto normalize_projection = [&](Matrix& m) {
    for (std::size_t d = 0; d < 3; ++d) {
      std::vector<double> u(S);
      for (std::size_t t = 0; t < S; ++t) {
        feature_row(t, f);
        double acc = 0.0;
        for (std::size_t j = 0; j < P; ++j) acc += m(d, j) * f[j];
        u[t] = acc;
      }
      const auto z = signal::fit_zscore(u);
      for (std::size_t j = 0; j < P; ++j) m(d, j) /= z.std;
    }
  };
  normalize_projection(gt.primary);
  if (c.mapping == Mapping::nonlinear) normalize_projection(gt.secondary);

  Matrix latent(3, S);
  for (std::size_t t = 0; t < S; ++t) {
    feature_row(t, f);
    for (std::size_t d = 0; d < 3; ++d) latent(d, t) = gt.latent(d, f);
  }
  for (std::size_t d = 0; d < 3; ++d) {
    const auto z = signal::fit_zscore(latent.row(d));
    gt.scale[d] = 1.0 / z.std;
    gt.offset[d] = -z.mean / z.std;
  }

  SubjectRecording r;
  r.subject_id = c.subject_id;
  r.rate_hz = c.rate_hz;
  r.channel_names.reserve(N);
  const auto& names = default_channels();
  for (std::size_t n = 0; n < N; ++n) r.channel_names.push_back(n < names.size() ? names[n] : "X" + std::to_string(n + 1));
  r.eeg = Matrix(N, S);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < S; ++t) r.eeg(n, t) = full(n, t + far);
  r.kinematics = Matrix(3, S);
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t t = 0; t < S; ++t)
      r.kinematics(d, t) = static_cast<float>(gt.offset[d] + gt.scale[d] * latent(d, t) + c.noise_std * rng.normal());
  for (std::size_t i = 0; i < c.n_trials; ++i) {
    const std::size_t onset = i * (c.rest_samples + c.trial_samples) + c.rest_samples;
    r.trials.push_back({onset, onset + c.trial_samples - 1});
  }
  return {std::move(r), std::move(gt)};
}

}  // namespace kinetrace::synth
