#pragma once

// Subject recordings, lag-window feature assembly and trial splitting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kinetrace/errors.hpp"
#include "kinetrace/matrix.hpp"
#include "kinetrace/rng.hpp"

namespace kinetrace {

// Movement segment of one trial; both ends are sample indices and inclusive.
struct TrialMarker {
  std::size_t onset_sample = 0;
  std::size_t end_sample = 0;

  std::size_t length() const noexcept { return end_sample - onset_sample + 1; }
  friend bool operator==(const TrialMarker&, const TrialMarker&) = default;
};

struct SubjectRecording {
  std::string subject_id;
  std::vector<std::string> channel_names;
  Matrix eeg;         // channels x samples
  Matrix kinematics;  // 3 x samples (x, y, z)
  double rate_hz = 0.0;
  std::vector<TrialMarker> trials;
  std::optional<std::string> band;  // set once band-filtered

  std::size_t n_channels() const noexcept { return eeg.rows(); }
  std::size_t n_samples() const noexcept { return eeg.cols(); }

  friend bool operator==(const SubjectRecording&, const SubjectRecording&) = default;
};

// Throws ValidationError naming the first violated invariant.
inline void validate(const SubjectRecording& r) {
  if (!(r.rate_hz > 0.0)) throw ValidationError("rate_hz must be positive");
  if (r.channel_names.size() != r.eeg.rows())
    throw ValidationError("channel_names has " + std::to_string(r.channel_names.size()) + " entries but eeg has " +
                          std::to_string(r.eeg.rows()) + " rows");
  if (r.kinematics.rows() != 3) throw ValidationError("kinematics must have exactly 3 rows");
  if (r.kinematics.cols() != r.eeg.cols())
    throw ValidationError("eeg and kinematics sample counts differ");
  std::set<std::string> seen;
  for (const auto& n : r.channel_names)
    if (!seen.insert(n).second) throw ValidationError("duplicate channel name '" + n + "'");
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    const auto& t = r.trials[i];
    if (t.onset_sample >= t.end_sample)
      throw ValidationError("trial " + std::to_string(i) + ": onset_sample must precede end_sample");
    if (t.end_sample >= r.n_samples())
      throw ValidationError("trial " + std::to_string(i) + ": end_sample beyond recording");
    if (i > 0 && t.onset_sample <= r.trials[i - 1].end_sample)
      throw ValidationError("trial " + std::to_string(i) + ": overlaps or precedes trial " + std::to_string(i - 1));
  }
}

inline const std::vector<std::string>& default_channels() {
  static const std::vector<std::string> names{"F3",  "Fz",  "F4",  "FC5", "FC1", "FC2", "FC6",
                                              "C3",  "Cz",  "C4",  "CP5", "CP1", "CP2", "CP6",
                                              "P7",  "P3",  "Pz",  "P4",  "O1",  "Oz",  "O2"};
  return names;
}

inline SubjectRecording select_channels(const SubjectRecording& r, const std::vector<std::string>& names) {
  SubjectRecording out = r;
  out.channel_names = names;
  out.eeg = Matrix(names.size(), r.n_samples());
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = std::find(r.channel_names.begin(), r.channel_names.end(), names[i]);
    if (it == r.channel_names.end()) throw ChannelError("channel '" + names[i] + "' not in recording");
    const auto src = r.eeg.row(static_cast<std::size_t>(it - r.channel_names.begin()));
    std::copy(src.begin(), src.end(), out.eeg.row(i).begin());
  }
  return out;
}

// Window of past EEG [t - lag_far, t - lag_near] feeding kinematic sample t.
struct LagWindowSpec {
  double lag_far_ms = 0.0;
  double lag_near_ms = 0.0;
  double rate_hz = 100.0;

  std::size_t far_samples() const { return to_samples(lag_far_ms); }
  std::size_t near_samples() const { return to_samples(lag_near_ms); }
  // Lags per channel (L).
  std::size_t length() const { return far_samples() - near_samples() + 1; }
  double window_ms() const noexcept { return lag_far_ms - lag_near_ms; }

  void validate() const {
    if (!(rate_hz > 0.0)) throw ArgumentError("lag spec: rate_hz must be positive");
    if (!(lag_near_ms >= 0.0)) throw ArgumentError("lag spec: lag_near_ms must be >= 0");
    if (!(lag_far_ms > 0.0)) throw ArgumentError("lag spec: lag_far_ms must be positive");
    // far == near is a single-sample window (L = 1).
    if (!(lag_far_ms >= lag_near_ms)) throw ArgumentError("lag spec: lag_far_ms must not be below lag_near_ms");
    (void)far_samples();
    (void)near_samples();
  }

  friend bool operator==(const LagWindowSpec&, const LagWindowSpec&) = default;

 private:
  std::size_t to_samples(double ms) const {
    const double s = ms * rate_hz / 1000.0;
    const double r = std::round(s);
    if (std::abs(s - r) > 1e-9 || r < 0.0)
      throw ArgumentError("lag spec: " + std::to_string(ms) + " ms is not on the sample grid at " +
                          std::to_string(rate_hz) + " Hz");
    return static_cast<std::size_t>(r);
  }
};

// Feature row t: for channel n (outer) and lag l = far..near (inner), EEG[n][t-l].
// Column index = n * L + j where lag = far - j.
inline std::pair<Matrix, Matrix> build_lag_features(const SubjectRecording& r, const TrialMarker& trial,
                                                    const LagWindowSpec& spec) {
  spec.validate();
  if (std::abs(spec.rate_hz - r.rate_hz) > 1e-9)
    throw ArgumentError("lag spec rate does not match recording rate");
  const std::size_t far = spec.far_samples();
  const std::size_t L = spec.length();
  const std::size_t N = r.n_channels();
  if (trial.onset_sample < far)
    throw HistoryError("trial at sample " + std::to_string(trial.onset_sample) + " has fewer than " +
                       std::to_string(far) + " samples of EEG history");
  if (trial.end_sample >= r.n_samples() || trial.end_sample < trial.onset_sample)
    throw ArgumentError("trial marker outside recording");
  const std::size_t D = trial.length();
  Matrix X(D, L * N);
  Matrix Y(D, 3);
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t t = trial.onset_sample + d;
    const std::size_t first = t - far;
    auto row = X.row(d);
    for (std::size_t n = 0; n < N; ++n) {
      const auto ch = r.eeg.row(n);
      std::copy_n(ch.begin() + static_cast<std::ptrdiff_t>(first), L, row.begin() + static_cast<std::ptrdiff_t>(n * L));
    }
    for (std::size_t a = 0; a < 3; ++a) Y(d, a) = r.kinematics(a, t);
  }
  return {std::move(X), std::move(Y)};
}

// Stacks the lag features of several trials (in the given order).
inline std::pair<Matrix, Matrix> build_lag_features(const SubjectRecording& r, const std::vector<std::size_t>& trial_indices,
                                                    const LagWindowSpec& spec) {
  Matrix X, Y;
  for (std::size_t i : trial_indices) {
    if (i >= r.trials.size()) throw ArgumentError("trial index out of range");
    auto [x, y] = build_lag_features(r, r.trials[i], spec);
    X.append_rows(x);
    Y.append_rows(y);
  }
  return {std::move(X), std::move(Y)};
}

struct SplitPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

namespace detail {

inline std::size_t proportional_count(std::size_t n, std::size_t part, std::size_t whole) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * static_cast<double>(part) / static_cast<double>(whole) + 0.5));
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

}  // namespace detail

// 234/30/30 of 294 trials. Other counts scale: val and test are n*30/294
// rounded half-up (at least one each when n >= 3), train takes the rest.
inline SplitPlan split_subject_dependent(std::size_t trial_count, std::uint64_t seed) {
  if (trial_count < 3) throw ArgumentError("split_subject_dependent: need at least 3 trials");
  std::size_t held = std::max<std::size_t>(1, detail::proportional_count(trial_count, 30, 294));
  const auto idx = detail::shuffled_indices(trial_count, seed);
  SplitPlan plan;
  plan.seed = seed;
  const std::size_t n_train = trial_count - 2 * held;
  plan.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  plan.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.begin() + static_cast<std::ptrdiff_t>(n_train + held));
  plan.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + held), idx.end());
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.val.begin(), plan.val.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

struct SubjectTrials {
  std::string subject_id;
  std::size_t trial_count = 0;
};

struct LosoFold {
  std::string test_subject;
  std::size_t test_trial_count = 0;
  // Per training subject: train and val trial indices (test is empty).
  std::map<std::string, SplitPlan> train_subjects;
};

// 264 train + 30 val per remaining subject (294-trial subjects; other counts
// scale the 30 as in split_subject_dependent); every trial of the held-out
// subject is test.
inline LosoFold split_loso(const std::vector<SubjectTrials>& subjects, const std::string& held_out_id, std::uint64_t seed) {
  const auto it = std::find_if(subjects.begin(), subjects.end(),
                               [&](const SubjectTrials& s) { return s.subject_id == held_out_id; });
  if (it == subjects.end()) throw ArgumentError("split_loso: unknown subject '" + held_out_id + "'");
  if (subjects.size() < 2) throw ArgumentError("split_loso: need at least two subjects");
  LosoFold fold;
  fold.test_subject = held_out_id;
  fold.test_trial_count = it->trial_count;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& sub = subjects[s];
    if (sub.subject_id == held_out_id) continue;
    if (sub.trial_count < 2) throw ArgumentError("split_loso: subject '" + sub.subject_id + "' has fewer than 2 trials");
    const std::size_t n_val = std::max<std::size_t>(1, detail::proportional_count(sub.trial_count, 30, 294));
    const std::uint64_t sub_seed = derive_seed(seed, s);
    const auto idx = detail::shuffled_indices(sub.trial_count, sub_seed);
    SplitPlan plan;
    plan.seed = sub_seed;
    const std::size_t n_train = sub.trial_count - n_val;
    plan.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    plan.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.val.begin(), plan.val.end());
    fold.train_subjects.emplace(sub.subject_id, std::move(plan));
  }
  return fold;
}

}  // namespace kinetrace
