#pragma once

// End-to-end experiments: preprocess -> split -> normalize (training trials
// only) -> lag features -> fit/train -> evaluate on held-out trials.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kinetrace/dataset.hpp"
#include "kinetrace/decoders/mlr.hpp"
#include "kinetrace/decoders/model_file.hpp"
#include "kinetrace/decoders/networks.hpp"
#include "kinetrace/decoders/train.hpp"
#include "kinetrace/eval.hpp"
#include "kinetrace/preprocess.hpp"
#include "kinetrace/rng.hpp"

namespace kinetrace::pipeline {

struct ExperimentConfig {
  preprocess::PreprocessConfig preprocessing;
  double lag_far_ms = 250.0;
  double lag_near_ms = 0.0;
  decoders::DecoderKind decoder = decoders::DecoderKind::mlr;
  decoders::TrainConfig training;
  std::uint64_t seed = 1;
  bool per_trial_pcc = false;
};

struct ExperimentResult {
  decoders::TrainedModel model;
  std::optional<decoders::TrainReport> report;  // neural decoders only
  eval::PccReport test;
  std::vector<std::size_t> test_trials;         // test trial indices (subject-dependent)
};

namespace detail {

struct Partition {
  Matrix X, Y;
  std::vector<std::size_t> rows_per_trial;
  void add(const SubjectRecording& r, const std::vector<std::size_t>& trials, const LagWindowSpec& spec) {
    for (std::size_t i : trials) {
      auto [x, y] = build_lag_features(r, r.trials.at(i), spec);
      rows_per_trial.push_back(x.rows());
      X.append_rows(x);
      Y.append_rows(y);
    }
  }
};

inline ExperimentResult fit_and_score(const ExperimentConfig& cfg, const LagWindowSpec& spec,
                                      const std::vector<std::string>& channels, const preprocess::Normalization& norm,
                                      const Partition& train, const Partition& val, const Partition& test) {
  ExperimentResult res;
  res.model.header.kind = cfg.decoder;
  res.model.header.spec = spec;
  res.model.header.channel_names = channels;
  res.model.header.preprocessing = cfg.preprocessing;
  res.model.header.preprocessing.channels = channels;
  res.model.header.normalization = norm;
  if (cfg.decoder == decoders::DecoderKind::mlr) {
    res.model.model = decoders::fit_mlr(train.X, train.Y);
  } else {
    auto net = decoders::build_network(cfg.decoder, spec.length(), channels.size(), derive_seed(cfg.seed, 11));
    decoders::TrainConfig tc = cfg.training;
    tc.seed = derive_seed(cfg.seed, 12);
    res.report = decoders::train(net, train.X, train.Y, val.X, val.Y, tc);
    res.model.model = std::move(net);
  }
  const Matrix pred = res.model.predict(test.X);
  res.test = cfg.per_trial_pcc ? eval::evaluate_per_trial(test.Y, pred, test.rows_per_trial) : eval::evaluate(test.Y, pred);
  return res;
}

}  // namespace detail

inline LagWindowSpec lag_spec_for(const ExperimentConfig& cfg, double rate_hz) {
  LagWindowSpec s{cfg.lag_far_ms, cfg.lag_near_ms, rate_hz};
  s.validate();
  return s;
}

inline ExperimentResult run_subject_dependent(const SubjectRecording& raw, const ExperimentConfig& cfg) {
  const SubjectRecording prep = preprocess::run(raw, cfg.preprocessing);
  const LagWindowSpec spec = lag_spec_for(cfg, prep.rate_hz);
  const SplitPlan plan = split_subject_dependent(prep.trials.size(), derive_seed(cfg.seed, 1));
  const auto norm = preprocess::fit_normalization({{&prep, plan.train}}, spec);
  const SubjectRecording rec = preprocess::apply_normalization(prep, norm);
  detail::Partition train, val, test;
  train.add(rec, plan.train, spec);
  val.add(rec, plan.val, spec);
  test.add(rec, plan.test, spec);
  auto res = detail::fit_and_score(cfg, spec, rec.channel_names, norm, train, val, test);
  res.test_trials = plan.test;
  return res;
}

inline ExperimentResult run_loso_fold(const std::vector<SubjectRecording>& raws, const std::string& held_out,
                                      const ExperimentConfig& cfg) {
  std::vector<SubjectRecording> prepped;
  std::vector<SubjectTrials> counts;
  for (const auto& r : raws) {
    prepped.push_back(preprocess::run(r, cfg.preprocessing));
    counts.push_back({r.subject_id, prepped.back().trials.size()});
  }
  const LagWindowSpec spec = lag_spec_for(cfg, prepped.front().rate_hz);
  for (const auto& p : prepped) {
    if (std::abs(p.rate_hz - spec.rate_hz) > 1e-9) throw ValidationError("loso: subjects differ in sampling rate");
    if (p.channel_names != prepped.front().channel_names) throw ValidationError("loso: subjects differ in channel layout");
  }
  const LosoFold fold = split_loso(counts, held_out, derive_seed(cfg.seed, 2));
  std::vector<preprocess::TrialSelection> training;
  for (const auto& p : prepped)
    if (auto it = fold.train_subjects.find(p.subject_id); it != fold.train_subjects.end())
      training.push_back({&p, it->second.train});
  const auto norm = preprocess::fit_normalization(training, spec);
  detail::Partition train, val, test;
  for (const auto& p : prepped) {
    const SubjectRecording rec = preprocess::apply_normalization(p, norm);
    if (p.subject_id == held_out) {
      std::vector<std::size_t> all(rec.trials.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      test.add(rec, all, spec);
    } else {
      const auto& plan = fold.train_subjects.at(p.subject_id);
      train.add(rec, plan.train, spec);
      val.add(rec, plan.val, spec);
    }
  }
  return detail::fit_and_score(cfg, spec, prepped.front().channel_names, norm, train, val, test);
}

}  // namespace kinetrace::pipeline
