// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// gating criterion fails. The full-dataset check runs only when
// KINETRACE_WAYEEGGAL_DIR points at converted subject directories and never
// gates.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "kinetrace/kinetrace.hpp"
#include "support/dtft.hpp"
#include "support/gradcheck.hpp"
#include "support/mlr_oracle.hpp"

using namespace kinetrace;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) { return eval::format_g(v, digits); }

std::string hash_parameters(nn::Sequential& net) {
  std::vector<unsigned char> bytes;
  for (nn::Parameter* p : net.parameters())
    for (double v : p->value.values()) {
      const auto* b = reinterpret_cast<const unsigned char*>(&v);
      bytes.insert(bytes.end(), b, b + sizeof v);
    }
  return io::sha256_hex(bytes);
}

std::string pcc_text(const eval::PccReport& r) {
  std::string s;
  for (std::size_t d = 0; d < 3; ++d)
    s += std::string(d ? " " : "") + eval::kDirections[d] + "=" + (r.pcc[d] ? fmt(*r.pcc[d]) : "undefined");
  return s;
}

double min_pcc(const eval::PccReport& r) {
  double m = 1.0;
  for (const auto& v : r.pcc) m = std::min(m, v ? *v : -2.0);
  return m;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  using nn::Shape;
  using nn::Tensor;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  auto note = [&](const std::string& layer, const gradcheck::Result& r) {
    ++checks;
    if (r.max_rel_error > worst || worst_name.empty()) {
      worst = r.max_rel_error;
      worst_name = layer + "/" + r.worst;
    }
  };
  auto rt = [&](const Shape& s) { return gradcheck::random_tensor(s, rng); };

  for (const auto& [B, I, O] : std::vector<std::array<std::size_t, 3>>{{2, 3, 2}, {1, 5, 4}, {4, 7, 3}, {3, 1, 6}, {6, 10, 10}}) {
    nn::Dense d(I, O, rng.next_u64());
    note("dense", gradcheck::check(d, rt({B, I}), rng.next_u64()));
  }
  for (const auto& [B, C, F, K, L] :
       std::vector<std::array<std::size_t, 5>>{{2, 2, 3, 3, 8}, {1, 1, 1, 1, 4}, {3, 4, 2, 5, 6}, {2, 3, 4, 7, 5}, {1, 5, 3, 3, 11}}) {
    nn::Conv1dSame c(C, F, K, rng.next_u64());
    note("conv1d", gradcheck::check(c, rt({B, C, L}), rng.next_u64()));
  }
  for (const auto& [B, C, L, W] : std::vector<std::array<std::size_t, 4>>{{2, 3, 10, 5}, {1, 1, 7, 3}, {3, 2, 9, 3}, {2, 4, 35, 5}, {1, 2, 4, 1}}) {
    nn::MaxPool1d p(W);
    note("maxpool", gradcheck::check(p, rt({B, C, L}), rng.next_u64()));
  }
  for (const Shape& s : std::vector<Shape>{{4, 3}, {2, 1}, {8, 5}, {3, 2, 4}, {5, 3, 2}}) {
    nn::BatchNorm bn(s[1]);
    for (double& v : bn.gamma().value.values()) v = rng.uniform(0.5, 2.0);
    note("batchnorm", gradcheck::check(bn, rt(s), rng.next_u64()));
  }
  for (const Shape& s : std::vector<Shape>{{2, 3}, {4, 5}, {1, 8}, {3, 2, 4}, {2, 6, 3}}) {
    nn::Dropout d(0.25, 1);
    const std::uint64_t mask_seed = rng.next_u64();
    note("dropout", gradcheck::check(d, rt(s), rng.next_u64(), nn::Mode::train, [&] { d.reseed(mask_seed); }));
  }
  for (auto act : {nn::LstmActivation::relu, nn::LstmActivation::tanh})
    for (const auto& [B, T, I, H] : std::vector<std::array<std::size_t, 4>>{{2, 4, 3, 5}, {1, 1, 2, 3}, {3, 6, 2, 4}, {2, 3, 5, 2}, {1, 8, 3, 3}}) {
      nn::Lstm l(I, H, act, rng.next_u64());
      note("lstm", gradcheck::check(l, rt({B, T, I}), rng.next_u64()));
    }
  for (const Shape& s : std::vector<Shape>{{2, 3}, {5, 3}, {1, 3}, {8, 3}, {4, 2}}) {
    Tensor p = rt(s);
    const Tensor t = rt(s);
    const auto res = nn::mse_loss(p, t);
    std::vector<double> num(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double v = p[i];
      p[i] = v + 1e-5;
      const double fp = nn::mse_loss(p, t).value;
      p[i] = v - 1e-5;
      const double fm = nn::mse_loss(p, t).value;
      p[i] = v;
      num[i] = (fp - fm) / 2e-5;
    }
    note("mse", gradcheck::Result{gradcheck::rel_error(res.grad.values(), num), "prediction"});
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          std::to_string(checks) + " checks, max rel error " + fmt(worst, 3) + " (" + worst_name + "), " + fmt(secs, 3) + " s"};
}

Outcome linear_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SyntheticConfig s;  // 21 channels, 10 x (40 rest + 160 movement) = 2000 samples
  s.mapping = synth::Mapping::linear;
  s.noise_std = 0.01;
  s.lag_ms = 150;
  const auto [rec, truth] = synth::generate_synthetic_subject(s);
  if (rec.n_channels() != 21 || rec.n_samples() != 2000) return {false, "unexpected synthetic size"};

  pipeline::ExperimentConfig cfg;
  cfg.preprocessing.rereference = false;
  cfg.preprocessing.kin_lowpass_hz = 0.0;
  cfg.lag_far_ms = s.lag_ms;
  cfg.decoder = decoders::DecoderKind::mlr;
  const auto result = pipeline::run_subject_dependent(rec, cfg);

  const auto plan = split_subject_dependent(rec.trials.size(), derive_seed(cfg.seed, 1));
  const auto [X, Y] = build_lag_features(rec, plan.train, truth.spec);
  const auto model = decoders::fit_mlr(X, Y);
  const Eigen::MatrixXd theta = mlr_oracle::solve(X, Y);
  double coef_err = 0.0;
  for (std::size_t d = 0; d < 3; ++d) {
    coef_err = std::max(coef_err, std::abs(model.alpha[d] - theta(0, d)));
    for (std::size_t j = 0; j < X.cols(); ++j) coef_err = std::max(coef_err, std::abs(model.beta(d, j) - theta(j + 1, d)));
  }
  const double secs = seconds_since(t0);
  return {min_pcc(result.test) >= 0.99 && coef_err <= 1e-6 && secs < 30.0,
          "held-out PCC " + pcc_text(result.test) + ", max |coef - oracle| " + fmt(coef_err, 3) + ", " + fmt(secs, 3) + " s"};
}

Outcome nonlinear_learning() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SyntheticConfig s;
  s.mapping = synth::Mapping::nonlinear;
  s.n_channels = 6;
  s.lag_ms = 100;
  s.n_trials = 80;
  s.trial_samples = 100;
  s.rest_samples = 10;
  s.noise_std = 0.01;
  s.seed = 1;
  const auto [rec, truth] = synth::generate_synthetic_subject(s);

  pipeline::ExperimentConfig cfg;
  cfg.preprocessing.rereference = false;
  cfg.preprocessing.kin_lowpass_hz = 0.0;
  cfg.lag_far_ms = s.lag_ms;
  cfg.decoder = decoders::DecoderKind::mlp;
  const auto mlp = pipeline::run_subject_dependent(rec, cfg);
  cfg.decoder = decoders::DecoderKind::mlr;
  const auto mlr = pipeline::run_subject_dependent(rec, cfg);

  double gap = -2.0;
  for (std::size_t d = 0; d < 3; ++d)
    if (mlp.test.pcc[d] && mlr.test.pcc[d]) gap = std::max(gap, *mlp.test.pcc[d] - *mlr.test.pcc[d]);
  const double secs = seconds_since(t0);
  return {min_pcc(mlp.test) >= 0.8 && gap >= 0.1 && secs < 600.0,
          "MLP " + pcc_text(mlp.test) + " (stopped at epoch " + std::to_string(mlp.report->stopped_epoch) + "); mLR " +
              pcc_text(mlr.test) + "; largest gap " + fmt(gap, 3) + ", " + fmt(secs, 3) + " s"};
}

Outcome cnn_lstm_shapes() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t N = 21;
  std::size_t cells = 0;
  std::string failures;
  Rng rng(5);
  for (int window = 100; window <= 300; window += 50)
    for (int far = window + 50; far <= 350; far += 50) {
      const LagWindowSpec spec{static_cast<double>(far), static_cast<double>(far - window), 100.0};
      const std::size_t L = spec.length();
      const std::size_t oracle = (((L + 4) / 5) + 2) / 3;
      auto model = decoders::build_cnn_lstm(L, N, rng.next_u64());
      nn::Tensor x({4, L * N});
      for (double& v : x.values()) v = rng.normal();
      nn::Tensor h = x;
      std::size_t steps = 0;
      for (std::size_t i = 0; i < model.net.size(); ++i) {
        if (dynamic_cast<nn::Lstm*>(&model.net.layer(i))) steps = h.shape()[1];
        h = model.net.layer(i).forward(h, nn::Mode::train);
      }
      const auto loss = nn::mse_loss(h, nn::Tensor({4, 3}, 0.5));
      model.net.backward(loss.grad);
      bool finite = std::isfinite(loss.value);
      for (nn::Parameter* p : model.net.parameters())
        for (double g : p->grad.values()) finite = finite && std::isfinite(g);
      if (steps != oracle || steps != decoders::CnnLstmLayout::lstm_steps(L) || h.shape() != nn::Shape{4, 3} || !finite)
        failures += " " + std::to_string(window) + "/" + std::to_string(far) + "-" + std::to_string(far - window);
      ++cells;
    }
  const double secs = seconds_since(t0);
  return {cells == 15 && failures.empty() && secs < 60.0,
          std::to_string(cells) + " cells" + (failures.empty() ? "" : ", failing:" + failures) + ", " + fmt(secs, 3) + " s"};
}

Outcome early_stopping() {
  auto model = decoders::build_mlp(4, 3, 9);
  decoders::TrainConfig cfg;
  cfg.patience = 5;
  cfg.max_epochs = 20;
  const std::vector<double> losses{5, 4, 4, 4, 4, 4, 4, 3, 2, 1};
  std::vector<std::string> hashes;
  const auto report = decoders::run_training(
      model.net, cfg,
      [&](std::size_t epoch) {
        for (nn::Parameter* p : model.net.parameters()) p->value[0] += 0.5 * static_cast<double>(epoch);
        return 1.0;
      },
      [&](std::size_t epoch) { return losses.at(epoch - 1); },
      [&](std::size_t, nn::Sequential& net) { hashes.push_back(hash_parameters(net)); });
  const std::string final_hash = hash_parameters(model.net);
  const bool ok = report.stopped_epoch == 7 && report.best_epoch == 2 && hashes.size() == 7 && final_hash == hashes[1] &&
                  final_hash != hashes[6];
  return {ok, "stopped at epoch " + std::to_string(report.stopped_epoch) + ", best epoch " +
                  std::to_string(report.best_epoch) + ", restored hash " + (final_hash == hashes.at(1) ? "==" : "!=") +
                  " epoch-2 hash " + final_hash.substr(0, 12)};
}

Outcome pcc_suite() {
  Rng rng(7);
  auto series = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
  };
  double e_id = 0, e_neg = 0, e_aff = 0, e_sym = 0, e_formula = 0;
  bool t2 = true;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 3 + static_cast<std::size_t>(rep) * 13;
    const auto x = series(n), y = series(n);
    std::vector<double> neg(n), ax(n), cy(n);
    const double a = rng.uniform(0.1, 5) * (rep % 2 ? -1 : 1), b = rng.uniform(-50, 50);
    const double c = rng.uniform(0.1, 5), d = rng.uniform(-50, 50);
    for (std::size_t i = 0; i < n; ++i) {
      neg[i] = -x[i];
      ax[i] = a * x[i] + b;
      cy[i] = c * y[i] + d;
    }
    const double r = eval::pcc(x, y);
    e_id = std::max(e_id, std::abs(eval::pcc(x, x) - 1.0));
    e_neg = std::max(e_neg, std::abs(eval::pcc(x, neg) + 1.0));
    e_aff = std::max(e_aff, std::abs(eval::pcc(ax, cy) - (a > 0 ? r : -r)));
    e_sym = std::max(e_sym, std::abs(r - eval::pcc(y, x)));
    // Written out: z-scores with (T-1) standard deviations, summed over T-1.
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= n;
    my /= n;
    long double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += (x[i] - mx) * (x[i] - mx);
      sy += (y[i] - my) * (y[i] - my);
    }
    sx = std::sqrt(sx / (n - 1));
    sy = std::sqrt(sy / (n - 1));
    long double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += ((x[i] - mx) / sx) * ((y[i] - my) / sy);
    e_formula = std::max(e_formula, std::abs(r - static_cast<double>(acc / (n - 1))));
    t2 = t2 && std::abs(eval::pcc(series(2), series(2))) == 1.0;
  }
  const bool ok = e_id <= 1e-12 && e_neg <= 1e-12 && e_aff <= 1e-10 && e_sym <= 1e-12 && t2 && e_formula <= 1e-12;
  return {ok, "identity " + fmt(e_id, 2) + ", negation " + fmt(e_neg, 2) + ", affine " + fmt(e_aff, 2) + ", symmetry " +
                  fmt(e_sym, 2) + ", T=2 " + (t2 ? "extremal" : "NOT extremal") + ", formula " + fmt(e_formula, 2)};
}

Outcome filter_suite() {
  const double rate = 100.0, nyq = rate / 2.0;
  double worst_stop = -1e9, worst_ripple = 0.0;
  for (const auto& b : signal::kBands) {
    const auto k = signal::design_band(b, rate);
    const double centre = b.high_hz < nyq ? 0.5 * (b.low_hz + b.high_hz) : 0.5 * (b.low_hz + nyq);
    worst_ripple = std::max(worst_ripple, std::abs(dtft_db(k.taps, centre, rate)));
    worst_stop = std::max(worst_stop, dtft_db(k.taps, b.low_hz / 2.0, rate));
    if (2.0 * b.high_hz < nyq) worst_stop = std::max(worst_stop, dtft_db(k.taps, 2.0 * b.high_hz, rate));
  }

  // No lookahead: zeroing EEG after sample t - near changes no feature of row t,
  // with and without band filtering in front.
  synth::SyntheticConfig s;
  s.n_channels = 4;
  s.n_trials = 3;
  const auto [raw, truth] = synth::generate_synthetic_subject(s);
  const LagWindowSpec spec{150, 50, 100};
  bool causal = true;
  for (bool filtered : {false, true}) {
    const auto base = filtered ? preprocess::band_filter(raw, signal::BandId::FB4) : raw;
    const auto& trial = base.trials[1];
    const auto [X, Y] = build_lag_features(base, trial, spec);
    for (std::size_t row = 0; row < X.rows(); row += 9) {
      const std::size_t t = trial.onset_sample + row;
      auto m = raw;
      for (std::size_t n = 0; n < m.n_channels(); ++n)
        for (std::size_t j = t - spec.near_samples() + 1; j < m.n_samples(); ++j) m.eeg(n, j) = 1e6;
      const auto mb = filtered ? preprocess::band_filter(m, signal::BandId::FB4) : m;
      const auto [Xm, Ym] = build_lag_features(mb, mb.trials[1], spec);
      for (std::size_t c = 0; c < X.cols(); ++c) causal = causal && Xm(row, c) == X(row, c);
    }
  }
  return {worst_stop <= -40.0 && worst_ripple <= 1.0 && causal,
          "weakest stopband " + fmt(worst_stop) + " dB, largest centre deviation " + fmt(worst_ripple, 3) +
              " dB, no-lookahead " + (causal ? "holds" : "VIOLATED")};
}

Outcome loso_harness() {
  std::vector<SubjectRecording> subjects;
  std::vector<SubjectTrials> counts;
  for (int i = 1; i <= 3; ++i) {
    synth::SyntheticConfig s;
    s.subject_id = "SYN0" + std::to_string(i);
    s.seed = static_cast<std::uint64_t>(i);
    s.n_channels = 5;
    s.n_trials = 12;
    s.trial_samples = 80;
    subjects.push_back(synth::generate_synthetic_subject(s).first);
    counts.push_back({s.subject_id, subjects.back().trials.size()});
  }
  pipeline::ExperimentConfig cfg;
  cfg.preprocessing.rereference = false;
  cfg.preprocessing.kin_lowpass_hz = 0.0;
  cfg.lag_far_ms = 100;

  std::map<std::string, int> tested;
  bool disjoint = true, identical = true;
  for (const auto& held : counts) {
    const auto fold = split_loso(counts, held.subject_id, derive_seed(cfg.seed, 2));
    ++tested[fold.test_subject];
    if (fold.train_subjects.count(held.subject_id)) disjoint = false;
    for (const auto& [id, plan] : fold.train_subjects) {
      std::set<std::size_t> tr(plan.train.begin(), plan.train.end());
      for (std::size_t v : plan.val) disjoint = disjoint && !tr.count(v);
      disjoint = disjoint && plan.test.empty() && plan.train.size() + plan.val.size() == 12;
    }
    for (auto kind : {decoders::DecoderKind::mlr, decoders::DecoderKind::mlp}) {
      cfg.decoder = kind;
      cfg.training.max_epochs = 3;
      auto a = pipeline::run_loso_fold(subjects, held.subject_id, cfg);
      auto b = pipeline::run_loso_fold(subjects, held.subject_id, cfg);
      auto csv = [&](const pipeline::ExperimentResult& r) {
        eval::SweepCell c;
        c.subject = held.subject_id;
        c.mode = "loso";
        c.decoder = std::string(decoders::to_string(kind));
        c.report = r.test;
        return eval::sweep_csv(eval::build_sweep_report({c}));
      };
      identical = identical && decoders::serialize_model(a.model) == decoders::serialize_model(b.model) && csv(a) == csv(b) &&
                  a.test.samples == 12 * 80;
    }
  }
  bool once = tested.size() == 3;
  for (const auto& [id, n] : tested) once = once && n == 1;
  return {once && disjoint && identical, std::string("each subject tested once: ") + (once ? "yes" : "no") +
                                             ", partitions disjoint: " + (disjoint ? "yes" : "no") +
                                             ", reruns byte-identical: " + (identical ? "yes" : "no")};
}

// Returns nullopt when no converted dataset is configured.
std::optional<Outcome> full_dataset() {
  const char* dir = std::getenv("KINETRACE_WAYEEGGAL_DIR");
  if (!dir || !*dir) return std::nullopt;
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / io::kManifestName)) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) return Outcome{false, std::string("no subject directories under ") + dir};
  pipeline::ExperimentConfig cfg;
  cfg.preprocessing.band = signal::BandId::FB1;
  cfg.lag_far_ms = 250;
  cfg.decoder = decoders::DecoderKind::cnnlstm;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : paths) {
    const auto r = pipeline::run_subject_dependent(io::load_subject(p), cfg);
    if (r.test.pcc[0]) {
      sum += *r.test.pcc[0];
      ++n;
    }
  }
  const double mean = n ? sum / static_cast<double>(n) : std::nan("");
  return Outcome{std::abs(mean - 0.791) <= 0.10,
                 "mean x PCC " + fmt(mean) + " over " + std::to_string(n) + " subjects (reference 0.791 +/- 0.10)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"linear recovery", linear_recovery},
      {"nonlinear learning", nonlinear_learning},
      {"CNN-LSTM shape matrix", cnn_lstm_shapes},
      {"early-stopping contract", early_stopping},
      {"PCC metric suite", pcc_suite},
      {"filter suite", filter_suite},
      {"LOSO harness", loso_harness},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  try {
    if (const auto o = full_dataset())
      std::cout << (o->pass ? "PASS " : "FAIL ") << "full-dataset CNN-LSTM FB1 250 ms (non-gating): " << o->detail << std::endl;
    else
      std::cout << "SKIP full-dataset CNN-LSTM FB1 250 ms (non-gating): KINETRACE_WAYEEGGAL_DIR not set" << std::endl;
  } catch (const std::exception& e) {
    std::cout << "FAIL full-dataset CNN-LSTM FB1 250 ms (non-gating): exception: " << e.what() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
