// kinetrace command-line driver.
//
//   kinetrace validate DIR...              check interchange directories
//   kinetrace synth  --out DIR [...]       write a synthetic subject
//   kinetrace train  --data DIR --out DIR  fit one decoder, write model + reports
//   kinetrace sweep  --data DIR... --out DIR
//   kinetrace loso   --data DIR... --out DIR   (sweep with subject hold-out)
//   kinetrace export --model F --data DIR --trial K --out DIR
//
// Every option can also come from --config FILE (TOML/INI, same key names as
// the long flags) or from KINETRACE_<NAME> environment variables. Precedence:
// flag > environment > config file > default. Exit codes: 0 ok, 2 invalid
// input or configuration, 3 training divergence, 4 I/O failure.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kinetrace/kinetrace.hpp"

namespace fs = std::filesystem;
using namespace kinetrace;

namespace {

struct RunConfig {
  std::vector<std::string> data;
  std::vector<std::string> channels;
  std::vector<std::string> bands{"none"};
  std::vector<double> lag_ms{250.0};
  std::vector<double> window_ms;  // empty: window spans the whole lag (near edge 0 ms)
  std::vector<std::string> decoders{"mlr"};
  std::string out = "kinetrace_out";
  std::uint64_t seed = 1;
  std::size_t jobs = 0;
  bool per_trial = false;
  bool rereference = true;
  double kin_lowpass_hz = 2.0;
  std::size_t downsample = 1;
  std::size_t num_taps = 0;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 64;
  std::size_t patience = 5;
  double learning_rate = 1e-3;
  std::size_t max_cells = 0;
  // synth
  std::string subject_id = "SYN01";
  std::size_t n_channels = 21;
  std::size_t n_trials = 10;
  std::size_t trial_samples = 160;
  std::size_t rest_samples = 40;
  double rate_hz = 100.0;
  std::string mapping = "linear";
  double noise_std = 0.01;
  // export
  std::string model;
  std::size_t trial = 0;
};

struct LagPair {
  double far_ms, near_ms;
};

// Everything a single experiment needs, resolved and validated up front.
struct Resolved {
  std::vector<std::optional<signal::BandId>> bands;
  std::vector<LagPair> lags;
  std::vector<decoders::DecoderKind> decoders;
  pipeline::ExperimentConfig base;
};

std::string env_name(const std::string& flag) {
  std::string s = "KINETRACE_";
  for (char c : flag) s += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::optional<signal::BandId> parse_band_or_none(const std::string& s) {
  if (s == "none") return std::nullopt;
  return signal::parse_band(s);
}

std::string band_name(const std::optional<signal::BandId>& b) { return b ? std::string(signal::to_string(*b)) : "none"; }

Resolved resolve(const RunConfig& c) {
  Resolved r;
  if (c.bands.empty() || c.lag_ms.empty() || c.decoders.empty())
    throw ArgumentError("config: band, lag-ms and decoder need at least one value");
  for (const auto& b : c.bands) r.bands.push_back(parse_band_or_none(b));
  for (const auto& d : c.decoders) r.decoders.push_back(decoders::parse_decoder(d));
  const auto windows = c.window_ms.empty() ? std::vector<double>{-1.0} : c.window_ms;
  for (double lag : c.lag_ms)
    for (double w : windows) {
      const double width = w < 0.0 ? lag : w;
      if (width > lag + 1e-9) continue;  // window would reach past movement onset
      r.lags.push_back({lag, lag - width});
    }
  if (r.lags.empty()) throw ArgumentError("config: no (window, lag) pair has window <= lag");
  if (c.downsample == 0) throw ArgumentError("config: downsample must be >= 1");
  if (!(c.kin_lowpass_hz >= 0.0)) throw ArgumentError("config: kin-lowpass-hz must be >= 0");
  if (!(c.learning_rate > 0.0)) throw ArgumentError("config: learning-rate must be positive");

  auto& e = r.base;
  e.preprocessing.channels = c.channels;
  e.preprocessing.rereference = c.rereference;
  e.preprocessing.kin_lowpass_hz = c.kin_lowpass_hz;
  e.preprocessing.downsample_factor = c.downsample;
  if (c.num_taps) e.preprocessing.num_taps = c.num_taps;
  e.training.max_epochs = c.max_epochs;
  e.training.batch_size = c.batch_size;
  e.training.patience = c.patience;
  e.training.adam.learning_rate = c.learning_rate;
  e.training.validate();
  e.seed = c.seed;
  e.per_trial_pcc = c.per_trial;
  return r;
}

pipeline::ExperimentConfig cell_config(const Resolved& r, const std::optional<signal::BandId>& band, const LagPair& lag,
                                       decoders::DecoderKind kind) {
  auto e = r.base;
  e.preprocessing.band = band;
  e.lag_far_ms = lag.far_ms;
  e.lag_near_ms = lag.near_ms;
  e.decoder = kind;
  return e;
}

// Lag edges must land on the sample grid of the preprocessed recordings.
void check_lags(const Resolved& r, const SubjectRecording& rec) {
  const double rate = rec.rate_hz / static_cast<double>(r.base.preprocessing.downsample_factor);
  for (const auto& l : r.lags) LagWindowSpec{l.far_ms, l.near_ms, rate}.validate();
}

std::vector<SubjectRecording> load_all(const std::vector<std::string>& dirs) {
  if (dirs.empty()) throw ArgumentError("no --data directory given");
  std::vector<SubjectRecording> out;
  std::set<std::string> ids;
  for (const auto& d : dirs) {
    out.push_back(io::load_subject(d));
    if (!ids.insert(out.back().subject_id).second)
      throw ValidationError("duplicate subject id '" + out.back().subject_id + "' in " + d);
  }
  return out;
}

std::string csv_pcc_row(const eval::SweepCell& cell) { return eval::sweep_csv(eval::build_sweep_report({cell})); }

eval::SweepCell make_cell(const std::optional<signal::BandId>& band, const LagPair& lag, decoders::DecoderKind kind,
                          bool loso, bool per_trial, const std::string& subject) {
  eval::SweepCell c;
  c.band = band_name(band);
  c.window_ms = lag.far_ms - lag.near_ms;
  c.lag_far_ms = lag.far_ms;
  c.lag_near_ms = lag.near_ms;
  c.decoder = std::string(decoders::to_string(kind));
  c.mode = loso ? "loso" : "subject";
  c.aggregation = per_trial ? "per_trial" : "concat";
  c.subject = subject;
  return c;
}

// Effective configuration as a config file that reproduces the run when fed
// back through --config. Empty lists (their default) are omitted.
std::string echo_config(const RunConfig& c) {
  std::ostringstream o;
  auto str = [](const std::string& s) { return nlohmann::json(s).dump(); };
  auto num = [](double v) { return eval::format_g(v, 17); };
  auto strs = [&](const char* k, const std::vector<std::string>& v) {
    if (v.empty()) return;
    o << k << " = [";
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? ", " : "") << str(v[i]);
    o << "]\n";
  };
  auto nums = [&](const char* k, const std::vector<double>& v) {
    if (v.empty()) return;
    o << k << " = [";
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? ", " : "") << num(v[i]);
    o << "]\n";
  };
  auto boolean = [&](const char* k, bool v) { o << k << " = " << (v ? "true" : "false") << "\n"; };
  strs("data", c.data);
  strs("channels", c.channels);
  strs("band", c.bands);
  nums("lag-ms", c.lag_ms);
  nums("window-ms", c.window_ms);
  strs("decoder", c.decoders);
  o << "out = " << str(c.out) << "\n";
  o << "seed = " << c.seed << "\n";
  o << "jobs = " << c.jobs << "\n";
  boolean("per-trial", c.per_trial);
  boolean("rereference", c.rereference);
  o << "kin-lowpass-hz = " << num(c.kin_lowpass_hz) << "\n";
  o << "downsample = " << c.downsample << "\n";
  o << "num-taps = " << c.num_taps << "\n";
  o << "max-epochs = " << c.max_epochs << "\n";
  o << "batch-size = " << c.batch_size << "\n";
  o << "patience = " << c.patience << "\n";
  o << "learning-rate = " << num(c.learning_rate) << "\n";
  o << "max-cells = " << c.max_cells << "\n";
  o << "subject-id = " << str(c.subject_id) << "\n";
  o << "n-channels = " << c.n_channels << "\n";
  o << "n-trials = " << c.n_trials << "\n";
  o << "trial-samples = " << c.trial_samples << "\n";
  o << "rest-samples = " << c.rest_samples << "\n";
  o << "rate-hz = " << num(c.rate_hz) << "\n";
  o << "mapping = " << str(c.mapping) << "\n";
  o << "noise-std = " << num(c.noise_std) << "\n";
  return o.str();
}

// ---- commands -------------------------------------------------------------

int cmd_validate(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ArgumentError("validate: no directory given");
  bool ok = true;
  bool io_failure = false;
  for (const auto& p : paths) {
    try {
      const auto r = io::load_subject(p);
      std::cout << "OK " << p << ": subject " << r.subject_id << ", " << r.n_channels() << " channels, " << r.n_samples()
                << " samples, " << r.trials.size() << " trials\n";
    } catch (const IoError& e) {
      std::cout << "INVALID " << p << ": " << e.what() << "\n";
      ok = false;
      io_failure = true;
    } catch (const Error& e) {
      std::cout << "INVALID " << p << ": " << e.what() << "\n";
      ok = false;
    }
  }
  if (ok) return 0;
  return io_failure ? 4 : 2;
}

int cmd_synth(const RunConfig& c, bool lag_given) {
  synth::SyntheticConfig s;
  s.subject_id = c.subject_id;
  s.n_channels = c.n_channels;
  s.n_trials = c.n_trials;
  s.trial_samples = c.trial_samples;
  s.rest_samples = c.rest_samples;
  s.rate_hz = c.rate_hz;
  s.mapping = synth::parse_mapping(c.mapping);
  s.noise_std = c.noise_std;
  s.seed = c.seed;
  if (lag_given) s.lag_ms = c.lag_ms.front();
  const auto [rec, truth] = synth::generate_synthetic_subject(s);
  io::save_subject(rec, c.out);

  nlohmann::ordered_json j;
  j["mapping"] = std::string(synth::to_string(truth.mapping));
  j["lag_far_ms"] = truth.spec.lag_far_ms;
  j["lag_near_ms"] = truth.spec.lag_near_ms;
  j["rate_hz"] = truth.spec.rate_hz;
  j["layout"] = "column n*L + j holds channel n at lag (far - j) samples";
  j["gain"] = truth.gain;
  j["even"] = truth.even;
  j["scale"] = truth.scale;
  j["offset"] = truth.offset;
  auto rows = [](const Matrix& m) {
    auto a = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      a.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return a;
  };
  j["primary"] = rows(truth.primary);
  j["secondary"] = rows(truth.secondary);
  io::write_text(fs::path(c.out) / "ground_truth.json", j.dump(1) + "\n");
  std::cout << "wrote synthetic subject " << rec.subject_id << " to " << c.out << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, const Resolved& r) {
  if (c.data.size() != 1) throw ArgumentError("train: exactly one --data directory is required");
  if (r.bands.size() != 1 || r.lags.size() != 1 || r.decoders.size() != 1)
    throw ArgumentError("train: band, lag window and decoder must each have a single value (use sweep for grids)");
  const auto rec = io::load_subject(c.data.front());
  check_lags(r, rec);
  const auto cfg = cell_config(r, r.bands[0], r.lags[0], r.decoders[0]);
  auto res = pipeline::run_subject_dependent(rec, cfg);
  const fs::path out(c.out);
  decoders::save_model(res.model, out / "model.ktm");

  std::string report = "epoch,train_loss,val_loss\n";
  if (res.report)
    for (std::size_t i = 0; i < res.report->train_loss.size(); ++i)
      report += std::to_string(i + 1) + "," + eval::format_g(res.report->train_loss[i], 9) + "," +
                eval::format_g(res.report->val_loss[i], 9) + "\n";
  io::write_text(out / "train_report.csv", report);

  auto cell = make_cell(r.bands[0], r.lags[0], r.decoders[0], false, c.per_trial, rec.subject_id);
  cell.report = res.test;
  io::write_text(out / "metrics.csv", csv_pcc_row(cell));
  std::cout << "trained " << decoders::to_string(r.decoders[0]) << " on " << rec.subject_id;
  if (res.report) std::cout << " (stopped at epoch " << res.report->stopped_epoch << ", best " << res.report->best_epoch << ")";
  std::cout << "; test PCC";
  for (std::size_t d = 0; d < 3; ++d)
    std::cout << " " << eval::kDirections[d] << "=" << (res.test.pcc[d] ? eval::format_g(*res.test.pcc[d], 6) : "nan");
  std::cout << "\n";
  return 0;
}

struct SweepJob {
  std::optional<signal::BandId> band;
  LagPair lag;
  decoders::DecoderKind kind;
  std::string subject;  // test subject
  eval::SweepCell cell;
  std::string hash;
};

std::string fingerprint(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["data"] = c.data;
  j["channels"] = c.channels;
  j["seed"] = c.seed;
  j["rereference"] = c.rereference;
  j["kin_lowpass_hz"] = c.kin_lowpass_hz;
  j["downsample"] = c.downsample;
  j["num_taps"] = c.num_taps;
  j["max_epochs"] = c.max_epochs;
  j["batch_size"] = c.batch_size;
  j["patience"] = c.patience;
  j["learning_rate"] = c.learning_rate;
  return j.dump();
}

std::string cell_key(const eval::SweepCell& c) {
  return c.band + "|" + eval::format_g(c.lag_far_ms, 17) + "|" + eval::format_g(c.lag_near_ms, 17) + "|" + c.decoder + "|" +
         c.mode + "|" + c.aggregation + "|" + c.subject;
}

std::map<std::string, eval::PccReport> read_ledger(const fs::path& path) {
  std::map<std::string, eval::PccReport> done;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    // A torn final line from an interrupted run is skipped; the cell reruns.
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("hash") || !j.contains("pcc")) continue;
    eval::PccReport rep;
    rep.samples = j.value("samples", std::size_t{0});
    rep.per_trial = j.value("per_trial", false);
    for (std::size_t d = 0; d < 3; ++d)
      if (!j["pcc"].at(d).is_null()) rep.pcc[d] = j["pcc"].at(d).get<double>();
    done[j["hash"].get<std::string>()] = rep;
  }
  return done;
}

int cmd_sweep(const RunConfig& c, const Resolved& r, bool loso) {
  const auto recordings = load_all(c.data);
  if (loso && recordings.size() < 2) throw ArgumentError("loso: at least two subjects are required");
  for (const auto& rec : recordings) check_lags(r, rec);
  const std::string fp = fingerprint(c);

  std::vector<SweepJob> jobs;
  for (const auto& band : r.bands)
    for (const auto& lag : r.lags)
      for (auto kind : r.decoders)
        for (const auto& rec : recordings) {
          SweepJob job{band, lag, kind, rec.subject_id, make_cell(band, lag, kind, loso, c.per_trial, rec.subject_id), {}};
          const std::string key = cell_key(job.cell) + "|" + fp;
          job.hash = io::sha256_hex(std::vector<unsigned char>(key.begin(), key.end())).substr(0, 32);
          jobs.push_back(std::move(job));
        }

  const fs::path out(c.out);
  fs::create_directories(out);
  const fs::path ledger_path = out / "ledger.jsonl";
  auto done = read_ledger(ledger_path);

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (!done.count(jobs[i].hash)) pending.push_back(i);
  const std::size_t budget = c.max_cells ? std::min(c.max_cells, pending.size()) : pending.size();
  std::cerr << "sweep: " << jobs.size() << " cells, " << jobs.size() - pending.size() << " already done, running " << budget
            << "\n";

  std::ofstream ledger(ledger_path, std::ios::app | std::ios::binary);
  if (!ledger) throw IoError("cannot open " + ledger_path.string());
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;

  auto worker = [&] {
    while (!failed) {
      const std::size_t k = next++;
      if (k >= budget) return;
      const SweepJob& job = jobs[pending[k]];
      try {
        const auto cfg = cell_config(r, job.band, job.lag, job.kind);
        const auto res = loso ? pipeline::run_loso_fold(recordings, job.subject, cfg)
                              : pipeline::run_subject_dependent(
                                    *std::find_if(recordings.begin(), recordings.end(),
                                                  [&](const SubjectRecording& s) { return s.subject_id == job.subject; }),
                                    cfg);
        nlohmann::ordered_json line;
        line["hash"] = job.hash;
        line["cell"] = cell_key(job.cell);
        auto p = nlohmann::ordered_json::array();
        for (const auto& v : res.test.pcc) p.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json());
        line["pcc"] = p;
        line["samples"] = res.test.samples;
        line["per_trial"] = res.test.per_trial;
        std::lock_guard lock(mu);
        ledger << line.dump() << "\n" << std::flush;
        done[job.hash] = res.test;
        std::cerr << "  done " << cell_key(job.cell) << "\n";
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };
  std::size_t n_threads = c.jobs ? c.jobs : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::max<std::size_t>(1, std::min(n_threads, budget));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  if (budget < pending.size()) {
    std::cerr << "sweep: stopped after " << budget << " new cells; rerun the same command to resume\n";
    return 0;
  }
  std::vector<eval::SweepCell> cells;
  for (const auto& job : jobs) {
    auto cell = job.cell;
    cell.report = done.at(job.hash);
    cells.push_back(cell);
  }
  std::sort(cells.begin(), cells.end(), [](const eval::SweepCell& a, const eval::SweepCell& b) {
    return std::tie(a.band, a.window_ms, a.lag_far_ms, a.lag_near_ms, a.decoder, a.mode, a.aggregation, a.subject) <
           std::tie(b.band, b.window_ms, b.lag_far_ms, b.lag_near_ms, b.decoder, b.mode, b.aggregation, b.subject);
  });
  io::write_text(out / "sweep.csv", eval::sweep_csv(eval::build_sweep_report(cells)));
  std::cout << "wrote " << (out / "sweep.csv").string() << " (" << cells.size() << " cells)\n";
  return 0;
}

int cmd_export(const RunConfig& c) {
  if (c.model.empty()) throw ArgumentError("export: --model is required");
  if (c.data.size() != 1) throw ArgumentError("export: exactly one --data directory is required");
  auto model = decoders::load_model(c.model);
  const auto raw = io::load_subject(c.data.front());
  const auto prep = preprocess::run(raw, model.header.preprocessing);
  if (std::abs(prep.rate_hz - model.header.spec.rate_hz) > 1e-9)
    throw ValidationError("export: preprocessed rate " + eval::format_g(prep.rate_hz, 6) + " Hz differs from the model's " +
                          eval::format_g(model.header.spec.rate_hz, 6) + " Hz");
  if (c.trial >= prep.trials.size())
    throw ArgumentError("export: trial " + std::to_string(c.trial) + " out of range (subject has " +
                        std::to_string(prep.trials.size()) + ")");
  const auto rec = preprocess::apply_normalization(prep, model.header.normalization);
  const auto [X, Y] = build_lag_features(rec, rec.trials[c.trial], model.header.spec);
  const Matrix pred = model.predict(X);
  fs::create_directories(c.out);
  const fs::path path =
      fs::path(c.out) / ("trajectory_" + rec.subject_id + "_trial" + std::to_string(c.trial) + ".csv");
  eval::export_trajectory(Y, pred, model.header.normalization.kin, rec.rate_hz, path);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinetrace: EEG-based hand kinematics decoding toolkit"};
  app.set_config("--config", "", "TOML/INI configuration file");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  RunConfig c;
  auto opt = [&](const std::string& name, auto& target, const std::string& help) {
    return app.add_option("--" + name, target, help)->envname(env_name(name));
  };
  auto flag = [&](const std::string& name, bool& target, const std::string& help) {
    return app.add_flag("--" + name + ",!--no-" + name, target, help)->envname(env_name(name));
  };
  opt("data", c.data, "subject directories (interchange format)")->delimiter(',');
  opt("channels", c.channels, "EEG channel names to keep (default: all)")->delimiter(',');
  opt("band", c.bands, "frequency bands: none, FB1..FB7")->delimiter(',');
  auto* lag_opt = opt("lag-ms", c.lag_ms, "far edge of the lag window, ms")->delimiter(',');
  opt("window-ms", c.window_ms, "window width, ms (default: whole lag)")->delimiter(',');
  opt("decoder", c.decoders, "decoders: mlr, mlp, cnnlstm")->delimiter(',');
  opt("out", c.out, "output directory");
  opt("seed", c.seed, "base random seed");
  opt("jobs", c.jobs, "sweep worker threads (0: available cores)");
  flag("per-trial", c.per_trial, "average PCC over test trials instead of concatenating");
  flag("rereference", c.rereference, "common average re-reference");
  opt("kin-lowpass-hz", c.kin_lowpass_hz, "kinematics smoothing cutoff, 0 disables");
  opt("downsample", c.downsample, "integer decimation factor");
  opt("num-taps", c.num_taps, "band filter length (0: derived from the band)");
  opt("max-epochs", c.max_epochs, "training epoch limit");
  opt("batch-size", c.batch_size, "mini-batch size");
  opt("patience", c.patience, "early-stopping patience");
  opt("learning-rate", c.learning_rate, "Adam learning rate");
  opt("max-cells", c.max_cells, "sweep: stop after this many new cells (0: run all)");
  opt("subject-id", c.subject_id, "synth: subject id");
  opt("n-channels", c.n_channels, "synth: channel count");
  opt("n-trials", c.n_trials, "synth: trial count");
  opt("trial-samples", c.trial_samples, "synth: samples per movement segment");
  opt("rest-samples", c.rest_samples, "synth: rest samples before each onset");
  opt("rate-hz", c.rate_hz, "synth: sampling rate");
  opt("mapping", c.mapping, "synth: linear or nonlinear");
  opt("noise-std", c.noise_std, "synth: kinematics noise std");
  opt("model", c.model, "export: model file");
  opt("trial", c.trial, "export: trial index");

  std::vector<std::string> validate_paths;
  auto* validate = app.add_subcommand("validate", "check interchange directories");
  validate->add_option("paths", validate_paths, "subject directories");
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic subject");
  auto* train = app.add_subcommand("train", "train one decoder on one subject");
  auto* sweep = app.add_subcommand("sweep", "band x lag x decoder grid");
  auto* loso = app.add_subcommand("loso", "sweep with leave-one-subject-out folds");
  auto* export_cmd = app.add_subcommand("export", "write measured and predicted trajectories for one trial");

  // Environment values are spliced in as flags so they outrank the config
  // file; an explicit command-line flag still wins.
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> from_env;
  for (const CLI::Option* o : app.get_options()) {
    const std::string& name = o->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    const char* value = std::getenv(env_name(name).c_str());
    if (!value || !*value) continue;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == "--" + name || a.rfind("--" + name + "=", 0) == 0 || a == "--no-" + name;
    });
    if (!given) from_env.push_back("--" + name + "=" + value);
  }
  args.insert(args.begin(), from_env.begin(), from_env.end());
  std::reverse(args.begin(), args.end());

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (validate->parsed()) {
      auto paths = validate_paths;
      paths.insert(paths.end(), c.data.begin(), c.data.end());
      return cmd_validate(paths);
    }
    const Resolved r = resolve(c);
    if (!export_cmd->parsed()) {
      fs::create_directories(c.out);
      io::write_text(fs::path(c.out) / "effective_config.toml", echo_config(c));
    }
    if (synth_cmd->parsed()) return cmd_synth(c, lag_opt->count() > 0);
    if (train->parsed()) return cmd_train(c, r);
    if (sweep->parsed()) return cmd_sweep(c, r, false);
    if (loso->parsed()) return cmd_sweep(c, r, true);
    if (export_cmd->parsed()) return cmd_export(c);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
