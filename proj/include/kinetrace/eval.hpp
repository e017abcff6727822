#pragma once

// Pearson correlation, per-direction reports, sweep tables and trajectory
// export.
//
// Sweep CSV columns (stable):
//   band,window_ms,lag_far_ms,lag_near_ms,decoder,mode,aggregation,subject,direction,pcc,status
// One row per cell and direction, then one MEAN row per (configuration,
// direction) over all subjects. pcc is printed with 6 significant digits
// (printf %.6g, round-to-nearest); an undefined value prints as "nan" with
// status "undefined". MEAN rows average the defined cells only and carry
// status "partial" when some cells were undefined.
//
// Trajectory CSV columns: time_s,meas_x,meas_y,meas_z,pred_x,pred_y,pred_z in
// the original kinematics units, printed with 9 significant digits so float32
// values survive a round trip.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "kinetrace/errors.hpp"
#include "kinetrace/interchange.hpp"
#include "kinetrace/matrix.hpp"
#include "kinetrace/signal.hpp"

namespace kinetrace::eval {

inline constexpr std::array<const char*, 3> kDirections{"x", "y", "z"};

// (1/(T-1)) * sum of products of z-scores with (T-1)-denominator standard
// deviations, clamped to [-1, 1].
inline double pcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pcc: series lengths differ");
  const std::size_t T = x.size();
  if (T < 2) throw ShapeError("pcc: need at least two samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(T);
  my /= static_cast<double>(T);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double denom = static_cast<double>(T - 1);
  const double sdx = std::sqrt(sxx / denom), sdy = std::sqrt(syy / denom);
  const double scale_x = std::max(std::abs(mx), sdx), scale_y = std::max(std::abs(my), sdy);
  if (!(sdx > 1e-12 * std::max(1.0, scale_x)) || !(sdy > 1e-12 * std::max(1.0, scale_y)))
    throw DegenerateSeriesError("pcc: series is constant");
  // Two distinct points are always perfectly (anti-)correlated.
  if (T == 2) return (x[1] - x[0]) * (y[1] - y[0]) > 0.0 ? 1.0 : -1.0;
  const double r = sxy / denom / (sdx * sdy);
  return std::clamp(r, -1.0, 1.0);
}

struct PccReport {
  std::array<std::optional<double>, 3> pcc;  // nullopt = undefined (degenerate series)
  std::size_t samples = 0;
  bool per_trial = false;

  bool defined() const { return pcc[0] && pcc[1] && pcc[2]; }
};

inline std::optional<double> pcc_or_undefined(std::span<const double> x, std::span<const double> y) {
  try {
    return pcc(x, y);
  } catch (const DegenerateSeriesError&) {
    return std::nullopt;
  }
}

// One PCC per direction over all rows of `measured` / `predicted` (D x 3).
inline PccReport evaluate(const Matrix& measured, const Matrix& predicted) {
  if (measured.rows() != predicted.rows() || measured.cols() != 3 || predicted.cols() != 3)
    throw ShapeError("evaluate: measured and predicted must both be D x 3");
  PccReport r;
  r.samples = measured.rows();
  for (std::size_t d = 0; d < 3; ++d) r.pcc[d] = pcc_or_undefined(measured.column(d), predicted.column(d));
  return r;
}

// Mean of per-trial PCCs; `rows_per_trial` gives each trial's row count in order.
inline PccReport evaluate_per_trial(const Matrix& measured, const Matrix& predicted, const std::vector<std::size_t>& rows_per_trial) {
  if (measured.rows() != predicted.rows()) throw ShapeError("evaluate_per_trial: row mismatch");
  PccReport r;
  r.per_trial = true;
  r.samples = measured.rows();
  for (std::size_t d = 0; d < 3; ++d) {
    double sum = 0.0;
    std::size_t first = 0;
    bool ok = true;
    for (std::size_t n : rows_per_trial) {
      const auto m = measured.slice_rows(first, n).column(d);
      const auto p = predicted.slice_rows(first, n).column(d);
      const auto v = pcc_or_undefined(m, p);
      if (!v) ok = false;
      else sum += *v;
      first += n;
    }
    if (first != measured.rows()) throw ShapeError("evaluate_per_trial: trial rows do not sum to the total");
    if (ok && !rows_per_trial.empty()) r.pcc[d] = sum / static_cast<double>(rows_per_trial.size());
  }
  return r;
}

struct SweepCell {
  std::string band;  // "none" when unfiltered
  double window_ms = 0.0;
  double lag_far_ms = 0.0;
  double lag_near_ms = 0.0;
  std::string decoder;
  std::string mode = "subject";         // subject | loso
  std::string aggregation = "concat";   // concat | per_trial
  std::string subject;
  PccReport report;
};

struct SweepRow {
  std::string band;
  double window_ms, lag_far_ms, lag_near_ms;
  std::string decoder, mode, aggregation, subject, direction;
  std::optional<double> pcc;
  std::string status;
};

struct SweepReport {
  std::vector<SweepRow> cells;
  std::vector<SweepRow> means;
};

inline SweepReport build_sweep_report(const std::vector<SweepCell>& results) {
  if (results.empty()) throw EmptyReportError("sweep report: no results");
  SweepReport rep;
  using Key = std::tuple<std::string, double, double, double, std::string, std::string, std::string, std::size_t>;
  std::map<Key, std::vector<std::pair<std::string, std::optional<double>>>> groups;
  std::vector<Key> order;
  for (const auto& c : results)
    for (std::size_t d = 0; d < 3; ++d) {
      const auto& v = c.report.pcc[d];
      rep.cells.push_back({c.band, c.window_ms, c.lag_far_ms, c.lag_near_ms, c.decoder, c.mode, c.aggregation, c.subject,
                           kDirections[d], v, v ? "ok" : "undefined"});
      Key k{c.band, c.window_ms, c.lag_far_ms, c.lag_near_ms, c.decoder, c.mode, c.aggregation, d};
      auto [it, inserted] = groups.try_emplace(k);
      if (inserted) order.push_back(k);
      it->second.emplace_back(c.subject, v);
    }
  for (const auto& k : order) {
    auto vals = groups.at(k);
    // Sum in subject order so the mean does not depend on result order.
    std::sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [s, v] : vals)
      if (v) {
        sum += *v;
        ++n;
      }
    SweepRow row{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k), std::get<5>(k),
                 std::get<6>(k), "MEAN", kDirections[std::get<7>(k)], std::nullopt, "undefined"};
    if (n > 0) {
      row.pcc = sum / static_cast<double>(n);
      row.status = n == vals.size() ? "ok" : "partial";
    }
    rep.means.push_back(row);
  }
  return rep;
}

inline std::string format_g(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string sweep_csv(const SweepReport& rep) {
  std::string out = "band,window_ms,lag_far_ms,lag_near_ms,decoder,mode,aggregation,subject,direction,pcc,status\n";
  auto emit = [&](const SweepRow& r) {
    out += r.band + "," + format_g(r.window_ms, 6) + "," + format_g(r.lag_far_ms, 6) + "," + format_g(r.lag_near_ms, 6) +
           "," + r.decoder + "," + r.mode + "," + r.aggregation + "," + r.subject + "," + r.direction + "," +
           (r.pcc ? format_g(*r.pcc, 6) : std::string("nan")) + "," + r.status + "\n";
  };
  for (const auto& r : rep.cells) emit(r);
  for (const auto& r : rep.means) emit(r);
  return out;
}

// Writes measured and predicted trajectories (D x 3, normalized units) after
// inverting the min-max normalization of each axis.
inline void export_trajectory(const Matrix& measured, const Matrix& predicted,
                              const std::array<signal::MinMaxParams, 3>& kin, double rate_hz,
                              const std::filesystem::path& path) {
  if (measured.rows() != predicted.rows() || measured.cols() != 3 || predicted.cols() != 3)
    throw ShapeError("export_trajectory: measured and predicted must both be D x 3");
  if (!(rate_hz > 0.0)) throw ArgumentError("export_trajectory: rate_hz must be positive");
  std::array<std::vector<double>, 3> meas, pred;
  for (std::size_t a = 0; a < 3; ++a) {
    meas[a] = signal::invert_minmax(measured.column(a), kin[a]);
    pred[a] = signal::invert_minmax(predicted.column(a), kin[a]);
  }
  std::string out = "time_s,meas_x,meas_y,meas_z,pred_x,pred_y,pred_z\n";
  for (std::size_t i = 0; i < measured.rows(); ++i) {
    out += format_g(static_cast<double>(i) / rate_hz, 9);
    for (std::size_t a = 0; a < 3; ++a) out += "," + format_g(meas[a][i], 9);
    for (std::size_t a = 0; a < 3; ++a) out += "," + format_g(pred[a][i], 9);
    out += "\n";
  }
  io::write_text(path, out);
}

}  // namespace kinetrace::eval
