#include "catch_amalgamated.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kinetrace/eval.hpp"
#include "kinetrace/rng.hpp"

using namespace kinetrace;
using namespace kinetrace::eval;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<double> random_series(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Correlation written out term by term: z-scores with (T-1) standard
// deviations, summed and divided by T-1. Long double keeps it independent of
// the library's rounding.
double pcc_transcribed(const std::vector<double>& x, const std::vector<double>& y) {
  const long double T = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= T;
  my /= T;
  long double vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  const long double sx = std::sqrt(vx / (T - 1)), sy = std::sqrt(vy / (T - 1));
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += ((x[i] - mx) / sx) * ((y[i] - my) / sy);
  return static_cast<double>(s / (T - 1));
}

Matrix columns(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c) {
  Matrix m(a.size(), 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    m(i, 0) = a[i];
    m(i, 1) = b[i];
    m(i, 2) = c[i];
  }
  return m;
}

SweepCell cell(const std::string& subject, double x, double y, double z, const std::string& decoder = "mlr") {
  SweepCell c;
  c.band = "FB2";
  c.window_ms = 100;
  c.lag_far_ms = 150;
  c.lag_near_ms = 50;
  c.decoder = decoder;
  c.subject = subject;
  c.report.pcc = {x, y, z};
  c.report.samples = 10;
  return c;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / ("kinetrace_eval_" + std::to_string(Rng(std::random_device{}()).next_u64()))) {
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("pcc", "[eval][pcc]") {
  Rng rng(1);
  SECTION("identity and negation") {
    for (int rep = 0; rep < 20; ++rep) {
      const auto x = random_series(2 + rep * 7, rng);
      std::vector<double> neg(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
      CHECK_THAT(pcc(x, x), WithinAbs(1.0, 1e-12));
      CHECK_THAT(pcc(x, neg), WithinAbs(-1.0, 1e-12));
    }
  }
  SECTION("affine invariance and symmetry") {
    for (int rep = 0; rep < 20; ++rep) {
      const auto x = random_series(50, rng), y = random_series(50, rng);
      const double a = rng.uniform(-5, 5), b = rng.uniform(-100, 100), c = rng.uniform(-5, 5), d = rng.uniform(-100, 100);
      std::vector<double> ax(50), cy(50);
      for (std::size_t i = 0; i < 50; ++i) {
        ax[i] = a * x[i] + b;
        cy[i] = c * y[i] + d;
      }
      const double sign = a * c > 0 ? 1.0 : -1.0;
      CHECK_THAT(pcc(ax, cy), WithinAbs(sign * pcc(x, y), 1e-10));
      CHECK_THAT(pcc(x, y), WithinAbs(pcc(y, x), 1e-12));
    }
  }
  SECTION("two samples are extremal") {
    CHECK(pcc(std::vector<double>{0, 1}, std::vector<double>{3, 7}) == 1.0);
    CHECK(pcc(std::vector<double>{0, 1}, std::vector<double>{7, 3}) == -1.0);
    for (int rep = 0; rep < 20; ++rep) CHECK(std::abs(pcc(random_series(2, rng), random_series(2, rng))) == 1.0);
  }
  SECTION("matches the written-out formula") {
    for (std::size_t n : {3u, 10u, 100u, 5000u}) {
      const auto x = random_series(n, rng);
      auto y = random_series(n, rng);
      for (std::size_t i = 0; i < n; ++i) y[i] += 0.5 * x[i];
      CHECK_THAT(pcc(x, y), WithinAbs(pcc_transcribed(x, y), 1e-12));
    }
    // Hand-checked: x = (1,2,3), y = (1,3,2) gives 0.5.
    CHECK_THAT(pcc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), WithinAbs(0.5, 1e-15));
  }
  SECTION("errors") {
    CHECK_THROWS_AS(pcc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateSeriesError);
    CHECK_THROWS_AS(pcc(std::vector<double>{1, 2, 3}, std::vector<double>{4, 4, 4}), DegenerateSeriesError);
    CHECK_THROWS_AS(pcc(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(pcc(std::vector<double>{1}, std::vector<double>{1}), ShapeError);
  }
}

TEST_CASE("evaluate", "[eval]") {
  Rng rng(2);
  const auto a = random_series(40, rng), b = random_series(40, rng), c = random_series(40, rng);
  const Matrix measured = columns(a, b, c);
  SECTION("perfect prediction") {
    const auto r = evaluate(measured, measured);
    CHECK(r.defined());
    CHECK(r.samples == 40);
    for (const auto& v : r.pcc) CHECK_THAT(*v, WithinAbs(1.0, 1e-12));
  }
  SECTION("constant output is flagged, not zero") {
    Matrix pred = measured;
    for (std::size_t i = 0; i < 40; ++i) pred(i, 1) = 0.3;
    const auto r = evaluate(measured, pred);
    CHECK_FALSE(r.defined());
    CHECK(r.pcc[0].has_value());
    CHECK_FALSE(r.pcc[1].has_value());
  }
  SECTION("matches a direct computation per direction") {
    const auto p0 = random_series(40, rng), p1 = random_series(40, rng), p2 = random_series(40, rng);
    const auto r = evaluate(measured, columns(p0, p1, p2));
    CHECK_THAT(*r.pcc[0], WithinAbs(pcc_transcribed(a, p0), 1e-10));
    CHECK_THAT(*r.pcc[1], WithinAbs(pcc_transcribed(b, p1), 1e-10));
    CHECK_THAT(*r.pcc[2], WithinAbs(pcc_transcribed(c, p2), 1e-10));
  }
  SECTION("per-trial mean") {
    const auto p0 = random_series(40, rng), p1 = random_series(40, rng), p2 = random_series(40, rng);
    const Matrix pred = columns(p0, p1, p2);
    const auto r = evaluate_per_trial(measured, pred, {10, 30});
    CHECK(r.per_trial);
    const double first = pcc_transcribed({a.begin(), a.begin() + 10}, {p0.begin(), p0.begin() + 10});
    const double second = pcc_transcribed({a.begin() + 10, a.end()}, {p0.begin() + 10, p0.end()});
    CHECK_THAT(*r.pcc[0], WithinAbs((first + second) / 2.0, 1e-12));
    CHECK_THROWS_AS(evaluate_per_trial(measured, pred, {10, 20}), ShapeError);
  }
  SECTION("shape errors") {
    CHECK_THROWS_AS(evaluate(measured, measured.slice_rows(0, 39)), ShapeError);
    CHECK_THROWS_AS(evaluate(Matrix(4, 2), Matrix(4, 2)), ShapeError);
  }
}

TEST_CASE("sweep report", "[eval][sweep]") {
  SECTION("single cell") {
    const auto rep = build_sweep_report({cell("S01", 0.5, 0.25, -0.125)});
    REQUIRE(rep.cells.size() == 3);
    REQUIRE(rep.means.size() == 3);
    CHECK(*rep.means[0].pcc == 0.5);
    CHECK(*rep.means[2].pcc == -0.125);
    CHECK(rep.means[0].subject == "MEAN");
  }
  SECTION("means over subjects, grouped by configuration") {
    const std::vector<SweepCell> cells{cell("S01", 0.1, 0.2, 0.3), cell("S02", 0.3, 0.4, 0.5), cell("S03", 0.2, 0.9, 0.1),
                                       cell("S01", 0.9, 0.9, 0.9, "mlp")};
    const auto rep = build_sweep_report(cells);
    CHECK(rep.means.size() == 6);
    CHECK_THAT(*rep.means[0].pcc, WithinAbs(0.2, 1e-12));
    CHECK_THAT(*rep.means[1].pcc, WithinAbs(0.5, 1e-12));
    CHECK(*rep.means[3].pcc == 0.9);
    CHECK(rep.means[3].decoder == "mlp");
  }
  SECTION("permutation invariance") {
    Rng rng(3);
    std::vector<SweepCell> cells;
    for (int s = 0; s < 12; ++s)
      cells.push_back(cell("S" + std::to_string(10 + s), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
    const auto base = build_sweep_report(cells).means;
    for (int rep = 0; rep < 5; ++rep) {
      rng.shuffle(cells);
      const auto m = build_sweep_report(cells).means;
      for (std::size_t i = 0; i < 3; ++i) CHECK(*m[i].pcc == *base[i].pcc);
    }
  }
  SECTION("undefined cells") {
    auto bad = cell("S02", 0, 0, 0);
    bad.report.pcc[1].reset();
    const auto rep = build_sweep_report({cell("S01", 0.4, 0.4, 0.4), bad});
    CHECK(rep.cells[4].status == "undefined");
    CHECK(rep.means[1].status == "partial");
    CHECK(*rep.means[1].pcc == 0.4);
    CHECK(rep.means[0].status == "ok");
    const std::string csv = sweep_csv(rep);
    CHECK(csv.find("FB2,100,150,50,mlr,subject,concat,S02,y,nan,undefined\n") != std::string::npos);
  }
  SECTION("empty") {
    CHECK_THROWS_AS(build_sweep_report({}), EmptyReportError);
  }
  SECTION("csv layout") {
    const std::string csv = sweep_csv(build_sweep_report({cell("S01", 0.123456789, 1.0 / 3.0, -0.5)}));
    CHECK(csv ==
          "band,window_ms,lag_far_ms,lag_near_ms,decoder,mode,aggregation,subject,direction,pcc,status\n"
          "FB2,100,150,50,mlr,subject,concat,S01,x,0.123457,ok\n"
          "FB2,100,150,50,mlr,subject,concat,S01,y,0.333333,ok\n"
          "FB2,100,150,50,mlr,subject,concat,S01,z,-0.5,ok\n"
          "FB2,100,150,50,mlr,subject,concat,MEAN,x,0.123457,ok\n"
          "FB2,100,150,50,mlr,subject,concat,MEAN,y,0.333333,ok\n"
          "FB2,100,150,50,mlr,subject,concat,MEAN,z,-0.5,ok\n");
  }
}

TEST_CASE("trajectory export", "[eval][trajectory]") {
  TempDir tmp;
  const auto path = tmp.path / "traj.csv";
  const Matrix measured(3, 3, {0.0, 0.5, 1.0, 0.25, 0.75, 0.0, 1.0, 0.0, 0.5});
  const Matrix predicted(3, 3, {0.1, 0.4, 0.9, 0.3, 0.7, 0.2, 1.2, -0.1, 0.5});
  const std::array<signal::MinMaxParams, 3> kin{{{-2.0, 2.0}, {10.0, 12.0}, {0.0, 0.5}}};
  export_trajectory(measured, predicted, kin, 100.0, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "time_s,meas_x,meas_y,meas_z,pred_x,pred_y,pred_z");
  std::vector<std::vector<double>> rows;
  for (std::string line; std::getline(in, line);) {
    std::stringstream ss(line);
    std::vector<double> row;
    for (std::string field; std::getline(ss, field, ',');) row.push_back(std::stod(field));
    rows.push_back(row);
  }
  REQUIRE(rows.size() == 3);
  // min + v * (max - min), worked by hand.
  const std::vector<std::vector<double>> expected{
      {0.00, -2.0, 11.0, 0.5, -1.6, 10.8, 0.45},
      {0.01, -1.0, 11.5, 0.0, -0.8, 11.4, 0.1},
      {0.02, 2.0, 10.0, 0.25, 2.8, 9.8, 0.25},
  };
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 7; ++c) CHECK_THAT(rows[r][c], WithinAbs(expected[r][c], 1e-7));

  CHECK_THROWS_AS(export_trajectory(measured, predicted.slice_rows(0, 2), kin, 100.0, path), ShapeError);
  CHECK_THROWS_AS(export_trajectory(measured, predicted, kin, 0.0, path), ArgumentError);
}
