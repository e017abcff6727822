#include "catch_amalgamated.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;
};

struct Sandbox {
  fs::path root;

  Sandbox() : root(fs::temp_directory_path() / ("kinetrace_cli_" + std::to_string(std::random_device{}()))) {
    fs::create_directories(root);
  }
  ~Sandbox() { fs::remove_all(root); }

  // Runs the CLI with `args` (already shell-quoted where needed).
  Run cli(const std::string& args, const std::string& env = "") const {
    const fs::path log = root / "last.log";
    const std::string cmd =
        "cd '" + root.string() + "' && " + env + " '" KINETRACE_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read(log)};
  }

  fs::path operator/(const std::string& p) const { return root / p; }

  static std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static void write(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
  }
};

bool contains(const std::string& haystack, const std::string& needle) { return haystack.find(needle) != std::string::npos; }

// Linear synthetic data with CAR and smoothing off so recovery is exact.
const std::string kPlain = "--no-rereference --kin-lowpass-hz 0 --lag-ms 50";

void synth(const Sandbox& sb, const std::string& id, int seed) {
  const auto r = sb.cli("--out " + id + " --subject-id " + id + " --seed " + std::to_string(seed) +
                        " --n-channels 4 --n-trials 12 --trial-samples 60 --rest-samples 20 synth");
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("validate", "[cli]") {
  Sandbox sb;
  synth(sb, "S1", 1);
  CHECK(fs::exists(sb / "S1/ground_truth.json"));
  CHECK(sb.cli("validate S1").code == 0);

  SECTION("checksum mismatch names the file") {
    auto bytes = Sandbox::read(sb / "S1/eeg.f32");
    bytes[5] ^= 0x10;
    Sandbox::write(sb / "S1/eeg.f32", bytes);
    const auto r = sb.cli("validate S1");
    CHECK(r.code != 0);
    CHECK(contains(r.output, "eeg.f32"));
  }
  SECTION("marker overlap names the trial") {
    auto m = nlohmann::json::parse(Sandbox::read(sb / "S1/manifest.json"));
    m["trials"][3]["onset_sample"] = m["trials"][2]["end_sample"];
    Sandbox::write(sb / "S1/manifest.json", m.dump());
    const auto r = sb.cli("validate S1");
    CHECK(r.code == 2);
    CHECK(contains(r.output, "trial 3"));
  }
  SECTION("missing directory") {
    CHECK(sb.cli("validate nope").code == 4);
  }
}

TEST_CASE("train", "[cli]") {
  Sandbox sb;
  synth(sb, "S1", 1);

  SECTION("model reloads and reruns are byte-identical") {
    REQUIRE(sb.cli("--data S1 " + kPlain + " --out a train").code == 0);
    REQUIRE(sb.cli("--data S1 " + kPlain + " --out b train").code == 0);
    const auto model = Sandbox::read(sb / "a/model.ktm");
    CHECK(model.size() > 16);
    CHECK(model == Sandbox::read(sb / "b/model.ktm"));
    CHECK(Sandbox::read(sb / "a/metrics.csv") == Sandbox::read(sb / "b/metrics.csv"));
    CHECK(fs::exists(sb / "a/effective_config.toml"));
    CHECK(fs::exists(sb / "a/train_report.csv"));

    const auto exported = sb.cli("--data S1 --model a/model.ktm --trial 2 --out traj export");
    CHECK(exported.code == 0);
    const auto csv = Sandbox::read(sb / "traj/trajectory_S1_trial2.csv");
    CHECK(csv.rfind("time_s,meas_x,meas_y,meas_z,pred_x,pred_y,pred_z\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 61);
  }
  SECTION("neural decoder writes a loss report") {
    REQUIRE(sb.cli("--data S1 " + kPlain + " --decoder mlp --max-epochs 2 --out m train").code == 0);
    const auto report = Sandbox::read(sb / "m/train_report.csv");
    CHECK(report.rfind("epoch,train_loss,val_loss\n", 0) == 0);
    CHECK(std::count(report.begin(), report.end(), '\n') == 3);
  }
  SECTION("missing subject") {
    CHECK(sb.cli("--data nope train").code == 4);
  }
  SECTION("bad arguments") {
    CHECK(sb.cli("--data S1 --decoder svm train").code == 2);
    CHECK(sb.cli("--data S1 --band FB9 train").code == 2);
    CHECK(sb.cli("--data S1 --lag-ms 55 train").code == 2);
  }
  SECTION("config file, flag precedence and environment") {
    Sandbox::write(sb / "run.toml", "data = [\"S1\"]\nrereference = false\nkin-lowpass-hz = 0\nlag-ms = [50]\nseed = 5\n");
    REQUIRE(sb.cli("--config run.toml --out c train").code == 0);
    REQUIRE(sb.cli("--data S1 " + kPlain + " --seed 5 --out d train").code == 0);
    CHECK(Sandbox::read(sb / "c/model.ktm") == Sandbox::read(sb / "d/model.ktm"));
    CHECK(contains(Sandbox::read(sb / "c/effective_config.toml"), "seed = 5\n"));

    REQUIRE(sb.cli("--config run.toml --seed 6 --out e train").code == 0);
    CHECK(contains(Sandbox::read(sb / "e/effective_config.toml"), "seed = 6\n"));

    REQUIRE(sb.cli("--config run.toml --out f train", "KINETRACE_SEED=7").code == 0);
    CHECK(contains(Sandbox::read(sb / "f/effective_config.toml"), "seed = 7\n"));

    Sandbox::write(sb / "bad.toml", "data = [\"S1\"]\nlearning_rte = 0.1\n");
    CHECK(sb.cli("--config bad.toml --out g train").code == 2);
  }
}

TEST_CASE("sweep", "[cli]") {
  Sandbox sb;
  for (int s = 1; s <= 3; ++s) synth(sb, "S" + std::to_string(s), s);

  SECTION("a single cell matches train") {
    REQUIRE(sb.cli("--data S1 " + kPlain + " --out t train").code == 0);
    REQUIRE(sb.cli("--data S1 " + kPlain + " --out s sweep").code == 0);
    CHECK(Sandbox::read(sb / "s/sweep.csv") == Sandbox::read(sb / "t/metrics.csv"));
  }
  SECTION("interrupted and resumed equals uninterrupted") {
    const std::string grid = "--data S1,S2 --no-rereference --kin-lowpass-hz 0 --band none,FB3 --lag-ms 50,100 "
                             "--decoder mlr ";
    REQUIRE(sb.cli(grid + "--out full --jobs 1 sweep").code == 0);
    const auto first = sb.cli(grid + "--out part --max-cells 3 sweep");
    REQUIRE(first.code == 0);
    CHECK_FALSE(fs::exists(sb / "part/sweep.csv"));
    REQUIRE(sb.cli(grid + "--out part --jobs 2 sweep").code == 0);
    const auto full = Sandbox::read(sb / "full/sweep.csv");
    CHECK(full == Sandbox::read(sb / "part/sweep.csv"));
    // 2 bands x 2 lags x 2 subjects x 3 directions, plus 4 x 3 means.
    CHECK(std::count(full.begin(), full.end(), '\n') == 1 + 24 + 12);
  }
  SECTION("loso tests each subject once") {
    REQUIRE(sb.cli("--data S1,S2,S3 " + kPlain + " --out l loso").code == 0);
    const auto csv = Sandbox::read(sb / "l/sweep.csv");
    for (const char* s : {"S1", "S2", "S3"})
      CHECK(contains(csv, std::string(",loso,concat,") + s + ",x,"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 9 + 3);
    REQUIRE(sb.cli("--data S1,S2,S3 " + kPlain + " --out l2 loso").code == 0);
    CHECK(csv == Sandbox::read(sb / "l2/sweep.csv"));
  }
}
