#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "beamkit/cli.hpp"
#include "beamkit/oracle.hpp"
#include "beamkit/taylor.hpp"

using namespace beamkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("cli_test_tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<char>((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
}

int count_lines(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  int n = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate writes the requested scenes and is byte-deterministic") {
  TempDir a("sim_a"), b("sim_b");
  std::vector<std::string> args = {"simulate", "--out", a.str(),  "--n",
                                   "3",        "--bucket", "90-180", "--seed",
                                   "7",        "--duration", "0.25"};
  CHECK(cli::run(args) == 0);
  args[2] = b.str();
  CHECK(cli::run(args) == 0);

  cli::DatasetOnDisk ds = cli::load_dataset_manifest(a.str());
  CHECK(ds.scenes.size() == 3);
  CHECK(ds.bucket == "90-180");
  for (const cli::SceneFiles& sf : ds.scenes) {
    CHECK(slurp(a.file(sf.mixture)) == slurp((b.path / sf.mixture).string()));
    CHECK(slurp(a.file(sf.clean)) == slurp((b.path / sf.clean).string()));
  }
}

TEST_CASE("simulate set-B scenes place one to three noises") {
  TempDir d("sim_setb");
  CHECK(cli::run({"simulate", "--out", d.str(), "--n", "6", "--bucket", "set-B",
                  "--seed", "3", "--duration", "0.25"}) == 0);
  cli::DatasetOnDisk ds = cli::load_dataset_manifest(d.str());
  for (const cli::SceneFiles& sf : ds.scenes) {
    CHECK(sf.spec.noise_doas_deg.size() >= 1);
    CHECK(sf.spec.noise_doas_deg.size() <= 3);
  }
}

TEST_CASE("simulate rejects an unknown bucket with nonzero exit") {
  TempDir d("sim_bad");
  CHECK(cli::run({"simulate", "--out", d.str(), "--n", "2", "--bucket", "13-37"}) != 0);
}

TEST_CASE("beampattern of a DS dictionary hits 0 dB at its steering DOA") {
  TempDir d("bp");
  std::string csv = d.file("bp.csv");
  CHECK(cli::run({"beampattern", "--regime", "ds", "--P", "12", "--freq", "2000",
                  "--beam", "0", "--out", csv}) == 0);
  std::ifstream f(csv);
  std::string header;
  std::getline(f, header);
  CHECK(header == "freq_hz,doa_deg,gain_db");
  bool found = false;
  std::string line;
  while (std::getline(f, line)) {
    double freq, doa, gain;
    char c;
    std::istringstream ss(line);
    ss >> freq >> c >> doa >> c >> gain;
    if (doa == 0.0) {
      CHECK(std::fabs(gain) < 1e-6);  // 0 dB at the steered direction
      found = true;
    }
  }
  CHECK(found);
  CHECK(count_lines(csv) == 1 + 360);
}

TEST_CASE("beampattern row count scales with grid step and frequencies") {
  TempDir d("bp2");
  std::string csv = d.file("bp.csv");
  CHECK(cli::run({"beampattern", "--regime", "sd", "--P", "8", "--freq", "1000",
                  "--freq", "3000", "--grid-step", "2", "--beam", "3", "--out",
                  csv}) == 0);
  CHECK(count_lines(csv) == 1 + 2 * 180);
}

TEST_CASE("beampattern from exported MVDR weights nulls the interferer") {
  TempDir d("bpw");
  ArrayGeometry geom = circular_array(0.0425, 6, true, 16000);
  StftConfig cfg = make_stft_config();
  SceneSpec spec;
  spec.target_doa_deg = 0.0;
  spec.noise_doas_deg = {150.0};
  spec.noise_kinds = {"noise"};
  spec.snr_db = 0.0;
  spec.duration_s = 1.0;
  spec.seed = 21;
  Scene sc = render_scene(geom, spec);
  SpatialCovariance phi_n = estimate_covariance(analyze(sc.noise_multi, cfg));
  BinWeights w = ti_mvdr(phi_n, steering_atf(geom, cfg, 0.0));
  std::string wfile = d.file("mvdr.bkw");
  save_bin_weights(wfile, w, geom);

  std::string csv = d.file("bp.csv");
  CHECK(cli::run({"beampattern", "--weights", wfile, "--freq", "2000", "--out",
                  csv}) == 0);
  std::ifstream f(csv);
  std::string line;
  std::getline(f, line);
  double min_gain = 1e9, min_doa = -1.0;
  while (std::getline(f, line)) {
    double freq, doa, gain;
    char c;
    std::istringstream ss(line);
    ss >> freq >> c >> doa >> c >> gain;
    if (gain < min_gain) {
      min_gain = gain;
      min_doa = doa;
    }
  }
  CHECK(circular_diff_deg(min_doa, 150.0) <= 5.0);
}

TEST_CASE("oracle-eval writes per-scene rows plus a mean row") {
  TempDir d("oracle");
  CHECK(cli::run({"simulate", "--out", d.str(), "--n", "3", "--bucket", "45-90",
                  "--seed", "11", "--duration", "0.5", "--snr-min", "0",
                  "--snr-max", "0"}) == 0);
  std::string csv = d.file("metrics.csv");
  CHECK(cli::run({"oracle-eval", "--data", d.str(), "--out", csv}) == 0);
  CHECK(count_lines(csv) == 1 + 3 + 1);

  // The least-noisy in-scope scenes must not be degraded by more than 0.5 dB.
  TempDir clean("oracle_clean");
  CHECK(cli::run({"simulate", "--out", clean.str(), "--n", "2", "--bucket",
                  "45-90", "--seed", "12", "--duration", "0.5", "--snr-min",
                  "10", "--snr-max", "10"}) == 0);
  std::string csv2 = clean.file("metrics.csv");
  CHECK(cli::run({"oracle-eval", "--data", clean.str(), "--out", csv2}) == 0);
  std::ifstream f(csv2);
  std::string line, mean_line;
  std::getline(f, line);
  while (std::getline(f, line))
    if (!line.empty()) mean_line = line;
  REQUIRE(mean_line.substr(0, 5) == "mean,");
  std::istringstream ss(mean_line.substr(5));
  char c;
  double si_noisy, si_mvdr, si_mwf;
  ss >> c >> si_noisy >> c >> si_mvdr >> c >> si_mwf;
  CHECK(si_mvdr >= si_noisy - 0.5);
  CHECK(si_mwf >= si_noisy - 0.5);
}

TEST_CASE("train then evaluate runs end to end with config precedence") {
  TempDir d("train");
  CHECK(cli::run({"simulate", "--out", d.str(), "--n", "4", "--bucket", "45-90",
                  "--seed", "5", "--duration", "0.4", "--snr-min", "0",
                  "--snr-max", "5"}) == 0);

  // Config asks for 5 epochs; the flag overrides it down to 1.
  std::string cfg_path = d.file("cfg.json");
  {
    std::ofstream cf(cfg_path);
    cf << "{\"epochs\":5,\"P\":4,\"hidden\":8,\"context\":0,\"Q\":1}";
  }
  std::string run_dir = d.file("run");
  CHECK(cli::run({"train", "--data", d.str(), "--out", run_dir, "--regime",
                  "full-free", "--config", cfg_path, "--epochs", "1", "--batch",
                  "2", "--quiet"}) == 0);
  CHECK(fs::exists(fs::path(run_dir) / "best.ckpt"));
  CHECK(fs::exists(fs::path(run_dir) / "dictionary.bkd"));
  CHECK(count_lines((fs::path(run_dir) / "train_log.csv").string()) == 1 + 1);

  taylor::Checkpoint ck =
      taylor::load_checkpoint((fs::path(run_dir) / "best.ckpt").string());
  CHECK(ck.model.cfg.num_beams == 4);  // from config file
  CHECK(ck.model.cfg.order == 1);
  CHECK(ck.model.cfg.epochs == 1);  // flag wins over config

  std::string csv = d.file("eval.csv");
  CHECK(cli::run({"evaluate", "--data", d.str(), "--ckpt",
                  (fs::path(run_dir) / "best.ckpt").string(), "--out", csv}) == 0);
  CHECK(count_lines(csv) == 1 + 4 + 1);
}

TEST_CASE("unknown config keys are rejected") {
  TempDir d("badcfg");
  CHECK(cli::run({"simulate", "--out", d.str(), "--n", "2", "--bucket", "45-90",
                  "--seed", "5", "--duration", "0.3"}) == 0);
  std::string cfg_path = d.file("cfg.json");
  {
    std::ofstream cf(cfg_path);
    cf << "{\"epochz\":5}";
  }
  CHECK(cli::run({"train", "--data", d.str(), "--out", d.file("run"), "--config",
                  cfg_path, "--quiet"}) != 0);
}

TEST_CASE("evaluate with a missing manifest fails cleanly") {
  TempDir d("noman");
  CHECK(cli::run({"oracle-eval", "--data", d.str(), "--out", d.file("x.csv")}) != 0);
  CHECK_FALSE(fs::exists(d.file("x.csv")));
}

TEST_CASE("gradcheck command reports success") {
  CHECK(cli::run({"gradcheck"}) == 0);
}

}  // TEST_SUITE
