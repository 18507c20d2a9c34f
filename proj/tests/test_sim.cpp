#include "doctest.h"

#include <cmath>

#include "beamkit/sim.hpp"

using namespace beamkit;

namespace {
ArrayGeometry paper_array() { return circular_array(0.0425, 6, true, 16000); }

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / x.size());
}
}  // namespace

TEST_SUITE("sim") {

TEST_CASE("sources are deterministic per (kind, seed)") {
  for (const char* kind : {"noise", "pink", "tonal", "speechlike"}) {
    std::vector<double> a = synth_source(kind, 0.5, 16000, 42);
    std::vector<double> b = synth_source(kind, 0.5, 16000, 42);
    CHECK(a == b);
    std::vector<double> c = synth_source(kind, 0.5, 16000, 43);
    CHECK(a != c);
  }
}

TEST_CASE("white noise has unit RMS and near-zero mean over 4 s") {
  std::vector<double> x = synth_source("noise", 4.0, 16000, 7);
  CHECK(rms(x) == doctest::Approx(1.0).epsilon(0.01));
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= x.size();
  CHECK(std::fabs(mean) < 0.01);
}

TEST_CASE("tonal source peaks at the 200 Hz bin") {
  std::vector<double> x = synth_source("tonal", 2.0, 16000, 3);
  StftConfig cfg = make_stft_config();
  Spectrogram s = analyze_mono(x, cfg);
  std::vector<double> mean_mag(s.bins, 0.0);
  for (int l = 0; l < s.frames; ++l)
    for (int k = 0; k < s.bins; ++k) mean_mag[k] += std::abs(s.at(l, k)) / s.frames;
  int f0_bin = 4;  // 200 Hz at 50 Hz per bin
  int argmax = 0;
  for (int k = 1; k < s.bins; ++k)
    if (mean_mag[k] > mean_mag[argmax]) argmax = k;
  CHECK(argmax == f0_bin);
  // The fundamental dominates everything at least two bins away from it and
  // from every harmonic by 20 dB; directly adjacent bins sit inside the
  // sqrt-Hann mainlobe and the harmonics are part of the signal.
  for (int k = 0; k < s.bins; ++k) {
    bool near_harmonic = false;
    for (int h = 1; h <= 10; ++h)
      if (std::abs(k - h * f0_bin) < 2) near_harmonic = true;
    if (near_harmonic) continue;
    CHECK(20.0 * std::log10(mean_mag[f0_bin] / (mean_mag[k] + 1e-12)) >= 20.0);
  }
}

TEST_CASE("speechlike source carries low-rate amplitude modulation") {
  std::vector<double> x = synth_source("speechlike", 2.0, 16000, 5);
  // 50 ms windows: syllabic modulation should swing the local RMS widely.
  size_t w = 800;
  double lo = 1e9, hi = 0.0;
  for (size_t start = 0; start + w <= x.size(); start += w) {
    std::vector<double> seg(x.begin() + start, x.begin() + start + w);
    double r = rms(seg);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  CHECK(hi / lo > 2.0);
}

TEST_CASE("unknown source kind is rejected") {
  CHECK_THROWS_AS(synth_source("chirp", 1.0, 16000, 0), InvalidArgument);
}

TEST_CASE("spatialize passes the reference channel through unchanged") {
  ArrayGeometry g = paper_array();
  std::vector<double> x = synth_source("speechlike", 0.5, 16000, 21);
  Waveform y = spatialize(g, x, 123.0);
  REQUIRE(y.size() == 7);
  double err = 0.0;
  for (size_t i = 0; i < x.size(); ++i)
    err += (y[g.reference_index][i] - x[i]) * (y[g.reference_index][i] - x[i]);
  CHECK(std::sqrt(err / x.size()) < 1e-12);
}

TEST_CASE("cross-correlation lag matches the analytic delay") {
  // Radius chosen so the delay is an integer number of samples.
  double radius = 4.0 * 343.0 / 16000.0;
  ArrayGeometry g = circular_array(radius, 6, true, 16000);
  std::vector<double> x = synth_source("noise", 0.5, 16000, 9);
  Waveform y = spatialize(g, x, 0.0);
  // Mic 0 sits at (r, 0, 0): it leads the center by 4 samples at DOA 0.
  int best_lag = 0;
  double best = -1e18;
  for (int lag = -8; lag <= 8; ++lag) {
    double acc = 0.0;
    for (size_t i = 100; i + 100 < x.size(); ++i) {
      int64_t j = static_cast<int64_t>(i) + lag;
      acc += y[6][i] * y[0][j];
    }
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == std::lround(-radius / 343.0 * 16000.0));
}

TEST_CASE("spatialized sine phases match the steering vector") {
  ArrayGeometry g = paper_array();
  StftConfig cfg = make_stft_config();
  for (double f : {1000.0, 3000.0, 5500.0}) {
    size_t n = 8000;
    std::vector<double> x(n);
    for (size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * kPi * f * i / 16000.0);
    double doa = 75.0;
    Waveform y = spatialize(g, x, doa);
    MultichannelSpectrogram s = analyze(y, cfg);
    int k = static_cast<int>(f / 50.0);
    int l = s.frames / 2;
    SteeringVector h = steering_vector(g, doa, f);
    for (int m = 0; m < 7; ++m) {
      cplx ratio = s.at(l, k, m) / s.at(l, k, g.reference_index);
      double dphi = std::arg(ratio * std::conj(h.elements[m]));
      CHECK(std::fabs(dphi) < 0.02);
    }
  }
}

TEST_CASE("mix_at_snr hits the requested reference-channel SNR exactly") {
  ArrayGeometry g = paper_array();
  std::vector<double> t = synth_source("speechlike", 0.5, 16000, 1);
  std::vector<double> nz = synth_source("noise", 0.5, 16000, 2);
  Waveform tm = spatialize(g, t, 10.0);
  Waveform nm = spatialize(g, nz, 200.0);
  for (double snr : {-5.0, 0.0, 10.0}) {
    Scene sc = mix_at_snr(g, tm, {nm}, snr);
    double got = 20.0 * std::log10(rms(sc.clean_ref) / rms(sc.noise_ref));
    CHECK(std::fabs(got - snr) < 1e-9);
    // Mixture decomposes sample-exactly.
    for (int m = 0; m < 7; ++m)
      for (size_t i = 0; i < sc.mixture[m].size(); ++i)
        CHECK(sc.mixture[m][i] == sc.target_multi[m][i] + sc.noise_multi[m][i]);
  }
}

TEST_CASE("pre-scaling the noise does not change the scene") {
  ArrayGeometry g = paper_array();
  Waveform tm = spatialize(g, synth_source("speechlike", 0.25, 16000, 1), 10.0);
  Waveform nm = spatialize(g, synth_source("noise", 0.25, 16000, 2), 200.0);
  Waveform nm7 = nm;
  for (auto& ch : nm7)
    for (double& v : ch) v *= 7.0;
  Scene a = mix_at_snr(g, tm, {nm}, 3.0);
  Scene b = mix_at_snr(g, tm, {nm7}, 3.0);
  for (int m = 0; m < 7; ++m)
    for (size_t i = 0; i < a.mixture[m].size(); ++i)
      CHECK(a.mixture[m][i] == doctest::Approx(b.mixture[m][i]).epsilon(1e-12));
}

TEST_CASE("degenerate scenes are rejected") {
  ArrayGeometry g = paper_array();
  Waveform silent(7, std::vector<double>(1000, 0.0));
  Waveform live = spatialize(g, synth_source("noise", 1000.0 / 16000.0, 16000, 3), 0.0);
  CHECK_THROWS_AS(mix_at_snr(g, silent, {live}, 0.0), NumericalError);
  CHECK_THROWS_AS(mix_at_snr(g, live, {silent}, 0.0), NumericalError);
}

TEST_CASE("40 dB scenes measure about 40 dB SI-SNR") {
  ArrayGeometry g = paper_array();
  SceneSpec spec;
  spec.target_doa_deg = 0.0;
  spec.noise_doas_deg = {120.0};
  spec.noise_kinds = {"noise"};
  spec.snr_db = 40.0;
  spec.duration_s = 1.0;
  spec.seed = 4;
  Scene sc = render_scene(g, spec);
  double si = si_snr_db(sc.clean_ref, sc.mixture[g.reference_index]);
  CHECK(si == doctest::Approx(40.0).epsilon(0.0025));
}

TEST_CASE("scenes render bit-identically for the same spec") {
  ArrayGeometry g = paper_array();
  SceneSpec spec;
  spec.target_doa_deg = 33.0;
  spec.noise_doas_deg = {100.0, 250.0};
  spec.noise_kinds = {"noise", "tonal"};
  spec.snr_db = 2.0;
  spec.duration_s = 0.3;
  spec.seed = 17;
  Scene a = render_scene(g, spec);
  Scene b = render_scene(g, spec);
  CHECK(a.mixture == b.mixture);
  CHECK(a.clean_ref == b.clean_ref);
}

TEST_CASE("diffuse tail changes the scene but keeps it finite") {
  ArrayGeometry g = paper_array();
  SceneSpec spec;
  spec.target_doa_deg = 33.0;
  spec.noise_doas_deg = {100.0};
  spec.noise_kinds = {"noise"};
  spec.snr_db = 0.0;
  spec.duration_s = 0.3;
  spec.seed = 17;
  Scene dry = render_scene(g, spec);
  spec.diffuse_tail = true;
  Scene wet = render_scene(g, spec);
  CHECK(dry.mixture != wet.mixture);
  for (const auto& ch : wet.mixture)
    for (double v : ch) CHECK(std::isfinite(v));
}

TEST_CASE("bucketed datasets respect the DOA-difference range") {
  DatasetSpec ds;
  ds.bucket = "0-15";
  ds.num_scenes = 200;
  ds.seed = 5;
  for (const SceneSpec& s : make_dataset_specs(ds)) {
    REQUIRE(s.noise_doas_deg.size() == 1);
    double d = circular_diff_deg(s.target_doa_deg, s.noise_doas_deg[0]);
    CHECK(d >= 0.0);
    CHECK(d <= 15.0);
  }
  ds.bucket = "90-180";
  for (const SceneSpec& s : make_dataset_specs(ds)) {
    double d = circular_diff_deg(s.target_doa_deg, s.noise_doas_deg[0]);
    CHECK(d >= 90.0);
    CHECK(d <= 180.0);
  }
}

TEST_CASE("dataset specs are reproducible per seed") {
  DatasetSpec ds;
  ds.bucket = "90-180";
  ds.num_scenes = 100;
  ds.seed = 77;
  auto a = make_dataset_specs(ds);
  auto b = make_dataset_specs(ds);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].target_doa_deg == b[i].target_doa_deg);
    CHECK(a[i].noise_doas_deg == b[i].noise_doas_deg);
    CHECK(a[i].seed == b[i].seed);
  }
}

TEST_CASE("set-B draws 1-3 noises, each count at least 20%") {
  DatasetSpec ds;
  ds.bucket = "set-B";
  ds.num_scenes = 1000;
  ds.seed = 123;
  int counts[4] = {0, 0, 0, 0};
  for (const SceneSpec& s : make_dataset_specs(ds)) {
    REQUIRE(s.noise_doas_deg.size() >= 1);
    REQUIRE(s.noise_doas_deg.size() <= 3);
    counts[s.noise_doas_deg.size()]++;
  }
  for (int c : {1, 2, 3}) CHECK(counts[c] >= 200);
}

TEST_CASE("unknown bucket is rejected") {
  DatasetSpec ds;
  ds.bucket = "30-60";
  ds.num_scenes = 1;
  CHECK_THROWS_AS(make_dataset_specs(ds), InvalidArgument);
}

TEST_CASE("SI-SNR clamps perfect and scaled estimates to +60 dB") {
  std::vector<double> s = synth_source("noise", 0.25, 16000, 8);
  CHECK(si_snr_db(s, s) == 60.0);
  std::vector<double> scaled = s;
  for (double& v : scaled) v *= 3.7;
  CHECK(si_snr_db(s, scaled) == 60.0);
}

TEST_CASE("orthogonal noise at power ratio 10 gives exactly 10 dB") {
  size_t n = 16000;
  std::vector<double> s(n), e(n);
  for (size_t i = 0; i < n; ++i) {
    s[i] = std::sin(2.0 * kPi * 50.0 * i / 16000.0);
    e[i] = s[i] + std::sqrt(0.1) * std::cos(2.0 * kPi * 50.0 * i / 16000.0);
  }
  CHECK(si_snr_db(s, e) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("SI-SNR is scale invariant in the estimate") {
  Rng rng(3);
  std::vector<double> s(4000), e(4000);
  for (size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.normal();
    e[i] = s[i] + 0.5 * rng.normal();
  }
  double base = si_snr_db(s, e);
  for (double a : {0.001, 0.75, 42.0}) {
    std::vector<double> scaled = e;
    for (double& v : scaled) v *= a;
    CHECK(std::fabs(si_snr_db(s, scaled) - base) < 1e-9);
  }
}

TEST_CASE("SI-SNR error contracts") {
  std::vector<double> z(100, 0.0), x(100, 1.0), shorter(50, 1.0);
  CHECK_THROWS_AS(si_snr_db(z, x), InvalidArgument);
  CHECK_THROWS_AS(si_snr_db(x, shorter), ShapeError);
}

TEST_CASE("scene spec JSON round trip rejects garbage") {
  SceneSpec spec;
  spec.target_doa_deg = 12.0;
  spec.noise_doas_deg = {50.0, 300.0};
  spec.noise_kinds = {"pink", "tonal"};
  spec.snr_db = -2.5;
  spec.duration_s = 1.5;
  spec.seed = 99;
  SceneSpec back = scene_spec_from_json(scene_spec_to_json(spec));
  CHECK(back.target_doa_deg == spec.target_doa_deg);
  CHECK(back.noise_doas_deg == spec.noise_doas_deg);
  CHECK(back.noise_kinds == spec.noise_kinds);
  CHECK(back.seed == spec.seed);
  CHECK_THROWS_AS(scene_spec_from_json("not json"), IoError);
}

}  // TEST_SUITE
