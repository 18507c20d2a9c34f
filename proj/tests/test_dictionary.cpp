#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstdio>
#include <vector>

#include "beamkit/beamspace.hpp"
#include "beamkit/dictionary.hpp"

using namespace beamkit;

namespace {

ArrayGeometry paper_array() { return circular_array(0.0425, 6, true, 16000); }

// Independent oracle: plain Gaussian elimination with partial pivoting,
// no shared code with the Eigen-backed implementation path.
std::vector<cplx> gauss_solve(std::vector<cplx> a, std::vector<cplx> b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
    std::swap(b[col], b[piv]);
    for (int r = col + 1; r < n; ++r) {
      cplx f = a[r * n + col] / a[col * n + col];
      for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<cplx> x(n);
  for (int r = n - 1; r >= 0; --r) {
    cplx acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a[r * n + c] * x[c];
    x[r] = acc / a[r * n + r];
  }
  return x;
}

double distortionless_error(const BeamDictionary& dict, const StftConfig& cfg) {
  double worst = 0.0;
  for (int k = 0; k < dict.bins; ++k) {
    double f = k * dict.geometry.sample_rate / cfg.fft_size;
    for (int p = 0; p < dict.num_beams; ++p) {
      SteeringVector h = steering_vector(dict.geometry, dict.doa_grid_deg[p], f);
      cplx acc = 0.0;
      for (int m = 0; m < dict.channels; ++m)
        acc += std::conj(dict.at(k, p, m)) * h.elements[m];
      worst = std::max(worst, std::abs(acc - cplx(1.0, 0.0)));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("dictionary") {

TEST_CASE("uniform DOA grid") {
  std::vector<double> g36 = uniform_doa_grid(36);
  REQUIRE(g36.size() == 36);
  for (int p = 0; p < 36; ++p) CHECK(g36[p] == doctest::Approx(10.0 * p));
  CHECK(uniform_doa_grid(1) == std::vector<double>{0.0});
  std::vector<double> g4 = uniform_doa_grid(4);
  CHECK(g4 == std::vector<double>{0.0, 90.0, 180.0, 270.0});
  CHECK_THROWS_AS(uniform_doa_grid(0), InvalidArgument);
}

TEST_CASE("identity coherence reduces to delay-and-sum h/M") {
  ArrayGeometry geom = paper_array();
  SteeringVector h = steering_vector(geom, 40.0, 2000.0);
  CoherenceMatrix eye;
  eye.m = 7;
  eye.entries.assign(49, cplx());
  for (int i = 0; i < 7; ++i) eye.entries[i * 7 + i] = cplx(1.0, 0.0);
  std::vector<cplx> b = fixed_beam(h, eye, 1e-4);
  for (int m = 0; m < 7; ++m)
    CHECK(std::abs(b[m] - h.elements[m] / 7.0) < 1e-12);
}

TEST_CASE("fixed beams satisfy the distortionless constraint") {
  ArrayGeometry geom = paper_array();
  for (double f : {300.0, 1200.0, 5000.0}) {
    SteeringVector h = steering_vector(geom, 123.0, f);
    CoherenceMatrix gamma = diffuse_coherence(geom, f);
    std::vector<cplx> b = fixed_beam(h, gamma, 1e-4);
    cplx acc = 0.0;
    for (int m = 0; m < 7; ++m) acc += std::conj(b[m]) * h.elements[m];
    CHECK(std::abs(acc - cplx(1.0, 0.0)) < 1e-10);
  }
}

TEST_CASE("superdirective beam trades white-noise gain, against a hand solve") {
  ArrayGeometry geom = paper_array();
  double f = 2000.0, loading = 1e-4;
  SteeringVector h = steering_vector(geom, 0.0, f);
  CoherenceMatrix gamma = diffuse_coherence(geom, f);
  std::vector<cplx> b = fixed_beam(h, gamma, loading);

  // Independent route: Gaussian elimination on the loaded matrix.
  double tr = 7.0;
  std::vector<cplx> a(49);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j)
      a[i * 7 + j] = gamma.at(i, j) + (i == j ? cplx(loading * tr / 7.0, 0) : cplx());
  std::vector<cplx> x = gauss_solve(a, h.elements, 7);
  cplx denom = 0.0;
  for (int m = 0; m < 7; ++m) denom += std::conj(h.elements[m]) * x[m];
  for (int m = 0; m < 7; ++m)
    CHECK(std::abs(b[m] - x[m] / denom) < 1e-10);

  double norm2 = 0.0;
  for (const cplx& v : b) norm2 += std::norm(v);
  double wng = 1.0 / norm2;
  CHECK(wng < 7.0);   // below the DS optimum
  CHECK(wng > 0.05);  // loading keeps it finite
}

TEST_CASE("DS dictionary is h/M everywhere and distortionless") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config();
  BeamDictionary dict = build_fixed_dictionary(geom, cfg, DictRegime::FixedDs, 36);
  CHECK(distortionless_error(dict, cfg) < 1e-8);
  for (int k = 0; k < dict.bins; k += 13) {
    double f = k * geom.sample_rate / cfg.fft_size;
    for (int p = 0; p < 36; p += 7) {
      SteeringVector h = steering_vector(geom, dict.doa_grid_deg[p], f);
      for (int m = 0; m < 7; ++m)
        CHECK(std::abs(dict.at(k, p, m) - h.elements[m] / 7.0) < 1e-12);
    }
  }
}

TEST_CASE("DS dictionary at DC is all-ones over M") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config();
  BeamDictionary dict = build_fixed_dictionary(geom, cfg, DictRegime::FixedDs, 8);
  for (int p = 0; p < 8; ++p)
    for (int m = 0; m < 7; ++m)
      CHECK(std::abs(dict.at(0, p, m) - cplx(1.0 / 7.0, 0.0)) < 1e-12);
}

TEST_CASE("SD dictionary is distortionless across the band") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config();
  BeamDictionary dict = build_fixed_dictionary(geom, cfg, DictRegime::FixedSd, 36);
  CHECK(distortionless_error(dict, cfg) < 1e-8);
}

TEST_CASE("SD nulls the back half-plane deeper than DS at 500 Hz") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config();
  BeamDictionary ds = build_fixed_dictionary(geom, cfg, DictRegime::FixedDs, 4);
  BeamDictionary sd = build_fixed_dictionary(geom, cfg, DictRegime::FixedSd, 4);
  int k = 10;  // 500 Hz at 50 Hz per bin
  double f = k * geom.sample_rate / cfg.fft_size;
  auto rear_min = [&](const BeamDictionary& d) {
    std::vector<cplx> w(d.beam(k, 0), d.beam(k, 0) + 7);
    Beampattern bp = beampattern(w, geom, f, 1.0);
    double best = 1e9;
    for (size_t i = 0; i < bp.doas_deg.size(); ++i)
      if (bp.doas_deg[i] >= 150.0 && bp.doas_deg[i] <= 210.0)
        best = std::min(best, bp.gains[i]);
    return best;
  };
  CHECK(rear_min(sd) < rear_min(ds));
}

TEST_CASE("semi-learnable materializes to the SD dictionary at init") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config(64, 32, 64);  // small K for speed
  BeamDictionary sd = build_fixed_dictionary(geom, cfg, DictRegime::FixedSd, 12);
  TrainableDictionary semi = init_semi_learnable(geom, cfg, 12);
  BeamDictionary mat = semi.materialize();
  REQUIRE(mat.beams.size() == sd.beams.size());
  for (size_t i = 0; i < sd.beams.size(); ++i)
    CHECK(std::abs(mat.beams[i] - sd.beams[i]) < 1e-8);
}

TEST_CASE("factorized inverse stays Hermitian PSD after a perturbation") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config(64, 32, 64);
  TrainableDictionary semi = init_semi_learnable(geom, cfg, 4);
  Rng rng(5);
  for (double& v : semi.chol.factors->value.data) v += 0.3 * rng.normal();

  int m = semi.channels;
  for (int k = 0; k < semi.bins; ++k) {
    // Phi^-1 = U U^H from the lower triangle only.
    std::vector<cplx> u(m * m, cplx());
    for (int i = 0; i < m; ++i)
      for (int j = 0; j <= i; ++j)
        u[i * m + j] = cplx(semi.chol.factors->value.at(k, 2 * (i * m + j)),
                            semi.chol.factors->value.at(k, 2 * (i * m + j) + 1));
    // Hermitian by construction; check PSD via x^H (U U^H) x = |U^H x|^2 >= 0
    // on random probes.
    for (int probe = 0; probe < 8; ++probe) {
      std::vector<cplx> x(m);
      for (cplx& v : x) v = rng.normal_cplx();
      std::vector<cplx> uhx(m, cplx());
      for (int i = 0; i < m; ++i)
        for (int j = 0; j <= i; ++j) uhx[j] += std::conj(u[i * m + j]) * x[i];
      double quad = 0.0;
      for (const cplx& v : uhx) quad += std::norm(v);
      CHECK(quad >= -1e-8);
    }
  }
}

TEST_CASE("perturbing one bin's factors only changes that bin's beams") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config(64, 32, 64);
  TrainableDictionary semi = init_semi_learnable(geom, cfg, 6);
  BeamDictionary before = semi.materialize();
  int kperturb = 9;
  semi.chol.factors->value.at(kperturb, 0) += 0.25;
  BeamDictionary after = semi.materialize();
  for (int k = 0; k < semi.bins; ++k) {
    double diff = 0.0;
    for (int p = 0; p < semi.num_beams; ++p)
      for (int m = 0; m < semi.channels; ++m)
        diff = std::max(diff, std::abs(before.at(k, p, m) - after.at(k, p, m)));
    if (k == kperturb)
      CHECK(diff > 1e-6);
    else
      CHECK(diff == 0.0);
  }
}

TEST_CASE("full-learnable free regime initializes to SD exactly") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config(64, 32, 64);
  BeamDictionary sd = build_fixed_dictionary(geom, cfg, DictRegime::FixedSd, 6);
  TrainableDictionary free = init_full_learnable(geom, cfg, 6, false);
  BeamDictionary mat = free.materialize();
  for (size_t i = 0; i < sd.beams.size(); ++i)
    CHECK(mat.beams[i] == sd.beams[i]);
}

TEST_CASE("all learnable regimes match fixed-SD before training") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config(64, 32, 64);
  BeamDictionary sd = build_fixed_dictionary(geom, cfg, DictRegime::FixedSd, 6);
  for (bool keep_physics : {true, false}) {
    BeamDictionary mat =
        init_full_learnable(geom, cfg, 6, keep_physics).materialize();
    for (size_t i = 0; i < sd.beams.size(); ++i)
      CHECK(std::abs(mat.beams[i] - sd.beams[i]) < 1e-8);
  }
}

TEST_CASE("free regime parameter count is 2 K M P reals") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config(64, 32, 64);
  TrainableDictionary free = init_full_learnable(geom, cfg, 6, false);
  REQUIRE(free.params().size() == 1);
  CHECK(free.params()[0]->value.size() ==
        2ll * cfg.num_bins() * geom.num_mics() * 6);
}

TEST_CASE("after free-form training the distortionless identity is dropped") {
  // The invariant suite for the free regime must not assert B^H h = 1; a
  // perturbed free dictionary is still a valid dictionary.
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config(64, 32, 64);
  TrainableDictionary free = init_full_learnable(geom, cfg, 6, false);
  Rng rng(11);
  for (double& v : free.free_beams->value.data) v += 0.1 * rng.normal();
  BeamDictionary mat = free.materialize();
  double f = 10 * geom.sample_rate / cfg.fft_size;
  SteeringVector h = steering_vector(geom, mat.doa_grid_deg[2], f);
  cplx acc = 0.0;
  for (int m = 0; m < 7; ++m) acc += std::conj(mat.at(10, 2, m)) * h.elements[m];
  CHECK(std::abs(acc - cplx(1.0, 0.0)) > 1e-6);
  for (const cplx& v : mat.beams) CHECK(is_finite(v));
}

TEST_CASE("dictionary file round trip") {
  ArrayGeometry geom = paper_array();
  StftConfig cfg = make_stft_config(64, 32, 64);
  BeamDictionary dict = build_fixed_dictionary(geom, cfg, DictRegime::FixedSd, 5);
  std::string path = "test_dict_roundtrip.bkd";
  save_dictionary(path, dict);
  BeamDictionary back = load_dictionary(path);
  CHECK(back.bins == dict.bins);
  CHECK(back.channels == dict.channels);
  CHECK(back.num_beams == dict.num_beams);
  CHECK(back.regime == dict.regime);
  CHECK(back.doa_grid_deg == dict.doa_grid_deg);
  for (size_t i = 0; i < dict.beams.size(); ++i)
    CHECK(back.beams[i] == dict.beams[i]);
  std::remove(path.c_str());
}

}  // TEST_SUITE
