#include "doctest.h"

#include <cmath>

#include "beamkit/stft.hpp"

using namespace beamkit;

namespace {

std::vector<double> seeded_signal(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST_SUITE("stft") {

TEST_CASE("default config gives 161 bins") {
  StftConfig cfg = make_stft_config();
  CHECK(cfg.num_bins() == 161);
  CHECK(cfg.win_len == 320);
  CHECK(cfg.hop == 160);
}

TEST_CASE("sqrt-Hann squares satisfy constant overlap-add") {
  StftConfig cfg = make_stft_config();
  // Interior samples are covered by exactly two frames at 50% overlap.
  for (int n = 0; n < cfg.hop; ++n) {
    double s = cfg.window[n] * cfg.window[n] +
               cfg.window[n + cfg.hop] * cfg.window[n + cfg.hop];
    CHECK(std::fabs(s - 1.0) < 1e-10);
  }
}

TEST_CASE("all-zero input gives all-zero spectrogram") {
  StftConfig cfg = make_stft_config();
  Waveform x(3, std::vector<double>(1600, 0.0));
  MultichannelSpectrogram s = analyze(x, cfg);
  CHECK(s.channels == 3);
  CHECK(s.frames == 9);
  for (const cplx& v : s.data) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("pure 1 kHz sine concentrates in bin 20") {
  StftConfig cfg = make_stft_config();
  size_t n = 16000;
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * kPi * 1000.0 * i / 16000.0);
  Spectrogram s = analyze_mono(x, cfg);
  std::vector<double> mean_mag(s.bins, 0.0);
  for (int l = 0; l < s.frames; ++l)
    for (int k = 0; k < s.bins; ++k) mean_mag[k] += std::abs(s.at(l, k)) / s.frames;
  double peak = mean_mag[20];
  for (int k = 0; k < s.bins; ++k) {
    if (std::abs(k - 20) < 3) continue;
    CHECK(20.0 * std::log10(peak / (mean_mag[k] + 1e-300)) >= 20.0);
  }
}

TEST_CASE("analyze/synthesize round trip is exact in the interior") {
  StftConfig cfg = make_stft_config();
  Waveform x = {seeded_signal(8000, 42), seeded_signal(8000, 43)};
  Waveform y = synthesize(analyze(x, cfg));
  for (size_t m = 0; m < x.size(); ++m) {
    double num = 0.0, den = 0.0;
    for (size_t i = cfg.win_len / 2; i + cfg.win_len / 2 < y[m].size(); ++i) {
      double d = y[m][i] - x[m][i];
      num += d * d;
      den += x[m][i] * x[m][i];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }
}

TEST_CASE("zero spectrogram synthesizes to zero") {
  StftConfig cfg = make_stft_config();
  MultichannelSpectrogram s;
  s.frames = 4;
  s.bins = cfg.num_bins();
  s.channels = 1;
  s.config = cfg;
  s.data.assign(static_cast<size_t>(4) * s.bins, cplx());
  Waveform out = synthesize(s);
  for (double v : out[0]) CHECK(v == 0.0);
}

TEST_CASE("single frame returns the doubly windowed input") {
  StftConfig cfg = make_stft_config();
  std::vector<double> x = seeded_signal(cfg.win_len, 7);
  std::vector<double> y = synthesize_mono(analyze_mono(x, cfg));
  REQUIRE(static_cast<int>(y.size()) == cfg.win_len);
  for (int i = 0; i < cfg.win_len; ++i)
    CHECK(y[i] == doctest::Approx(x[i] * cfg.window[i] * cfg.window[i]).epsilon(1e-9));
}

TEST_CASE("analyze rejects too-short signals") {
  StftConfig cfg = make_stft_config();
  Waveform x(1, std::vector<double>(200, 0.0));
  CHECK_THROWS_AS(analyze(x, cfg), InvalidArgument);
}

TEST_CASE("per-frame Parseval with one-sided bookkeeping") {
  StftConfig cfg = make_stft_config();
  std::vector<double> x = seeded_signal(3200, 99);
  Spectrogram s = analyze_mono(x, cfg);
  for (int l = 0; l < s.frames; ++l) {
    double time_energy = 0.0;
    for (int i = 0; i < cfg.win_len; ++i) {
      double w = x[static_cast<size_t>(l) * cfg.hop + i] * cfg.window[i];
      time_energy += w * w;
    }
    double spec_energy = std::norm(s.at(l, 0)) + std::norm(s.at(l, s.bins - 1));
    for (int k = 1; k < s.bins - 1; ++k) spec_energy += 2.0 * std::norm(s.at(l, k));
    spec_energy /= cfg.fft_size;
    CHECK(std::fabs(time_energy - spec_energy) / time_energy < 1e-9);
  }
}

TEST_CASE("analyze is linear") {
  StftConfig cfg = make_stft_config();
  std::vector<double> x = seeded_signal(2000, 1);
  std::vector<double> y = seeded_signal(2000, 2);
  double a = 1.7, b = -0.3;
  std::vector<double> z(x.size());
  for (size_t i = 0; i < z.size(); ++i) z[i] = a * x[i] + b * y[i];
  Spectrogram sx = analyze_mono(x, cfg), sy = analyze_mono(y, cfg),
              sz = analyze_mono(z, cfg);
  double scale = 0.0;
  for (const cplx& v : sz.data) scale = std::max(scale, std::abs(v));
  for (size_t i = 0; i < sz.data.size(); ++i)
    CHECK(std::abs(sz.data[i] - (a * sx.data[i] + b * sy.data[i])) < 1e-10 * scale);
}

TEST_CASE("compression with power one is the identity") {
  StftConfig cfg = make_stft_config();
  std::vector<double> x = seeded_signal(1000, 5);
  Spectrogram s = analyze_mono(x, cfg);
  Spectrogram c = compress(s, 1.0);
  for (size_t i = 0; i < s.data.size(); ++i) CHECK(s.data[i] == c.data[i]);
}

TEST_CASE("compression halves the exponent and keeps the phase") {
  Spectrogram s;
  s.frames = 1;
  s.bins = 1;
  s.config = make_stft_config();
  s.data = {std::polar(4.0, 1.234)};
  Spectrogram c = compress(s, 0.5);
  CHECK(std::abs(c.data[0]) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::arg(c.data[0]) == doctest::Approx(1.234).epsilon(1e-12));
}

TEST_CASE("compress/decompress round trip") {
  Rng rng(123);
  Spectrogram s;
  s.frames = 10;
  s.bins = 17;
  s.config = make_stft_config();
  s.data.resize(170);
  for (cplx& v : s.data) v = 3.0 * rng.normal_cplx();
  Spectrogram back = decompress(compress(s, 0.5), 0.5);
  for (size_t i = 0; i < s.data.size(); ++i)
    CHECK(std::abs(back.data[i] - s.data[i]) <= 1e-9 * std::abs(s.data[i]));
}

TEST_CASE("compression is monotone in magnitude") {
  Spectrogram s;
  s.frames = 1;
  s.bins = 4;
  s.config = make_stft_config();
  s.data = {cplx(0.1, 0), cplx(1.0, 0), cplx(10.0, 0), cplx(100.0, 0)};
  Spectrogram c = compress(s, 0.5);
  for (int k = 1; k < 4; ++k)
    CHECK(std::abs(c.data[k]) > std::abs(c.data[k - 1]));
}

TEST_CASE("invalid compression power is rejected") {
  Spectrogram s;
  s.frames = 1;
  s.bins = 1;
  s.config = make_stft_config();
  s.data = {cplx(1.0, 0.0)};
  CHECK_THROWS_AS(compress(s, 0.0), InvalidArgument);
  CHECK_THROWS_AS(compress(s, -0.5), InvalidArgument);
  CHECK_THROWS_AS(compress(s, 1.5), InvalidArgument);
}

}  // TEST_SUITE
