#include "beamkit/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>

namespace beamkit {

namespace {

// The FFTW planner is not thread-safe; executing a plan on its own buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(static_cast<size_t>(n) / 2 + 1);
    fwd_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
    if (!fwd_ || !inv_) throw NumericalError("fftw plan creation failed");
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  // in: n reals; out: n/2+1 complex, unnormalized.
  void forward(const double* in, cplx* out) {
    std::memcpy(real_, in, sizeof(double) * n_);
    fftw_execute(fwd_);
    int k = n_ / 2 + 1;
    for (int i = 0; i < k; ++i) out[i] = cplx(spec_[i][0], spec_[i][1]);
  }

  // in: n/2+1 complex; out: n reals, scaled by 1/n.
  void inverse(const cplx* in, double* out) {
    int k = n_ / 2 + 1;
    for (int i = 0; i < k; ++i) {
      spec_[i][0] = in[i].real();
      spec_[i][1] = in[i].imag();
    }
    fftw_execute(inv_);
    double scale = 1.0 / n_;
    for (int i = 0; i < n_; ++i) out[i] = real_[i] * scale;
  }

 private:
  int n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

}  // namespace

std::vector<double> sqrt_hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = std::sqrt(0.5 * (1.0 - std::cos(2.0 * kPi * i / n)));
  return w;
}

void StftConfig::validate() const {
  if (win_len <= 0 || hop <= 0 || fft_size <= 0)
    throw InvalidArgument("stft: sizes must be positive");
  if (win_len % hop != 0) throw InvalidArgument("stft: hop must divide win_len");
  if (fft_size < win_len) throw InvalidArgument("stft: fft_size < win_len");
  if (static_cast<int>(window.size()) != win_len)
    throw InvalidArgument("stft: window length mismatch");
  if (!(compression_power > 0.0) || compression_power > 1.0)
    throw InvalidArgument("stft: compression power must be in (0, 1]");
}

StftConfig make_stft_config(int win_len, int hop, int fft_size,
                            double compression_power) {
  StftConfig cfg;
  cfg.win_len = win_len;
  cfg.hop = hop;
  cfg.fft_size = fft_size;
  cfg.compression_power = compression_power;
  cfg.window = sqrt_hann_window(win_len);
  cfg.validate();
  return cfg;
}

MultichannelSpectrogram analyze(const Waveform& wave, const StftConfig& cfg) {
  cfg.validate();
  if (wave.empty()) throw InvalidArgument("analyze: no channels");
  size_t n = wave[0].size();
  for (const auto& ch : wave)
    if (ch.size() != n) throw ShapeError("analyze: channel length mismatch");
  if (n < static_cast<size_t>(cfg.win_len))
    throw InvalidArgument("analyze: signal shorter than one window");

  int channels = static_cast<int>(wave.size());
  int frames = static_cast<int>((n - cfg.win_len) / cfg.hop) + 1;
  int bins = cfg.num_bins();

  MultichannelSpectrogram spec;
  spec.frames = frames;
  spec.bins = bins;
  spec.channels = channels;
  spec.config = cfg;
  spec.data.assign(static_cast<size_t>(frames) * bins * channels, cplx());

  RealFft fft(cfg.fft_size);
  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<cplx> out(bins);
  for (int m = 0; m < channels; ++m) {
    const double* x = wave[m].data();
    for (int l = 0; l < frames; ++l) {
      const double* seg = x + static_cast<size_t>(l) * cfg.hop;
      for (int i = 0; i < cfg.win_len; ++i) frame[i] = seg[i] * cfg.window[i];
      for (int i = cfg.win_len; i < cfg.fft_size; ++i) frame[i] = 0.0;
      fft.forward(frame.data(), out.data());
      for (int k = 0; k < bins; ++k) spec.at(l, k, m) = out[k];
    }
  }
  return spec;
}

Spectrogram analyze_mono(const std::vector<double>& wave, const StftConfig& cfg) {
  MultichannelSpectrogram mc = analyze(Waveform{wave}, cfg);
  Spectrogram s;
  s.frames = mc.frames;
  s.bins = mc.bins;
  s.config = cfg;
  s.data = std::move(mc.data);
  return s;
}

namespace {

std::vector<double> synth_channel(const cplx* data, int frames, int bins,
                                  int channels, int channel, const StftConfig& cfg,
                                  RealFft& fft) {
  size_t out_len = static_cast<size_t>(frames - 1) * cfg.hop + cfg.win_len;
  std::vector<double> acc(out_len, 0.0);
  std::vector<double> frame(cfg.fft_size);
  std::vector<cplx> in(bins);
  // Steady-state overlap-add constant; 1 for sqrt-Hann at 50% overlap.
  // Edge samples covered by fewer frames stay attenuated by design.
  double w2 = 0.0;
  for (double w : cfg.window) w2 += w * w;
  double cola = w2 / cfg.hop;
  for (int l = 0; l < frames; ++l) {
    for (int k = 0; k < bins; ++k)
      in[k] = data[(static_cast<size_t>(l) * bins + k) * channels + channel];
    fft.inverse(in.data(), frame.data());
    size_t base = static_cast<size_t>(l) * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i)
      acc[base + i] += frame[i] * cfg.window[i] / cola;
  }
  return acc;
}

}  // namespace

Waveform synthesize(const MultichannelSpectrogram& spec) {
  spec.config.validate();
  if (spec.bins != spec.config.num_bins())
    throw ShapeError("synthesize: bin count does not match config");
  if (spec.frames < 1 || spec.channels < 1)
    throw ShapeError("synthesize: empty spectrogram");
  if (spec.data.size() !=
      static_cast<size_t>(spec.frames) * spec.bins * spec.channels)
    throw ShapeError("synthesize: data size mismatch");

  RealFft fft(spec.config.fft_size);
  Waveform out(spec.channels);
  for (int m = 0; m < spec.channels; ++m)
    out[m] = synth_channel(spec.data.data(), spec.frames, spec.bins,
                           spec.channels, m, spec.config, fft);
  return out;
}

std::vector<double> synthesize_mono(const Spectrogram& spec) {
  MultichannelSpectrogram mc;
  mc.frames = spec.frames;
  mc.bins = spec.bins;
  mc.channels = 1;
  mc.config = spec.config;
  mc.data = spec.data;
  return synthesize(mc)[0];
}

void compress_inplace(std::vector<cplx>& data, double power) {
  if (!(power > 0.0) || power > 1.0)
    throw InvalidArgument("compress: power must be in (0, 1]");
  if (power == 1.0) return;
  for (cplx& z : data) {
    double mag = std::abs(z);
    if (mag > 0.0) z *= std::pow(mag, power - 1.0);
  }
}

namespace {
void expand_inplace(std::vector<cplx>& data, double power) {
  if (!(power > 0.0) || power > 1.0)
    throw InvalidArgument("decompress: power must be in (0, 1]");
  if (power == 1.0) return;
  double inv = 1.0 / power;
  for (cplx& z : data) {
    double mag = std::abs(z);
    if (mag > 0.0) z *= std::pow(mag, inv - 1.0);
  }
}
}  // namespace

MultichannelSpectrogram compress(const MultichannelSpectrogram& spec, double power) {
  MultichannelSpectrogram out = spec;
  compress_inplace(out.data, power);
  return out;
}

MultichannelSpectrogram decompress(const MultichannelSpectrogram& spec, double power) {
  MultichannelSpectrogram out = spec;
  expand_inplace(out.data, power);
  return out;
}

Spectrogram compress(const Spectrogram& spec, double power) {
  Spectrogram out = spec;
  compress_inplace(out.data, power);
  return out;
}

Spectrogram decompress(const Spectrogram& spec, double power) {
  Spectrogram out = spec;
  expand_inplace(out.data, power);
  return out;
}

}  // namespace beamkit
