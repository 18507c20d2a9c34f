// STFT front/back end: framing, forward/inverse transform with a square-root
// Hann window, and magnitude compression. Forward FFT is unnormalized, the
// inverse carries 1/fft_size. Frames are left-aligned.
#ifndef BEAMKIT_STFT_HPP
#define BEAMKIT_STFT_HPP

#include <vector>

#include "beamkit/common.hpp"

namespace beamkit {

struct StftConfig {
  int win_len = 320;   // 20 ms at 16 kHz
  int hop = 160;       // 50% overlap
  int fft_size = 320;  // 161 one-sided bins
  double compression_power = 0.5;
  std::vector<double> window;  // sqrt-Hann(win_len), filled by make_stft_config

  int num_bins() const { return fft_size / 2 + 1; }
  void validate() const;
};

StftConfig make_stft_config(int win_len = 320, int hop = 160, int fft_size = 320,
                            double compression_power = 0.5);

// Periodic square-root Hann; squares overlap-add to exactly 1 at 50% hop.
std::vector<double> sqrt_hann_window(int n);

// M-channel waveform, channel-major: wave[m] is one channel.
using Waveform = std::vector<std::vector<double>>;

struct MultichannelSpectrogram {
  int frames = 0;    // L
  int bins = 0;      // K
  int channels = 0;  // M
  StftConfig config;
  std::vector<cplx> data;  // index ((l * bins) + k) * channels + m

  cplx& at(int l, int k, int m) {
    return data[(static_cast<size_t>(l) * bins + k) * channels + m];
  }
  const cplx& at(int l, int k, int m) const {
    return data[(static_cast<size_t>(l) * bins + k) * channels + m];
  }
};

// Single-channel T-F representation; shares layout with the M=1 case.
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  StftConfig config;
  std::vector<cplx> data;  // index l * bins + k

  cplx& at(int l, int k) { return data[static_cast<size_t>(l) * bins + k]; }
  const cplx& at(int l, int k) const { return data[static_cast<size_t>(l) * bins + k]; }
};

// Per-channel windowed one-sided FFT. L = floor((n - win_len)/hop) + 1.
// Throws if any channel is shorter than one window.
MultichannelSpectrogram analyze(const Waveform& wave, const StftConfig& cfg);
Spectrogram analyze_mono(const std::vector<double>& wave, const StftConfig& cfg);

// Weighted overlap-add with the same sqrt-Hann window; the interior of an
// analyze() round trip is reproduced to machine precision.
Waveform synthesize(const MultichannelSpectrogram& spec);
std::vector<double> synthesize_mono(const Spectrogram& spec);

// Magnitude |X| -> |X|^power, phase preserved. decompress applies 1/power.
void compress_inplace(std::vector<cplx>& data, double power);
MultichannelSpectrogram compress(const MultichannelSpectrogram& spec, double power);
MultichannelSpectrogram decompress(const MultichannelSpectrogram& spec, double power);
Spectrogram compress(const Spectrogram& spec, double power);
Spectrogram decompress(const Spectrogram& spec, double power);

}  // namespace beamkit

#endif  // BEAMKIT_STFT_HPP
