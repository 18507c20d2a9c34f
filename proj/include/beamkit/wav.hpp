// Minimal RIFF/WAVE reader and writer: PCM16 and IEEE float32, any channel
// count, interleaved on disk, channel-major in memory.
#ifndef BEAMKIT_WAV_HPP
#define BEAMKIT_WAV_HPP

#include <string>
#include <vector>

#include "beamkit/stft.hpp"

namespace beamkit {

enum class WavFormat { Pcm16, Float32 };

struct WavData {
  double sample_rate = 16000.0;
  Waveform channels;
};

WavData read_wav(const std::string& path);

void write_wav(const std::string& path, const Waveform& channels,
               double sample_rate, WavFormat format = WavFormat::Float32);

}  // namespace beamkit

#endif  // BEAMKIT_WAV_HPP
