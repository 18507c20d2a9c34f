// Far-field scene synthesis: deterministic test sources, fractional-delay
// spatialization, exact SNR mixing, dataset generation over DOA-difference
// buckets, and the SI-SNR metric.
#ifndef BEAMKIT_SIM_HPP
#define BEAMKIT_SIM_HPP

#include <optional>
#include <string>
#include <vector>

#include "beamkit/array.hpp"
#include "beamkit/stft.hpp"

namespace beamkit {

struct SceneSpec {
  double target_doa_deg = 0.0;
  std::vector<double> noise_doas_deg;  // 1..3 entries
  double snr_db = 0.0;                 // at the reference mic
  double duration_s = 2.0;
  std::string target_kind = "speechlike";
  std::vector<std::string> noise_kinds;  // parallel to noise_doas_deg
  uint64_t seed = 0;
  // Optional exponentially decaying diffuse tail for robustness smoke tests.
  bool diffuse_tail = false;

  void validate() const;
};

struct Scene {
  Waveform mixture;       // M channels
  Waveform target_multi;  // spatialized target, M channels
  Waveform noise_multi;   // scaled summed noises, M channels
  std::vector<double> clean_ref;  // target at the reference mic
  std::vector<double> noise_ref;  // residual at the reference mic
  SceneSpec spec;
};

// Deterministic unit-RMS test sources: "speechlike" (amplitude-modulated
// filtered noise, ~4 Hz syllabic envelope), "tonal" (200 Hz harmonic stack
// with vibrato), "noise" (white), "pink".
std::vector<double> synth_source(const std::string& kind, double duration_s,
                                 double sample_rate, uint64_t seed);

// Plane-wave spatialization with a 64-tap Hann-windowed-sinc fractional
// delay per channel; the reference channel passes through unchanged.
Waveform spatialize(const ArrayGeometry& geom, const std::vector<double>& wave,
                    double doa_deg);

// Sums the noises, scales them so the reference-channel SNR is exact, and
// assembles mixture = target + scaled noise.
Scene mix_at_snr(const ArrayGeometry& geom, const Waveform& target,
                 const std::vector<Waveform>& noises, double snr_db);

Scene render_scene(const ArrayGeometry& geom, const SceneSpec& spec);

// DOA-difference buckets for single-noise evaluation sets, plus "set-B"
// with 1-3 noises at unconstrained DOAs.
struct DatasetSpec {
  std::string bucket = "set-B";  // "0-15", "15-45", "45-90", "90-180", "set-B"
  int num_scenes = 0;
  double snr_min_db = -5.0;
  double snr_max_db = 10.0;
  double duration_s = 2.0;
  std::vector<std::string> noise_kind_pool = {"noise", "pink", "tonal"};
  uint64_t seed = 0;
};

std::vector<SceneSpec> make_dataset_specs(const DatasetSpec& ds);
std::vector<Scene> make_dataset(const ArrayGeometry& geom, const DatasetSpec& ds);

// Scale-invariant SNR in dB, clamped to +-60.
double si_snr_db(const std::vector<double>& reference,
                 const std::vector<double>& estimate);

std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const std::string& text);

}  // namespace beamkit

#endif  // BEAMKIT_SIM_HPP
