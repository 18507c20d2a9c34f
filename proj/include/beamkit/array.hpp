// Microphone array geometry, far-field steering vectors, and diffuse-field
// coherence. All quantities use a plane-wave model: sources in the horizontal
// plane, azimuth counterclockwise from +x in degrees.
#ifndef BEAMKIT_ARRAY_HPP
#define BEAMKIT_ARRAY_HPP

#include <array>
#include <string>
#include <vector>

#include "beamkit/common.hpp"

namespace beamkit {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

struct ArrayGeometry {
  std::vector<Vec3> mic_positions;  // meters
  int reference_index = 0;
  double sound_speed = kSoundSpeed;  // m/s
  double sample_rate = 16000.0;      // Hz

  // Parameters kept for JSON round-tripping of circular arrays; negative
  // radius marks a geometry not built by circular_array().
  double radius_m = -1.0;
  int n_ring = 0;
  bool with_center = false;

  int num_mics() const { return static_cast<int>(mic_positions.size()); }
  void validate() const;
};

struct SteeringVector {
  double freq_hz = 0.0;
  double doa_azimuth_deg = 0.0;
  std::vector<cplx> elements;  // M, unit magnitude, reference element = 1
};

struct CoherenceMatrix {
  double freq_hz = 0.0;
  int m = 0;
  std::vector<cplx> entries;  // M*M row-major, Hermitian, unit diagonal

  cplx at(int i, int j) const { return entries[static_cast<size_t>(i) * m + j]; }
};

// n_ring microphones uniformly spaced on a horizontal circle starting at
// azimuth 0, plus an optional center microphone which becomes the reference.
// Without a center mic the first ring mic is the reference.
ArrayGeometry circular_array(double radius_m, int n_ring, bool with_center,
                             double sample_rate);

// Plane-wave arrival delay of every mic relative to the reference mic, in
// seconds, for a source at the given azimuth (elevation 0). Negative delay
// means the mic receives the wavefront before the reference.
std::vector<double> relative_delays(const ArrayGeometry& geom, double doa_deg);

// h_m = exp(-j 2 pi f tau_m). Throws if freq_hz is above Nyquist.
SteeringVector steering_vector(const ArrayGeometry& geom, double doa_deg,
                               double freq_hz);

// Spherically isotropic diffuse field: entry (i,j) = sinc(2 pi f d_ij / c)
// with sinc(x) = sin(x)/x.
CoherenceMatrix diffuse_coherence(const ArrayGeometry& geom, double freq_hz);

std::string geometry_to_json(const ArrayGeometry& geom);
ArrayGeometry geometry_from_json(const std::string& text);

}  // namespace beamkit

#endif  // BEAMKIT_ARRAY_HPP
