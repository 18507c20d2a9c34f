#include "beamkit/array.hpp"

#include <cmath>
#include <sstream>

#include "nlohmann/json.hpp"

namespace beamkit {

void ArrayGeometry::validate() const {
  if (mic_positions.empty())
    throw InvalidArgument("array geometry needs at least one microphone");
  if (reference_index < 0 || reference_index >= num_mics())
    throw InvalidArgument("reference_index out of range");
  if (!(sound_speed > 0.0)) throw InvalidArgument("sound_speed must be > 0");
  if (!(sample_rate > 0.0)) throw InvalidArgument("sample_rate must be > 0");
  for (const Vec3& p : mic_positions) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw InvalidArgument("non-finite microphone coordinate");
  }
}

ArrayGeometry circular_array(double radius_m, int n_ring, bool with_center,
                             double sample_rate) {
  if (!(radius_m > 0.0)) throw InvalidArgument("circular_array: radius must be > 0");
  if (n_ring < 1) throw InvalidArgument("circular_array: need at least one ring mic");
  ArrayGeometry geom;
  geom.sample_rate = sample_rate;
  geom.radius_m = radius_m;
  geom.n_ring = n_ring;
  geom.with_center = with_center;
  for (int i = 0; i < n_ring; ++i) {
    double th = 2.0 * kPi * i / n_ring;
    geom.mic_positions.push_back({radius_m * std::cos(th), radius_m * std::sin(th), 0.0});
  }
  if (with_center) {
    geom.mic_positions.push_back({0.0, 0.0, 0.0});
    geom.reference_index = n_ring;
  } else {
    geom.reference_index = 0;
  }
  geom.validate();
  return geom;
}

std::vector<double> relative_delays(const ArrayGeometry& geom, double doa_deg) {
  geom.validate();
  double th = doa_deg * kPi / 180.0;
  // Unit vector from the array toward the source.
  double ux = std::cos(th), uy = std::sin(th);
  const Vec3& ref = geom.mic_positions[geom.reference_index];
  std::vector<double> tau(geom.num_mics());
  for (int m = 0; m < geom.num_mics(); ++m) {
    const Vec3& p = geom.mic_positions[m];
    double proj = (p.x - ref.x) * ux + (p.y - ref.y) * uy;
    // A mic further along u is closer to the source and receives earlier.
    tau[m] = -proj / geom.sound_speed;
  }
  return tau;
}

SteeringVector steering_vector(const ArrayGeometry& geom, double doa_deg,
                               double freq_hz) {
  if (freq_hz < 0.0 || freq_hz > geom.sample_rate / 2.0 + 1e-9)
    throw InvalidArgument("steering_vector: frequency outside [0, Nyquist]");
  std::vector<double> tau = relative_delays(geom, doa_deg);
  SteeringVector h;
  h.freq_hz = freq_hz;
  h.doa_azimuth_deg = doa_deg;
  h.elements.resize(tau.size());
  for (size_t m = 0; m < tau.size(); ++m) {
    double phase = -2.0 * kPi * freq_hz * tau[m];
    h.elements[m] = std::polar(1.0, phase);
  }
  h.elements[geom.reference_index] = cplx(1.0, 0.0);
  return h;
}

CoherenceMatrix diffuse_coherence(const ArrayGeometry& geom, double freq_hz) {
  geom.validate();
  if (freq_hz < 0.0) throw InvalidArgument("diffuse_coherence: negative frequency");
  int m = geom.num_mics();
  CoherenceMatrix g;
  g.freq_hz = freq_hz;
  g.m = m;
  g.entries.assign(static_cast<size_t>(m) * m, cplx(0.0, 0.0));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const Vec3& a = geom.mic_positions[i];
      const Vec3& b = geom.mic_positions[j];
      double d = std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                           (a.z - b.z) * (a.z - b.z));
      double x = 2.0 * kPi * freq_hz * d / geom.sound_speed;
      double v = (std::fabs(x) < 1e-12) ? 1.0 : std::sin(x) / x;
      g.entries[static_cast<size_t>(i) * m + j] = cplx(v, 0.0);
    }
  }
  return g;
}

std::string geometry_to_json(const ArrayGeometry& geom) {
  if (geom.radius_m <= 0.0)
    throw InvalidArgument("geometry_to_json: only circular arrays serialize");
  nlohmann::json j;
  j["radius_m"] = geom.radius_m;
  j["n_ring"] = geom.n_ring;
  j["with_center"] = geom.with_center;
  j["sample_rate"] = geom.sample_rate;
  j["sound_speed"] = geom.sound_speed;
  return j.dump();
}

ArrayGeometry geometry_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw IoError(std::string("geometry_from_json: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string k = it.key();
    if (k != "radius_m" && k != "n_ring" && k != "with_center" &&
        k != "sample_rate" && k != "sound_speed")
      throw IoError("geometry_from_json: unknown key '" + k + "'");
  }
  ArrayGeometry geom = circular_array(j.at("radius_m").get<double>(),
                                      j.at("n_ring").get<int>(),
                                      j.at("with_center").get<bool>(),
                                      j.at("sample_rate").get<double>());
  if (j.contains("sound_speed")) geom.sound_speed = j["sound_speed"].get<double>();
  geom.validate();
  return geom;
}

}  // namespace beamkit
