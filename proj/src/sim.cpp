#include "beamkit/sim.hpp"

#include <algorithm>
#include <cmath>

#include "nlohmann/json.hpp"

namespace beamkit {

void SceneSpec::validate() const {
  if (noise_doas_deg.empty() || noise_doas_deg.size() > 3)
    throw InvalidArgument("scene: need 1 to 3 directional noises");
  if (!(duration_s > 0.0)) throw InvalidArgument("scene: duration must be > 0");
  if (noise_kinds.size() != noise_doas_deg.size())
    throw InvalidArgument("scene: noise kind/DOA count mismatch");
}

namespace {

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / std::max<size_t>(x.size(), 1));
}

void normalize_rms(std::vector<double>& x) {
  double r = rms(x);
  if (r < 1e-12) throw NumericalError("synth_source: produced a silent signal");
  for (double& v : x) v /= r;
}

std::vector<double> white_noise(size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

// Paul Kellet's 3-pole pink filter, good to ~0.05 dB over the audio band.
std::vector<double> pink_noise(size_t n, Rng& rng) {
  std::vector<double> x(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (size_t i = 0; i < n; ++i) {
    double w = rng.normal();
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    x[i] = b0 + b1 + b2 + w * 0.1848;
  }
  return x;
}

std::vector<double> tonal(size_t n, double fs, Rng& rng) {
  const double f0 = 200.0;
  const int harmonics = 10;
  std::vector<double> phase(harmonics);
  for (double& p : phase) p = rng.uniform(0.0, 2.0 * kPi);
  std::vector<double> x(n, 0.0);
  double integ = 0.0;  // integral of the vibrato-modulated fundamental
  for (size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / fs;
    double f = f0 * (1.0 + 0.02 * std::sin(2.0 * kPi * 5.0 * t));
    integ += f / fs;
    for (int h = 1; h <= harmonics; ++h)
      x[i] += std::sin(2.0 * kPi * h * integ + phase[h - 1]) / h;
  }
  return x;
}

std::vector<double> speechlike(size_t n, double fs, Rng& rng) {
  // Pink-filtered noise under a syllabic (~4 Hz) envelope with a small floor
  // so the source never goes fully silent.
  std::vector<double> x = pink_noise(n, rng);
  double phi = rng.uniform(0.0, 2.0 * kPi);
  double rate = rng.uniform(3.5, 4.5);
  for (size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / fs;
    double env = 0.5 * (1.0 - std::cos(2.0 * kPi * rate * t + phi));
    x[i] *= 0.08 + std::pow(env, 1.5);
  }
  return x;
}

}  // namespace

std::vector<double> synth_source(const std::string& kind, double duration_s,
                                 double sample_rate, uint64_t seed) {
  if (!(duration_s > 0.0)) throw InvalidArgument("synth_source: duration must be > 0");
  size_t n = static_cast<size_t>(std::llround(duration_s * sample_rate));
  if (n == 0) throw InvalidArgument("synth_source: zero-length signal");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<double> x;
  if (kind == "noise" || kind == "white") {
    x = white_noise(n, rng);
  } else if (kind == "pink") {
    x = pink_noise(n, rng);
  } else if (kind == "tonal") {
    x = tonal(n, sample_rate, rng);
  } else if (kind == "speechlike") {
    x = speechlike(n, sample_rate, rng);
  } else {
    throw InvalidArgument("synth_source: unknown kind '" + kind + "'");
  }
  normalize_rms(x);
  return x;
}

Waveform spatialize(const ArrayGeometry& geom, const std::vector<double>& wave,
                    double doa_deg) {
  if (doa_deg < 0.0 || doa_deg >= 360.0)
    throw InvalidArgument("spatialize: doa must be in [0, 360)");
  std::vector<double> tau = relative_delays(geom, doa_deg);
  const int half = 32;  // 64-tap Hann-windowed sinc
  Waveform out(geom.num_mics());
  int64_t n = static_cast<int64_t>(wave.size());
  for (int m = 0; m < geom.num_mics(); ++m) {
    double delay = tau[m] * geom.sample_rate;
    std::vector<double>& y = out[m];
    y.assign(wave.size(), 0.0);
    // Integer part shifts the tap window so the fractional residue is small.
    int64_t d0 = static_cast<int64_t>(std::llround(delay));
    double frac = delay - static_cast<double>(d0);
    double taps[2 * half];
    for (int i = -half; i < half; ++i) {
      double u = static_cast<double>(i) - frac;
      double s = std::fabs(u) < 1e-12 ? 1.0 : std::sin(kPi * u) / (kPi * u);
      double w = std::fabs(u) <= half ? 0.5 * (1.0 + std::cos(kPi * u / half)) : 0.0;
      taps[i + half] = s * w;
    }
    for (int64_t idx = 0; idx < n; ++idx) {
      double acc = 0.0;
      for (int i = -half; i < half; ++i) {
        int64_t src = idx - d0 - i;
        if (src >= 0 && src < n) acc += taps[i + half] * wave[src];
      }
      y[idx] = acc;
    }
  }
  return out;
}

Scene mix_at_snr(const ArrayGeometry& geom, const Waveform& target,
                 const std::vector<Waveform>& noises, double snr_db) {
  if (target.size() != static_cast<size_t>(geom.num_mics()))
    throw ShapeError("mix_at_snr: target channel count mismatch");
  if (noises.empty()) throw InvalidArgument("mix_at_snr: no noises");
  size_t n = target[0].size();

  Waveform noise_sum(geom.num_mics(), std::vector<double>(n, 0.0));
  for (const Waveform& nz : noises) {
    if (nz.size() != target.size()) throw ShapeError("mix_at_snr: channel mismatch");
    for (size_t m = 0; m < nz.size(); ++m) {
      if (nz[m].size() != n) throw ShapeError("mix_at_snr: length mismatch");
      for (size_t i = 0; i < n; ++i) noise_sum[m][i] += nz[m][i];
    }
  }
  int ref = geom.reference_index;
  double rt = rms(target[ref]);
  double rn = rms(noise_sum[ref]);
  if (rt < 1e-12 || rn < 1e-12)
    throw NumericalError("mix_at_snr: degenerate scene (silent target or noise)");
  double scale = rt / rn * std::pow(10.0, -snr_db / 20.0);

  Scene scene;
  scene.target_multi = target;
  scene.noise_multi = noise_sum;
  scene.mixture.assign(geom.num_mics(), std::vector<double>(n));
  for (int m = 0; m < geom.num_mics(); ++m)
    for (size_t i = 0; i < n; ++i) {
      scene.noise_multi[m][i] *= scale;
      scene.mixture[m][i] = target[m][i] + scene.noise_multi[m][i];
    }
  scene.clean_ref = scene.target_multi[ref];
  scene.noise_ref = scene.noise_multi[ref];
  scene.spec.snr_db = snr_db;
  return scene;
}

namespace {

// Exponentially decaying per-channel tail (T60 = 0.15 s, tail start -15 dB).
void add_diffuse_tail(const ArrayGeometry& geom, Waveform& channels, Rng& rng) {
  double fs = geom.sample_rate;
  int ir_len = static_cast<int>(0.15 * fs);
  double t60 = 0.15;
  double start = std::pow(10.0, -15.0 / 20.0);
  for (auto& ch : channels) {
    std::vector<double> ir(ir_len);
    for (int i = 0; i < ir_len; ++i) {
      double t = i / fs;
      ir[i] = start * std::pow(10.0, -3.0 * t / t60) * rng.normal() * 0.05;
    }
    std::vector<double> y(ch.size(), 0.0);
    for (size_t idx = 0; idx < ch.size(); ++idx) {
      double acc = ch[idx];
      int lim = static_cast<int>(std::min<size_t>(idx, ir_len - 1));
      for (int i = 1; i <= lim; ++i) acc += ir[i] * ch[idx - i];
      y[idx] = acc;
    }
    ch = std::move(y);
  }
}

}  // namespace

Scene render_scene(const ArrayGeometry& geom, const SceneSpec& spec) {
  spec.validate();
  geom.validate();
  Rng master(spec.seed);
  uint64_t target_seed = master.next_u64();
  std::vector<uint64_t> noise_seeds;
  for (size_t i = 0; i < spec.noise_doas_deg.size(); ++i)
    noise_seeds.push_back(master.next_u64());

  std::vector<double> target_src =
      synth_source(spec.target_kind, spec.duration_s, geom.sample_rate, target_seed);
  Waveform target = spatialize(geom, target_src, wrap_deg(spec.target_doa_deg));
  std::vector<Waveform> noises;
  for (size_t i = 0; i < spec.noise_doas_deg.size(); ++i) {
    std::vector<double> src = synth_source(spec.noise_kinds[i], spec.duration_s,
                                           geom.sample_rate, noise_seeds[i]);
    noises.push_back(spatialize(geom, src, wrap_deg(spec.noise_doas_deg[i])));
  }
  if (spec.diffuse_tail) {
    Rng tail_rng(master.next_u64());
    add_diffuse_tail(geom, target, tail_rng);
    for (Waveform& nz : noises) add_diffuse_tail(geom, nz, tail_rng);
  }
  Scene scene = mix_at_snr(geom, target, noises, spec.snr_db);
  scene.spec = spec;
  return scene;
}

std::vector<SceneSpec> make_dataset_specs(const DatasetSpec& ds) {
  if (ds.num_scenes < 1) throw InvalidArgument("make_dataset: need at least one scene");
  double lo = 0.0, hi = 0.0;
  bool set_b = ds.bucket == "set-B" || ds.bucket == "set-b";
  if (!set_b) {
    if (ds.bucket == "0-15") {
      lo = 0; hi = 15;
    } else if (ds.bucket == "15-45") {
      lo = 15; hi = 45;
    } else if (ds.bucket == "45-90") {
      lo = 45; hi = 90;
    } else if (ds.bucket == "90-180") {
      lo = 90; hi = 180;
    } else {
      throw InvalidArgument("make_dataset: unknown bucket '" + ds.bucket + "'");
    }
  }
  if (ds.noise_kind_pool.empty())
    throw InvalidArgument("make_dataset: empty noise kind pool");

  Rng rng(ds.seed);
  std::vector<SceneSpec> specs;
  specs.reserve(ds.num_scenes);
  for (int i = 0; i < ds.num_scenes; ++i) {
    SceneSpec s;
    s.seed = rng.next_u64();
    s.target_doa_deg = rng.uniform(0.0, 360.0);
    s.snr_db = rng.uniform(ds.snr_min_db, ds.snr_max_db);
    s.duration_s = ds.duration_s;
    int count = set_b ? rng.uniform_int(1, 3) : 1;
    for (int j = 0; j < count; ++j) {
      double doa;
      if (set_b) {
        doa = rng.uniform(0.0, 360.0);
      } else {
        double diff = rng.uniform(lo, hi);
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        doa = wrap_deg(s.target_doa_deg + sign * diff);
      }
      s.noise_doas_deg.push_back(doa);
      int pick = rng.uniform_int(0, static_cast<int>(ds.noise_kind_pool.size()) - 1);
      s.noise_kinds.push_back(ds.noise_kind_pool[pick]);
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<Scene> make_dataset(const ArrayGeometry& geom, const DatasetSpec& ds) {
  std::vector<Scene> scenes;
  for (const SceneSpec& s : make_dataset_specs(ds))
    scenes.push_back(render_scene(geom, s));
  return scenes;
}

double si_snr_db(const std::vector<double>& reference,
                 const std::vector<double>& estimate) {
  if (reference.size() != estimate.size())
    throw ShapeError("si_snr: length mismatch");
  if (reference.empty()) throw InvalidArgument("si_snr: empty signals");
  size_t n = reference.size();
  double ms = 0.0, me = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ms += reference[i];
    me += estimate[i];
  }
  ms /= n;
  me /= n;
  double dot = 0.0, ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double s = reference[i] - ms;
    double e = estimate[i] - me;
    dot += e * s;
    ss += s * s;
  }
  if (ss < 1e-300) throw InvalidArgument("si_snr: zero reference");
  double alpha = dot / ss;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double st = alpha * (reference[i] - ms);
    double err = (estimate[i] - me) - st;
    num += st * st;
    den += err * err;
  }
  if (den <= 0.0 || num / den > 1e6) return 60.0;
  if (num <= 0.0 || num / den < 1e-6) return -60.0;
  return 10.0 * std::log10(num / den);
}

std::string scene_spec_to_json(const SceneSpec& spec) {
  nlohmann::json j;
  j["target_doa_deg"] = spec.target_doa_deg;
  j["noise_doas_deg"] = spec.noise_doas_deg;
  j["snr_db"] = spec.snr_db;
  j["duration_s"] = spec.duration_s;
  j["target_kind"] = spec.target_kind;
  j["noise_kinds"] = spec.noise_kinds;
  j["seed"] = spec.seed;
  j["diffuse_tail"] = spec.diffuse_tail;
  return j.dump();
}

SceneSpec scene_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw IoError(std::string("scene_spec_from_json: ") + e.what());
  }
  SceneSpec s;
  s.target_doa_deg = j.at("target_doa_deg").get<double>();
  s.noise_doas_deg = j.at("noise_doas_deg").get<std::vector<double>>();
  s.snr_db = j.at("snr_db").get<double>();
  s.duration_s = j.at("duration_s").get<double>();
  s.target_kind = j.at("target_kind").get<std::string>();
  s.noise_kinds = j.at("noise_kinds").get<std::vector<std::string>>();
  s.seed = j.at("seed").get<uint64_t>();
  s.diffuse_tail = j.value("diffuse_tail", false);
  s.validate();
  return s;
}

}  // namespace beamkit
