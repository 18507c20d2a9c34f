#include "beamkit/beamspace.hpp"

#include <cmath>
#include <fstream>

namespace beamkit {

namespace {
void check_match(const BeamDictionary& dict, const MultichannelSpectrogram& x) {
  if (dict.channels != x.channels)
    throw ShapeError("beamspace: dictionary/spectrogram channel mismatch");
  if (dict.bins != x.bins)
    throw ShapeError("beamspace: dictionary/spectrogram bin mismatch");
}
}  // namespace

BeamTensor project(const BeamDictionary& dict, const MultichannelSpectrogram& x) {
  check_match(dict, x);
  BeamTensor y;
  y.frames = x.frames;
  y.bins = x.bins;
  y.num_beams = dict.num_beams;
  y.values.assign(static_cast<size_t>(x.frames) * x.bins * dict.num_beams, cplx());
  for (int l = 0; l < x.frames; ++l) {
    for (int k = 0; k < x.bins; ++k) {
      const cplx* xv = &x.data[(static_cast<size_t>(l) * x.bins + k) * x.channels];
      for (int p = 0; p < dict.num_beams; ++p) {
        const cplx* b = dict.beam(k, p);
        cplx acc = 0.0;
        for (int m = 0; m < x.channels; ++m) acc += std::conj(b[m]) * xv[m];
        y.at(l, k, p) = acc;
      }
    }
  }
  return y;
}

Spectrogram mix(const BeamTensor& y, const ActivationMatrix& g) {
  if (y.frames != g.frames || y.bins != g.bins || y.num_beams != g.num_beams)
    throw ShapeError("mix: beam tensor/activation shape mismatch");
  Spectrogram s;
  s.frames = y.frames;
  s.bins = y.bins;
  s.data.assign(static_cast<size_t>(y.frames) * y.bins, cplx());
  for (int l = 0; l < y.frames; ++l)
    for (int k = 0; k < y.bins; ++k) {
      cplx acc = 0.0;
      for (int p = 0; p < y.num_beams; ++p)
        acc += std::conj(g.at(l, k, p)) * y.at(l, k, p);
      s.at(l, k) = acc;
    }
  return s;
}

WeightField weights_from_activation(const BeamDictionary& dict,
                                    const ActivationMatrix& g) {
  if (dict.bins != g.bins || dict.num_beams != g.num_beams)
    throw ShapeError("weights_from_activation: shape mismatch");
  WeightField w;
  w.frames = g.frames;
  w.bins = g.bins;
  w.channels = dict.channels;
  w.values.assign(static_cast<size_t>(g.frames) * g.bins * dict.channels, cplx());
  for (int l = 0; l < g.frames; ++l)
    for (int k = 0; k < g.bins; ++k)
      for (int p = 0; p < g.num_beams; ++p) {
        const cplx* b = dict.beam(k, p);
        cplx a = g.at(l, k, p);
        for (int m = 0; m < dict.channels; ++m) w.at(l, k, m) += b[m] * a;
      }
  return w;
}

Spectrogram apply_weights(const WeightField& w, const MultichannelSpectrogram& x) {
  if (w.frames != x.frames || w.bins != x.bins || w.channels != x.channels)
    throw ShapeError("apply_weights: shape mismatch");
  Spectrogram s;
  s.frames = x.frames;
  s.bins = x.bins;
  s.data.assign(static_cast<size_t>(x.frames) * x.bins, cplx());
  for (int l = 0; l < x.frames; ++l)
    for (int k = 0; k < x.bins; ++k) {
      cplx acc = 0.0;
      for (int m = 0; m < x.channels; ++m)
        acc += std::conj(w.at(l, k, m)) * x.at(l, k, m);
      s.at(l, k) = acc;
    }
  return s;
}

BeamTensor oracle_delta(const BeamDictionary& dict,
                        const MultichannelSpectrogram& residual) {
  BeamTensor d = project(dict, residual);
  for (cplx& v : d.values) v = -v;
  return d;
}

BeamTensor add(const BeamTensor& a, const BeamTensor& b) {
  if (a.frames != b.frames || a.bins != b.bins || a.num_beams != b.num_beams)
    throw ShapeError("beam tensor add: shape mismatch");
  BeamTensor out = a;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
  return out;
}

Beampattern beampattern(const std::vector<cplx>& weights,
                        const ArrayGeometry& geom, double freq_hz,
                        double grid_step_deg) {
  if (weights.size() != static_cast<size_t>(geom.num_mics()))
    throw ShapeError("beampattern: weight/mic count mismatch");
  if (!(grid_step_deg > 0.0) ||
      std::fabs(360.0 / grid_step_deg - std::round(360.0 / grid_step_deg)) > 1e-9)
    throw InvalidArgument("beampattern: grid step must divide 360");
  Beampattern bp;
  bp.freq_hz = freq_hz;
  bp.grid_step_deg = grid_step_deg;
  int n = static_cast<int>(std::round(360.0 / grid_step_deg));
  bp.doas_deg.resize(n);
  bp.gains.resize(n);
  for (int i = 0; i < n; ++i) {
    double theta = i * grid_step_deg;
    SteeringVector h = steering_vector(geom, theta, freq_hz);
    cplx acc = 0.0;
    for (int m = 0; m < geom.num_mics(); ++m)
      acc += std::conj(weights[m]) * h.elements[m];
    bp.doas_deg[i] = theta;
    bp.gains[i] = std::abs(acc);
  }
  return bp;
}

void write_beampattern_csv(const std::string& path,
                           const std::vector<Beampattern>& patterns) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_beampattern_csv: cannot open " + path);
  f << "freq_hz,doa_deg,gain_db\n";
  for (const Beampattern& bp : patterns)
    for (size_t i = 0; i < bp.doas_deg.size(); ++i) {
      double db = 20.0 * std::log10(std::max(bp.gains[i], 1e-12));
      f << bp.freq_hz << "," << bp.doas_deg[i] << "," << db << "\n";
    }
  if (!f) throw IoError("write_beampattern_csv: write failed");
}

void write_activation_csv(const std::string& path, const ActivationMatrix& g,
                          int bin) {
  if (bin < 0 || bin >= g.bins) throw InvalidArgument("write_activation_csv: bad bin");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_activation_csv: cannot open " + path);
  f << "frame,beam_index,magnitude\n";
  for (int l = 0; l < g.frames; ++l)
    for (int p = 0; p < g.num_beams; ++p)
      f << l << "," << p << "," << std::abs(g.at(l, bin, p)) << "\n";
  if (!f) throw IoError("write_activation_csv: write failed");
}

}  // namespace beamkit
