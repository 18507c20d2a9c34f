// Beam-space algebra: projecting multichannel spectra onto basis beams,
// mixing beam outputs with complex activations, the equivalent per-bin
// weight formulation, the oracle residual-cancelling term, and beampatterns.
//
// Activations are stored unconjugated; mix() applies the conjugate, so
// exported activation magnitudes are |G| directly.
#ifndef BEAMKIT_BEAMSPACE_HPP
#define BEAMKIT_BEAMSPACE_HPP

#include <string>
#include <vector>

#include "beamkit/dictionary.hpp"
#include "beamkit/stft.hpp"

namespace beamkit {

struct BeamTensor {
  int frames = 0, bins = 0, num_beams = 0;  // L, K, P
  std::vector<cplx> values;                 // index (l * K + k) * P + p

  cplx& at(int l, int k, int p) {
    return values[(static_cast<size_t>(l) * bins + k) * num_beams + p];
  }
  const cplx& at(int l, int k, int p) const {
    return values[(static_cast<size_t>(l) * bins + k) * num_beams + p];
  }
};

using ActivationMatrix = BeamTensor;  // same L x K x P complex layout

// Per-T-F beamforming weight vectors.
struct WeightField {
  int frames = 0, bins = 0, channels = 0;
  std::vector<cplx> values;  // index (l * K + k) * M + m

  cplx& at(int l, int k, int m) {
    return values[(static_cast<size_t>(l) * bins + k) * channels + m];
  }
  const cplx& at(int l, int k, int m) const {
    return values[(static_cast<size_t>(l) * bins + k) * channels + m];
  }
};

struct Beampattern {
  double freq_hz = 0.0;
  double grid_step_deg = 1.0;
  std::vector<double> doas_deg;
  std::vector<double> gains;  // linear magnitude per DOA
};

// Y_{l,k,p} = B_{k,:,p}^H X_{l,k}
BeamTensor project(const BeamDictionary& dict, const MultichannelSpectrogram& x);

// S_{l,k} = sum_p conj(G_{l,k,p}) Y_{l,k,p}
Spectrogram mix(const BeamTensor& y, const ActivationMatrix& g);

// W_{l,k} = sum_p B_{k,:,p} G_{l,k,p}
WeightField weights_from_activation(const BeamDictionary& dict,
                                    const ActivationMatrix& g);

// S_{l,k} = W_{l,k}^H X_{l,k}
Spectrogram apply_weights(const WeightField& w, const MultichannelSpectrogram& x);

// delta_{l,k,p} = -B_{k,:,p}^H R_{l,k} for the oracle residual spectrogram R.
BeamTensor oracle_delta(const BeamDictionary& dict,
                        const MultichannelSpectrogram& residual);

BeamTensor add(const BeamTensor& a, const BeamTensor& b);

// gain(theta) = |W^H h(theta, f)| for one bin's weight vector.
Beampattern beampattern(const std::vector<cplx>& weights,
                        const ArrayGeometry& geom, double freq_hz,
                        double grid_step_deg);

// CSV exports consumed by external plotting: one value per row.
void write_beampattern_csv(const std::string& path,
                           const std::vector<Beampattern>& patterns);
void write_activation_csv(const std::string& path, const ActivationMatrix& g,
                          int bin);  // rows: frame, beam_index, |G|

}  // namespace beamkit

#endif  // BEAMKIT_BEAMSPACE_HPP
