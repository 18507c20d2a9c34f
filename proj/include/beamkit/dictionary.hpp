// Time-invariant beam-space dictionaries over a uniform DOA grid, in three
// regimes: fixed (delay-and-sum or superdirective), semi-learnable (trainable
// inverse noise correlation via a Cholesky factor, fixed steering), and
// full-learnable (with or without the physical beamformer formula).
#ifndef BEAMKIT_DICTIONARY_HPP
#define BEAMKIT_DICTIONARY_HPP

#include <string>
#include <vector>

#include "beamkit/array.hpp"
#include "beamkit/nn.hpp"
#include "beamkit/stft.hpp"

namespace beamkit {

enum class DictRegime {
  FixedDs,
  FixedSd,
  SemiLearnable,
  FullPhysics,  // trainable (U, h), beams still materialized by the formula
  FullFree,     // raw trainable beam tensor
};

std::string regime_name(DictRegime r);
DictRegime regime_from_name(const std::string& s);
bool regime_is_fixed(DictRegime r);

struct BeamDictionary {
  int bins = 0;       // K
  int channels = 0;   // M
  int num_beams = 0;  // P
  DictRegime regime = DictRegime::FixedDs;
  std::vector<double> doa_grid_deg;  // P entries
  ArrayGeometry geometry;
  std::vector<cplx> beams;  // index ((k * P + p) * M + m)

  cplx& at(int k, int p, int m) {
    return beams[(static_cast<size_t>(k) * num_beams + p) * channels + m];
  }
  const cplx& at(int k, int p, int m) const {
    return beams[(static_cast<size_t>(k) * num_beams + p) * channels + m];
  }
  const cplx* beam(int k, int p) const {
    return &beams[(static_cast<size_t>(k) * num_beams + p) * channels];
  }
};

// P azimuths at p * (360/P) degrees.
std::vector<double> uniform_doa_grid(int num_beams);

// B = (Phi + eps I)^-1 h / (h^H (Phi + eps I)^-1 h), eps = loading*tr(Phi)/M.
// Distortionless toward h by construction.
std::vector<cplx> fixed_beam(const SteeringVector& h, const CoherenceMatrix& phi,
                             double loading);

inline constexpr double kDictLoading = 1e-4;

BeamDictionary build_fixed_dictionary(const ArrayGeometry& geom,
                                      const StftConfig& cfg, DictRegime regime,
                                      int num_beams, double loading = kDictLoading);

// Per-bin lower-triangular factors U_k with Phi_k^-1 = U_k U_k^H. Entries
// above the diagonal are structurally inert: ignored on read and never
// updated, so the factorized inverse stays Hermitian PSD under training.
struct CholeskyNoiseModel {
  int bins = 0;
  int channels = 0;
  nn::ParamPtr factors;  // (K, 2*M*M), row-major complex M x M per bin
};

// One dictionary under any regime; trainable state lives in nn::Params.
struct TrainableDictionary {
  DictRegime regime = DictRegime::FixedDs;
  int bins = 0, channels = 0, num_beams = 0;
  std::vector<double> doa_grid_deg;
  ArrayGeometry geometry;
  double loading = kDictLoading;

  nn::Tensor fixed_beams;     // (K*P, 2M): fixed regimes
  CholeskyNoiseModel chol;    // semi + full-physics
  nn::Tensor steering_fixed;  // (K*P, 2M): semi
  nn::ParamPtr steering;      // full-physics
  nn::ParamPtr free_beams;    // full-free

  std::vector<nn::ParamPtr> params() const;
  // Current beams as plain complex values (no tape), for export and analysis.
  BeamDictionary materialize() const;
};

TrainableDictionary init_fixed(const ArrayGeometry& geom, const StftConfig& cfg,
                               DictRegime regime, int num_beams,
                               double loading = kDictLoading);
TrainableDictionary init_semi_learnable(const ArrayGeometry& geom,
                                        const StftConfig& cfg, int num_beams,
                                        double loading = kDictLoading);
TrainableDictionary init_full_learnable(const ArrayGeometry& geom,
                                        const StftConfig& cfg, int num_beams,
                                        bool keep_physics,
                                        double loading = kDictLoading);

// (K*P, 2M) interleaved real view of a dictionary and back.
nn::Tensor beams_to_tensor(const BeamDictionary& dict);
BeamDictionary beams_from_tensor(const nn::Tensor& t, const BeamDictionary& like);

// Materialize beams from Cholesky factors and steering without a tape:
// per (k, p): t = U^H h, B = U t / |t|^2. Mirrors the differentiable op.
void chol_materialize(const nn::Tensor& factors, const nn::Tensor& steering,
                      int bins, int channels, int num_beams, nn::Tensor* beams);

void save_dictionary(const std::string& path, const BeamDictionary& dict);
BeamDictionary load_dictionary(const std::string& path);

}  // namespace beamkit

#endif  // BEAMKIT_DICTIONARY_HPP
