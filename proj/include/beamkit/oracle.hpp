// Time-invariant oracle beamformers from ground-truth statistics: TI-MVDR
// and TI-MWF with utterance-averaged spatial covariances.
#ifndef BEAMKIT_ORACLE_HPP
#define BEAMKIT_ORACLE_HPP

#include <vector>

#include "beamkit/array.hpp"
#include "beamkit/stft.hpp"

namespace beamkit {

enum class CovKind { Speech, Noise, Mixture };

struct SpatialCovariance {
  int bins = 0;
  int channels = 0;
  CovKind kind = CovKind::Mixture;
  int frame_count = 0;
  std::vector<cplx> entries;  // index (k * M + i) * M + j, Hermitian per bin

  cplx& at(int k, int i, int j) {
    return entries[(static_cast<size_t>(k) * channels + i) * channels + j];
  }
  const cplx& at(int k, int i, int j) const {
    return entries[(static_cast<size_t>(k) * channels + i) * channels + j];
  }
};

// Phi_k = (1/L) sum_l X_{l,k} X_{l,k}^H
SpatialCovariance estimate_covariance(const MultichannelSpectrogram& spec,
                                      CovKind kind = CovKind::Mixture);

// Per-bin weight vectors, one M-vector per bin (time-invariant).
struct BinWeights {
  int bins = 0;
  int channels = 0;
  std::vector<cplx> values;  // k * M + m

  cplx* bin(int k) { return &values[static_cast<size_t>(k) * channels]; }
  const cplx* bin(int k) const { return &values[static_cast<size_t>(k) * channels]; }
};

inline constexpr double kOracleLoading = 1e-6;

// W_k = (Phi_n,k + eps I)^-1 c_k / (c_k^H (Phi_n,k + eps I)^-1 c_k).
// atf holds one M-vector per bin.
BinWeights ti_mvdr(const SpatialCovariance& noise_cov,
                   const std::vector<std::vector<cplx>>& atf,
                   double loading = kOracleLoading);

// Solves (Phi_x,k + eps I) W_k = Phi_s,k e_ref.
BinWeights ti_mwf(const SpatialCovariance& mix_cov,
                  const SpatialCovariance& speech_cov, int reference_index,
                  double loading = kOracleLoading);

// ATF per bin: far-field steering toward a known DOA, or the principal
// eigenvector of the speech covariance (scaled to unity at the reference).
std::vector<std::vector<cplx>> steering_atf(const ArrayGeometry& geom,
                                            const StftConfig& cfg, double doa_deg);
std::vector<std::vector<cplx>> principal_atf(const SpatialCovariance& speech_cov,
                                             int reference_index);

// S_{l,k} = W_k^H X_{l,k} with time-invariant weights.
Spectrogram apply_bin_weights(const BinWeights& w, const MultichannelSpectrogram& x);

// Binary-tensor export in the dictionary layout with P = 1.
void save_bin_weights(const std::string& path, const BinWeights& w,
                      const ArrayGeometry& geom);
BinWeights load_bin_weights(const std::string& path, ArrayGeometry* geom_out = nullptr);

}  // namespace beamkit

#endif  // BEAMKIT_ORACLE_HPP
