// Differentiable beam-space operations for the autodiff tape. Complex data
// is interleaved (re, im) column pairs; adjoints follow the real-pair
// convention g = dL/dRe + i dL/dIm.
#ifndef BEAMKIT_BEAM_OPS_HPP
#define BEAMKIT_BEAM_OPS_HPP

#include "beamkit/nn.hpp"

namespace beamkit::ops {

// Y_{(l,k),p} = sum_m conj(B_{(k,p),m}) X_{(l,k),m}
// B: (K*P, 2M), X: (L*K, 2M) -> Y: (L*K, 2P)
nn::Tape::Id project(nn::Tape& tape, nn::Tape::Id beams, nn::Tape::Id x,
                     int frames, int bins, int channels, int num_beams);

// S_{(l,k)} = sum_p conj(G_{(l,k),p}) Y_{(l,k),p}
// G, Y: (N, 2P) -> S: (N, 2)
nn::Tape::Id mix(nn::Tape& tape, nn::Tape::Id activations, nn::Tape::Id beams_out,
                 int num_beams);

// Per (bin, beam): t = U_k^H h, B = U_k t / (|t|^2 + floor). Entries above
// the diagonal of U are structurally zero (never read, gradient never set).
// U: (K, 2*M*M), H: (K*P, 2M) -> B: (K*P, 2M)
nn::Tape::Id chol_beams(nn::Tape& tape, nn::Tape::Id factors, nn::Tape::Id steering,
                        int bins, int channels, int num_beams);

// Per-bin feature rows from compressed beam outputs: current frame plus
// `context` causal frames (zero-padded at the start), optionally appending
// the normalized bin index k/(K-1).
// Yc: (L*K, 2P) -> (L*K, 2P*(context+1) [+ 1])
nn::Tape::Id assemble_context(nn::Tape& tape, nn::Tape::Id compressed,
                              int frames, int bins, int num_beams, int context,
                              bool bin_feature);

}  // namespace beamkit::ops

#endif  // BEAMKIT_BEAM_OPS_HPP
