#include "beamkit/beam_ops.hpp"

#include <cmath>

namespace beamkit::ops {

using nn::Tensor;
using Id = nn::Tape::Id;

namespace {

inline cplx ld(const Tensor& t, int64_t row, int j) {
  return {t.at(row, 2 * j), t.at(row, 2 * j + 1)};
}
inline void addc(Tensor& t, int64_t row, int j, cplx v) {
  t.at(row, 2 * j) += v.real();
  t.at(row, 2 * j + 1) += v.imag();
}
inline void stc(Tensor& t, int64_t row, int j, cplx v) {
  t.at(row, 2 * j) = v.real();
  t.at(row, 2 * j + 1) = v.imag();
}

struct ProjectOp : nn::CustomOp {
  int L, K, M, P;
  ProjectOp(int l, int k, int m, int p) : L(l), K(k), M(m), P(p) {}
  std::string name() const override { return "project"; }

  Tensor forward(const std::vector<const Tensor*>& in) override {
    const Tensor& b = *in[0];
    const Tensor& x = *in[1];
    if (b.rows() != static_cast<int64_t>(K) * P || b.cols() != 2 * M)
      throw ShapeError("project: bad dictionary shape");
    if (x.rows() != static_cast<int64_t>(L) * K || x.cols() != 2 * M)
      throw ShapeError("project: bad input shape");
    Tensor y({static_cast<int64_t>(L) * K, 2 * P});
    for (int l = 0; l < L; ++l)
      for (int k = 0; k < K; ++k) {
        int64_t xr = static_cast<int64_t>(l) * K + k;
        for (int p = 0; p < P; ++p) {
          int64_t br = static_cast<int64_t>(k) * P + p;
          cplx acc = 0.0;
          for (int m = 0; m < M; ++m) acc += std::conj(ld(b, br, m)) * ld(x, xr, m);
          stc(y, xr, p, acc);
        }
      }
    return y;
  }

  void backward(const std::vector<const Tensor*>& in, const Tensor&,
                const Tensor& gout, const std::vector<Tensor*>& gin) override {
    const Tensor& b = *in[0];
    const Tensor& x = *in[1];
    for (int l = 0; l < L; ++l)
      for (int k = 0; k < K; ++k) {
        int64_t xr = static_cast<int64_t>(l) * K + k;
        for (int p = 0; p < P; ++p) {
          int64_t br = static_cast<int64_t>(k) * P + p;
          cplx gy = ld(gout, xr, p);
          if (gin[0])
            for (int m = 0; m < M; ++m)
              addc(*gin[0], br, m, ld(x, xr, m) * std::conj(gy));
          if (gin[1])
            for (int m = 0; m < M; ++m) addc(*gin[1], xr, m, ld(b, br, m) * gy);
        }
      }
  }
};

struct MixOp : nn::CustomOp {
  int P;
  explicit MixOp(int p) : P(p) {}
  std::string name() const override { return "mix"; }

  Tensor forward(const std::vector<const Tensor*>& in) override {
    const Tensor& g = *in[0];
    const Tensor& y = *in[1];
    if (!g.same_shape(y) || g.cols() != 2 * P)
      throw ShapeError("mix: activation/beam-output shape mismatch");
    Tensor s({g.rows(), 2});
    for (int64_t r = 0; r < g.rows(); ++r) {
      cplx acc = 0.0;
      for (int p = 0; p < P; ++p) acc += std::conj(ld(g, r, p)) * ld(y, r, p);
      stc(s, r, 0, acc);
    }
    return s;
  }

  void backward(const std::vector<const Tensor*>& in, const Tensor&,
                const Tensor& gout, const std::vector<Tensor*>& gin) override {
    const Tensor& g = *in[0];
    const Tensor& y = *in[1];
    for (int64_t r = 0; r < g.rows(); ++r) {
      cplx gs = ld(gout, r, 0);
      if (gin[0])
        for (int p = 0; p < P; ++p) addc(*gin[0], r, p, ld(y, r, p) * std::conj(gs));
      if (gin[1])
        for (int p = 0; p < P; ++p) addc(*gin[1], r, p, ld(g, r, p) * gs);
    }
  }
};

constexpr double kDenomFloor = 1e-30;

struct CholBeamsOp : nn::CustomOp {
  int K, M, P;
  CholBeamsOp(int k, int m, int p) : K(k), M(m), P(p) {}
  std::string name() const override { return "chol_beams"; }

  // Reads only the lower triangle of each bin's factor matrix.
  cplx lower(const Tensor& u, int k, int i, int j) const {
    if (j > i) return {};
    return ld(u, k, i * M + j);
  }

  Tensor forward(const std::vector<const Tensor*>& in) override {
    const Tensor& u = *in[0];
    const Tensor& h = *in[1];
    if (u.rows() != K || u.cols() != 2 * M * M)
      throw ShapeError("chol_beams: bad factor shape");
    if (h.rows() != static_cast<int64_t>(K) * P || h.cols() != 2 * M)
      throw ShapeError("chol_beams: bad steering shape");
    Tensor b({static_cast<int64_t>(K) * P, 2 * M});
    std::vector<cplx> t(M);
    for (int k = 0; k < K; ++k)
      for (int p = 0; p < P; ++p) {
        int64_t row = static_cast<int64_t>(k) * P + p;
        for (int i = 0; i < M; ++i) {
          cplx s = 0.0;
          for (int j = i; j < M; ++j) s += std::conj(lower(u, k, j, i)) * ld(h, row, j);
          t[i] = s;
        }
        double d = kDenomFloor;
        for (int i = 0; i < M; ++i) d += std::norm(t[i]);
        for (int i = 0; i < M; ++i) {
          cplx s = 0.0;
          for (int j = 0; j <= i; ++j) s += lower(u, k, i, j) * t[j];
          stc(b, row, i, s / d);
        }
      }
    return b;
  }

  void backward(const std::vector<const Tensor*>& in, const Tensor&,
                const Tensor& gout, const std::vector<Tensor*>& gin) override {
    const Tensor& u = *in[0];
    const Tensor& h = *in[1];
    std::vector<cplx> t(M), v(M), gv(M), gt(M);
    for (int k = 0; k < K; ++k)
      for (int p = 0; p < P; ++p) {
        int64_t row = static_cast<int64_t>(k) * P + p;
        // Recompute the forward intermediates for this (k, p).
        for (int i = 0; i < M; ++i) {
          cplx s = 0.0;
          for (int j = i; j < M; ++j) s += std::conj(lower(u, k, j, i)) * ld(h, row, j);
          t[i] = s;
        }
        double d = kDenomFloor;
        for (int i = 0; i < M; ++i) d += std::norm(t[i]);
        for (int i = 0; i < M; ++i) {
          cplx s = 0.0;
          for (int j = 0; j <= i; ++j) s += lower(u, k, i, j) * t[j];
          v[i] = s;  // unnormalized: B = v / d
        }
        // gv = gB / d ; gd = -Re(conj(gB) . v) / d^2
        double gd = 0.0;
        for (int i = 0; i < M; ++i) {
          cplx gb = ld(gout, row, i);
          gv[i] = gb / d;
          gd -= (std::conj(gb) * v[i]).real() / (d * d);
        }
        // gt = U^H gv + 2 t gd
        for (int i = 0; i < M; ++i) {
          cplx s = 0.0;
          for (int j = i; j < M; ++j) s += std::conj(lower(u, k, j, i)) * gv[j];
          gt[i] = s + 2.0 * t[i] * gd;
        }
        if (gin[0]) {
          // From v = U t: gU_ij += gv_i conj(t_j); from t = U^H h:
          // gU_ji += h_j conj(gt_i). Lower triangle only.
          Tensor& gu = *gin[0];
          for (int i = 0; i < M; ++i)
            for (int j = 0; j <= i; ++j)
              addc(gu, k, i * M + j,
                   gv[i] * std::conj(t[j]) + ld(h, row, i) * std::conj(gt[j]));
        }
        if (gin[1]) {
          // gh = U gt
          for (int i = 0; i < M; ++i) {
            cplx s = 0.0;
            for (int j = 0; j <= i; ++j) s += lower(u, k, i, j) * gt[j];
            addc(*gin[1], row, i, s);
          }
        }
      }
  }
};

struct AssembleContextOp : nn::CustomOp {
  int L, K, P, C;
  bool bin_feature;
  AssembleContextOp(int l, int k, int p, int c, bool bf)
      : L(l), K(k), P(p), C(c), bin_feature(bf) {}
  std::string name() const override { return "assemble_context"; }

  int64_t out_cols() const { return 2 * P * (C + 1) + (bin_feature ? 1 : 0); }

  Tensor forward(const std::vector<const Tensor*>& in) override {
    const Tensor& y = *in[0];
    if (y.rows() != static_cast<int64_t>(L) * K || y.cols() != 2 * P)
      throw ShapeError("assemble_context: bad input shape");
    Tensor f({static_cast<int64_t>(L) * K, out_cols()});
    for (int l = 0; l < L; ++l)
      for (int k = 0; k < K; ++k) {
        int64_t row = static_cast<int64_t>(l) * K + k;
        for (int c = 0; c <= C; ++c) {
          int lsrc = l - c;
          if (lsrc < 0) continue;  // zero padding at the start
          int64_t src = static_cast<int64_t>(lsrc) * K + k;
          for (int j = 0; j < 2 * P; ++j) f.at(row, 2 * P * c + j) = y.at(src, j);
        }
        if (bin_feature)
          f.at(row, out_cols() - 1) = K > 1 ? static_cast<double>(k) / (K - 1) : 0.0;
      }
    return f;
  }

  void backward(const std::vector<const Tensor*>& in, const Tensor&,
                const Tensor& gout, const std::vector<Tensor*>& gin) override {
    if (!gin[0]) return;
    Tensor& gy = *gin[0];
    for (int l = 0; l < L; ++l)
      for (int k = 0; k < K; ++k) {
        int64_t row = static_cast<int64_t>(l) * K + k;
        for (int c = 0; c <= C; ++c) {
          int lsrc = l - c;
          if (lsrc < 0) continue;
          int64_t src = static_cast<int64_t>(lsrc) * K + k;
          for (int j = 0; j < 2 * P; ++j) gy.at(src, j) += gout.at(row, 2 * P * c + j);
        }
      }
  }
};

}  // namespace

Id project(nn::Tape& tape, Id beams, Id x, int frames, int bins, int channels,
           int num_beams) {
  return tape.custom(std::make_shared<ProjectOp>(frames, bins, channels, num_beams),
                     {beams, x});
}

Id mix(nn::Tape& tape, Id activations, Id beams_out, int num_beams) {
  return tape.custom(std::make_shared<MixOp>(num_beams), {activations, beams_out});
}

Id chol_beams(nn::Tape& tape, Id factors, Id steering, int bins, int channels,
              int num_beams) {
  return tape.custom(std::make_shared<CholBeamsOp>(bins, channels, num_beams),
                     {factors, steering});
}

Id assemble_context(nn::Tape& tape, Id compressed, int frames, int bins,
                    int num_beams, int context, bool bin_feature) {
  return tape.custom(
      std::make_shared<AssembleContextOp>(frames, bins, num_beams, context, bin_feature),
      {compressed});
}

}  // namespace beamkit::ops
