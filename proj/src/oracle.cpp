#include "beamkit/oracle.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "nlohmann/json.hpp"
#include "beamkit/tensorio.hpp"

namespace beamkit {

SpatialCovariance estimate_covariance(const MultichannelSpectrogram& spec,
                                      CovKind kind) {
  if (spec.frames < 1) throw InvalidArgument("estimate_covariance: empty spectrogram");
  SpatialCovariance cov;
  cov.bins = spec.bins;
  cov.channels = spec.channels;
  cov.kind = kind;
  cov.frame_count = spec.frames;
  cov.entries.assign(static_cast<size_t>(spec.bins) * spec.channels * spec.channels,
                     cplx());
  double inv_l = 1.0 / spec.frames;
  for (int k = 0; k < spec.bins; ++k)
    for (int l = 0; l < spec.frames; ++l) {
      const cplx* x = &spec.data[(static_cast<size_t>(l) * spec.bins + k) * spec.channels];
      for (int i = 0; i < spec.channels; ++i)
        for (int j = 0; j < spec.channels; ++j)
          cov.at(k, i, j) += x[i] * std::conj(x[j]) * inv_l;
    }
  return cov;
}

namespace {

Eigen::MatrixXcd loaded_matrix(const SpatialCovariance& cov, int k, double loading) {
  int m = cov.channels;
  Eigen::MatrixXcd a(m, m);
  double tr = 0.0;
  for (int i = 0; i < m; ++i) tr += cov.at(k, i, i).real();
  double eps = loading * std::max(tr, 1e-300) / m;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      a(i, j) = cov.at(k, i, j) + (i == j ? cplx(eps, 0.0) : cplx());
  return a;
}

}  // namespace

BinWeights ti_mvdr(const SpatialCovariance& noise_cov,
                   const std::vector<std::vector<cplx>>& atf, double loading) {
  int m = noise_cov.channels;
  if (static_cast<int>(atf.size()) != noise_cov.bins)
    throw ShapeError("ti_mvdr: atf bin count mismatch");
  BinWeights w;
  w.bins = noise_cov.bins;
  w.channels = m;
  w.values.assign(static_cast<size_t>(w.bins) * m, cplx());
  for (int k = 0; k < noise_cov.bins; ++k) {
    if (static_cast<int>(atf[k].size()) != m)
      throw ShapeError("ti_mvdr: atf channel count mismatch");
    Eigen::MatrixXcd a = loaded_matrix(noise_cov, k, loading);
    Eigen::VectorXcd c(m);
    for (int i = 0; i < m; ++i) c(i) = atf[k][i];
    Eigen::LDLT<Eigen::MatrixXcd> ldlt(a);
    if (ldlt.info() != Eigen::Success)
      throw NumericalError("ti_mvdr: factorization failed at bin " + std::to_string(k));
    Eigen::VectorXcd x = ldlt.solve(c);
    cplx denom = c.dot(x);
    if (!std::isfinite(std::abs(denom)) || std::abs(denom) == 0.0)
      throw NumericalError("ti_mvdr: degenerate constraint at bin " + std::to_string(k));
    for (int i = 0; i < m; ++i) w.bin(k)[i] = x(i) / denom;
  }
  return w;
}

BinWeights ti_mwf(const SpatialCovariance& mix_cov,
                  const SpatialCovariance& speech_cov, int reference_index,
                  double loading) {
  if (mix_cov.bins != speech_cov.bins || mix_cov.channels != speech_cov.channels)
    throw ShapeError("ti_mwf: covariance shape mismatch");
  int m = mix_cov.channels;
  if (reference_index < 0 || reference_index >= m)
    throw InvalidArgument("ti_mwf: reference index out of range");
  BinWeights w;
  w.bins = mix_cov.bins;
  w.channels = m;
  w.values.assign(static_cast<size_t>(w.bins) * m, cplx());
  for (int k = 0; k < mix_cov.bins; ++k) {
    Eigen::MatrixXcd a = loaded_matrix(mix_cov, k, loading);
    Eigen::VectorXcd rhs(m);
    for (int i = 0; i < m; ++i) rhs(i) = speech_cov.at(k, i, reference_index);
    Eigen::LDLT<Eigen::MatrixXcd> ldlt(a);
    if (ldlt.info() != Eigen::Success)
      throw NumericalError("ti_mwf: factorization failed at bin " + std::to_string(k));
    Eigen::VectorXcd x = ldlt.solve(rhs);
    for (int i = 0; i < m; ++i) w.bin(k)[i] = x(i);
  }
  return w;
}

std::vector<std::vector<cplx>> steering_atf(const ArrayGeometry& geom,
                                            const StftConfig& cfg, double doa_deg) {
  int bins = cfg.num_bins();
  std::vector<std::vector<cplx>> atf(bins);
  for (int k = 0; k < bins; ++k) {
    double f = k * geom.sample_rate / cfg.fft_size;
    atf[k] = steering_vector(geom, doa_deg, f).elements;
  }
  return atf;
}

std::vector<std::vector<cplx>> principal_atf(const SpatialCovariance& speech_cov,
                                             int reference_index) {
  int m = speech_cov.channels;
  if (reference_index < 0 || reference_index >= m)
    throw InvalidArgument("principal_atf: reference index out of range");
  std::vector<std::vector<cplx>> atf(speech_cov.bins);
  for (int k = 0; k < speech_cov.bins; ++k) {
    Eigen::MatrixXcd a(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) a(i, j) = speech_cov.at(k, i, j);
    a = 0.5 * (a + a.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a);
    if (es.info() != Eigen::Success)
      throw NumericalError("principal_atf: eigensolver failed at bin " + std::to_string(k));
    Eigen::VectorXcd v = es.eigenvectors().col(m - 1);  // largest eigenvalue
    cplx ref = v(reference_index);
    if (std::abs(ref) < 1e-12) ref = cplx(1.0, 0.0);
    atf[k].resize(m);
    for (int i = 0; i < m; ++i) atf[k][i] = v(i) / ref;
  }
  return atf;
}

void save_bin_weights(const std::string& path, const BinWeights& w,
                      const ArrayGeometry& geom) {
  nlohmann::json meta;
  meta["kind"] = "bin_weights";
  meta["K"] = w.bins;
  meta["M"] = w.channels;
  meta["P"] = 1;
  meta["geometry"] = nlohmann::json::parse(geometry_to_json(geom));
  NamedTensor t;
  t.name = "weights";
  t.shape = {w.bins, w.channels, 2};
  t.data.reserve(w.values.size() * 2);
  for (const cplx& z : w.values) {
    t.data.push_back(z.real());
    t.data.push_back(z.imag());
  }
  TensorFile file;
  file.manifest_json = meta.dump();
  file.tensors.push_back(std::move(t));
  save_tensor_file(path, file);
}

BinWeights load_bin_weights(const std::string& path, ArrayGeometry* geom_out) {
  TensorFile file = load_tensor_file(path);
  nlohmann::json meta = nlohmann::json::parse(file.manifest_json);
  if (meta.value("kind", "") != "bin_weights")
    throw IoError("load_bin_weights: not a weight file: " + path);
  BinWeights w;
  w.bins = meta.at("K").get<int>();
  w.channels = meta.at("M").get<int>();
  const NamedTensor& t = file.find("weights");
  std::vector<int64_t> want = {w.bins, w.channels, 2};
  if (t.shape != want) throw IoError("load_bin_weights: tensor shape mismatch");
  w.values.resize(t.data.size() / 2);
  for (size_t i = 0; i < w.values.size(); ++i)
    w.values[i] = cplx(t.data[2 * i], t.data[2 * i + 1]);
  if (geom_out) *geom_out = geometry_from_json(meta.at("geometry").dump());
  return w;
}

Spectrogram apply_bin_weights(const BinWeights& w, const MultichannelSpectrogram& x) {
  if (w.bins != x.bins || w.channels != x.channels)
    throw ShapeError("apply_bin_weights: shape mismatch");
  Spectrogram s;
  s.frames = x.frames;
  s.bins = x.bins;
  s.config = x.config;
  s.data.assign(static_cast<size_t>(x.frames) * x.bins, cplx());
  for (int l = 0; l < x.frames; ++l)
    for (int k = 0; k < x.bins; ++k) {
      const cplx* wk = w.bin(k);
      cplx acc = 0.0;
      for (int m = 0; m < x.channels; ++m)
        acc += std::conj(wk[m]) * x.at(l, k, m);
      s.at(l, k) = acc;
    }
  return s;
}

}  // namespace beamkit
