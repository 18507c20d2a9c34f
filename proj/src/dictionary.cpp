#include "beamkit/dictionary.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>

#include "nlohmann/json.hpp"
#include "beamkit/tensorio.hpp"

namespace beamkit {

std::string regime_name(DictRegime r) {
  switch (r) {
    case DictRegime::FixedDs: return "fixed-DS";
    case DictRegime::FixedSd: return "fixed-SD";
    case DictRegime::SemiLearnable: return "semi-learnable";
    case DictRegime::FullPhysics: return "full-learnable-physics";
    case DictRegime::FullFree: return "full-learnable-free";
  }
  throw InvalidArgument("bad regime");
}

DictRegime regime_from_name(const std::string& s) {
  if (s == "fixed-DS" || s == "ds") return DictRegime::FixedDs;
  if (s == "fixed-SD" || s == "sd") return DictRegime::FixedSd;
  if (s == "semi-learnable" || s == "semi") return DictRegime::SemiLearnable;
  if (s == "full-learnable-physics" || s == "full-physics") return DictRegime::FullPhysics;
  if (s == "full-learnable-free" || s == "full-free" || s == "full") return DictRegime::FullFree;
  throw InvalidArgument("unknown dictionary regime '" + s + "'");
}

bool regime_is_fixed(DictRegime r) {
  return r == DictRegime::FixedDs || r == DictRegime::FixedSd;
}

std::vector<double> uniform_doa_grid(int num_beams) {
  if (num_beams < 1) throw InvalidArgument("uniform_doa_grid: P must be >= 1");
  std::vector<double> grid(num_beams);
  for (int p = 0; p < num_beams; ++p) grid[p] = p * (360.0 / num_beams);
  return grid;
}

std::vector<cplx> fixed_beam(const SteeringVector& h, const CoherenceMatrix& phi,
                             double loading) {
  int m = static_cast<int>(h.elements.size());
  if (phi.m != m) throw ShapeError("fixed_beam: steering/coherence size mismatch");

  Eigen::MatrixXcd a(m, m);
  double tr = 0.0;
  for (int i = 0; i < m; ++i) tr += phi.at(i, i).real();
  double eps = loading * tr / m;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = phi.at(i, j) + (i == j ? cplx(eps, 0.0) : cplx());

  Eigen::VectorXcd hv(m);
  for (int i = 0; i < m; ++i) hv(i) = h.elements[i];

  Eigen::LLT<Eigen::MatrixXcd> llt(a);
  if (llt.info() != Eigen::Success)
    throw NumericalError("fixed_beam: loaded coherence matrix is not positive definite");
  Eigen::VectorXcd x = llt.solve(hv);
  cplx denom = hv.dot(x);  // h^H x, real-positive for Hermitian PD
  if (!(std::abs(denom) > 0.0) || !std::isfinite(std::abs(denom)))
    throw NumericalError("fixed_beam: degenerate normalization");
  std::vector<cplx> b(m);
  for (int i = 0; i < m; ++i) b[i] = x(i) / denom;
  return b;
}

BeamDictionary build_fixed_dictionary(const ArrayGeometry& geom,
                                      const StftConfig& cfg, DictRegime regime,
                                      int num_beams, double loading) {
  if (!regime_is_fixed(regime))
    throw InvalidArgument("build_fixed_dictionary: regime must be DS or SD");
  geom.validate();
  cfg.validate();
  int bins = cfg.num_bins();
  int m = geom.num_mics();

  BeamDictionary dict;
  dict.bins = bins;
  dict.channels = m;
  dict.num_beams = num_beams;
  dict.regime = regime;
  dict.doa_grid_deg = uniform_doa_grid(num_beams);
  dict.geometry = geom;
  dict.beams.resize(static_cast<size_t>(bins) * num_beams * m);

  for (int k = 0; k < bins; ++k) {
    double f = k * geom.sample_rate / cfg.fft_size;
    CoherenceMatrix phi;
    if (regime == DictRegime::FixedSd) {
      phi = diffuse_coherence(geom, f);
    } else {
      phi.freq_hz = f;
      phi.m = m;
      phi.entries.assign(static_cast<size_t>(m) * m, cplx());
      for (int i = 0; i < m; ++i) phi.entries[static_cast<size_t>(i) * m + i] = cplx(1.0, 0.0);
    }
    for (int p = 0; p < num_beams; ++p) {
      SteeringVector h = steering_vector(geom, dict.doa_grid_deg[p], f);
      std::vector<cplx> b = fixed_beam(h, phi, loading);
      for (int i = 0; i < m; ++i) dict.at(k, p, i) = b[i];
    }
  }
  return dict;
}

namespace {

// Steering vectors for every (bin, beam) as a (K*P, 2M) tensor.
nn::Tensor steering_tensor(const ArrayGeometry& geom, const StftConfig& cfg,
                           const std::vector<double>& grid) {
  int bins = cfg.num_bins();
  int m = geom.num_mics();
  int num_beams = static_cast<int>(grid.size());
  nn::Tensor t({static_cast<int64_t>(bins) * num_beams, 2 * m});
  for (int k = 0; k < bins; ++k) {
    double f = k * geom.sample_rate / cfg.fft_size;
    for (int p = 0; p < num_beams; ++p) {
      SteeringVector h = steering_vector(geom, grid[p], f);
      int64_t row = static_cast<int64_t>(k) * num_beams + p;
      for (int i = 0; i < m; ++i) {
        t.at(row, 2 * i) = h.elements[i].real();
        t.at(row, 2 * i + 1) = h.elements[i].imag();
      }
    }
  }
  return t;
}

// Lower Cholesky factor of (diffuse coherence + eps I)^-1, per bin, packed
// as a (K, 2*M*M) tensor. Upper-triangle slots are written as zero.
nn::Tensor chol_init_tensor(const ArrayGeometry& geom, const StftConfig& cfg,
                            double loading) {
  int bins = cfg.num_bins();
  int m = geom.num_mics();
  nn::Tensor t({bins, 2 * m * m});
  for (int k = 0; k < bins; ++k) {
    double f = k * geom.sample_rate / cfg.fft_size;
    CoherenceMatrix phi = diffuse_coherence(geom, f);
    Eigen::MatrixXcd a(m, m);
    double tr = 0.0;
    for (int i = 0; i < m; ++i) tr += phi.at(i, i).real();
    double eps = loading * tr / m;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        a(i, j) = phi.at(i, j) + (i == j ? cplx(eps, 0.0) : cplx());
    Eigen::MatrixXcd inv = a.llt().solve(Eigen::MatrixXcd::Identity(m, m));
    inv = 0.5 * (inv + inv.adjoint()).eval();
    Eigen::LLT<Eigen::MatrixXcd> llt(inv);
    if (llt.info() != Eigen::Success)
      throw NumericalError("semi-learnable init: Cholesky of inverse coherence failed");
    Eigen::MatrixXcd lower = llt.matrixL();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        cplx v = j <= i ? lower(i, j) : cplx();
        t.at(k, 2 * (i * m + j)) = v.real();
        t.at(k, 2 * (i * m + j) + 1) = v.imag();
      }
    }
  }
  return t;
}

}  // namespace

void chol_materialize(const nn::Tensor& factors, const nn::Tensor& steering,
                      int bins, int channels, int num_beams, nn::Tensor* beams) {
  int m = channels;
  if (factors.rows() != bins || factors.cols() != 2 * m * m)
    throw ShapeError("chol_materialize: bad factor shape");
  if (steering.rows() != static_cast<int64_t>(bins) * num_beams ||
      steering.cols() != 2 * m)
    throw ShapeError("chol_materialize: bad steering shape");
  *beams = nn::Tensor({static_cast<int64_t>(bins) * num_beams, 2 * m});

  std::vector<cplx> u(static_cast<size_t>(m) * m), h(m), t(m), v(m);
  for (int k = 0; k < bins; ++k) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        u[static_cast<size_t>(i) * m + j] =
            j <= i ? cplx(factors.at(k, 2 * (i * m + j)), factors.at(k, 2 * (i * m + j) + 1))
                   : cplx();
    for (int p = 0; p < num_beams; ++p) {
      int64_t row = static_cast<int64_t>(k) * num_beams + p;
      for (int i = 0; i < m; ++i)
        h[i] = cplx(steering.at(row, 2 * i), steering.at(row, 2 * i + 1));
      // t = U^H h
      for (int i = 0; i < m; ++i) {
        cplx s = 0.0;
        for (int j = 0; j < m; ++j) s += std::conj(u[static_cast<size_t>(j) * m + i]) * h[j];
        t[i] = s;
      }
      double d = 0.0;
      for (int i = 0; i < m; ++i) d += std::norm(t[i]);
      d += 1e-30;
      // v = U t
      for (int i = 0; i < m; ++i) {
        cplx s = 0.0;
        for (int j = 0; j < m; ++j) s += u[static_cast<size_t>(i) * m + j] * t[j];
        v[i] = s / d;
      }
      for (int i = 0; i < m; ++i) {
        beams->at(row, 2 * i) = v[i].real();
        beams->at(row, 2 * i + 1) = v[i].imag();
      }
    }
  }
}

std::vector<nn::ParamPtr> TrainableDictionary::params() const {
  std::vector<nn::ParamPtr> out;
  if (chol.factors) out.push_back(chol.factors);
  if (steering) out.push_back(steering);
  if (free_beams) out.push_back(free_beams);
  return out;
}

BeamDictionary TrainableDictionary::materialize() const {
  BeamDictionary dict;
  dict.bins = bins;
  dict.channels = channels;
  dict.num_beams = num_beams;
  dict.regime = regime;
  dict.doa_grid_deg = doa_grid_deg;
  dict.geometry = geometry;

  nn::Tensor flat;
  switch (regime) {
    case DictRegime::FixedDs:
    case DictRegime::FixedSd:
      flat = fixed_beams;
      break;
    case DictRegime::SemiLearnable:
      chol_materialize(chol.factors->value, steering_fixed, bins, channels,
                       num_beams, &flat);
      break;
    case DictRegime::FullPhysics:
      chol_materialize(chol.factors->value, steering->value, bins, channels,
                       num_beams, &flat);
      break;
    case DictRegime::FullFree:
      flat = free_beams->value;
      break;
  }
  BeamDictionary like = dict;
  like.beams.resize(static_cast<size_t>(bins) * num_beams * channels);
  BeamDictionary out = beams_from_tensor(flat, like);
  return out;
}

TrainableDictionary init_fixed(const ArrayGeometry& geom, const StftConfig& cfg,
                               DictRegime regime, int num_beams, double loading) {
  TrainableDictionary d;
  d.regime = regime;
  d.bins = cfg.num_bins();
  d.channels = geom.num_mics();
  d.num_beams = num_beams;
  d.doa_grid_deg = uniform_doa_grid(num_beams);
  d.geometry = geom;
  d.loading = loading;
  d.fixed_beams = beams_to_tensor(build_fixed_dictionary(geom, cfg, regime, num_beams, loading));
  return d;
}

TrainableDictionary init_semi_learnable(const ArrayGeometry& geom,
                                        const StftConfig& cfg, int num_beams,
                                        double loading) {
  TrainableDictionary d;
  d.regime = DictRegime::SemiLearnable;
  d.bins = cfg.num_bins();
  d.channels = geom.num_mics();
  d.num_beams = num_beams;
  d.doa_grid_deg = uniform_doa_grid(num_beams);
  d.geometry = geom;
  d.loading = loading;
  d.chol.bins = d.bins;
  d.chol.channels = d.channels;
  d.chol.factors = std::make_shared<nn::Param>(
      "dict.chol_factors", chol_init_tensor(geom, cfg, loading));
  d.steering_fixed = steering_tensor(geom, cfg, d.doa_grid_deg);
  return d;
}

TrainableDictionary init_full_learnable(const ArrayGeometry& geom,
                                        const StftConfig& cfg, int num_beams,
                                        bool keep_physics, double loading) {
  if (keep_physics) {
    TrainableDictionary d = init_semi_learnable(geom, cfg, num_beams, loading);
    d.regime = DictRegime::FullPhysics;
    d.steering = std::make_shared<nn::Param>("dict.steering",
                                             std::move(d.steering_fixed));
    d.steering_fixed = nn::Tensor();
    return d;
  }
  TrainableDictionary d;
  d.regime = DictRegime::FullFree;
  d.bins = cfg.num_bins();
  d.channels = geom.num_mics();
  d.num_beams = num_beams;
  d.doa_grid_deg = uniform_doa_grid(num_beams);
  d.geometry = geom;
  d.loading = loading;
  d.free_beams = std::make_shared<nn::Param>(
      "dict.beams",
      beams_to_tensor(build_fixed_dictionary(geom, cfg, DictRegime::FixedSd,
                                             num_beams, loading)));
  return d;
}

nn::Tensor beams_to_tensor(const BeamDictionary& dict) {
  nn::Tensor t({static_cast<int64_t>(dict.bins) * dict.num_beams, 2 * dict.channels});
  for (int k = 0; k < dict.bins; ++k)
    for (int p = 0; p < dict.num_beams; ++p) {
      int64_t row = static_cast<int64_t>(k) * dict.num_beams + p;
      for (int m = 0; m < dict.channels; ++m) {
        t.at(row, 2 * m) = dict.at(k, p, m).real();
        t.at(row, 2 * m + 1) = dict.at(k, p, m).imag();
      }
    }
  return t;
}

BeamDictionary beams_from_tensor(const nn::Tensor& t, const BeamDictionary& like) {
  if (t.rows() != static_cast<int64_t>(like.bins) * like.num_beams ||
      t.cols() != 2 * like.channels)
    throw ShapeError("beams_from_tensor: shape mismatch");
  BeamDictionary out = like;
  out.beams.resize(static_cast<size_t>(like.bins) * like.num_beams * like.channels);
  for (int k = 0; k < like.bins; ++k)
    for (int p = 0; p < like.num_beams; ++p) {
      int64_t row = static_cast<int64_t>(k) * like.num_beams + p;
      for (int m = 0; m < like.channels; ++m)
        out.at(k, p, m) = cplx(t.at(row, 2 * m), t.at(row, 2 * m + 1));
    }
  return out;
}

void save_dictionary(const std::string& path, const BeamDictionary& dict) {
  nlohmann::json meta;
  meta["kind"] = "beam_dictionary";
  meta["K"] = dict.bins;
  meta["M"] = dict.channels;
  meta["P"] = dict.num_beams;
  meta["regime"] = regime_name(dict.regime);
  meta["doa_grid"] = dict.doa_grid_deg;
  meta["geometry"] = nlohmann::json::parse(geometry_to_json(dict.geometry));

  NamedTensor t;
  t.name = "beams";
  t.shape = {dict.bins, dict.num_beams, dict.channels, 2};
  t.data.reserve(dict.beams.size() * 2);
  for (const cplx& z : dict.beams) {
    t.data.push_back(z.real());
    t.data.push_back(z.imag());
  }
  TensorFile file;
  file.manifest_json = meta.dump();
  file.tensors.push_back(std::move(t));
  save_tensor_file(path, file);
}

BeamDictionary load_dictionary(const std::string& path) {
  TensorFile file = load_tensor_file(path);
  nlohmann::json meta = nlohmann::json::parse(file.manifest_json);
  if (meta.value("kind", "") != "beam_dictionary")
    throw IoError("load_dictionary: not a dictionary file: " + path);
  BeamDictionary dict;
  dict.bins = meta.at("K").get<int>();
  dict.channels = meta.at("M").get<int>();
  dict.num_beams = meta.at("P").get<int>();
  dict.regime = regime_from_name(meta.at("regime").get<std::string>());
  dict.doa_grid_deg = meta.at("doa_grid").get<std::vector<double>>();
  dict.geometry = geometry_from_json(meta.at("geometry").dump());
  const NamedTensor& t = file.find("beams");
  std::vector<int64_t> want = {dict.bins, dict.num_beams, dict.channels, 2};
  if (t.shape != want) throw IoError("load_dictionary: beam tensor shape mismatch");
  dict.beams.resize(t.data.size() / 2);
  for (size_t i = 0; i < dict.beams.size(); ++i)
    dict.beams[i] = cplx(t.data[2 * i], t.data[2 * i + 1]);
  return dict;
}

}  // namespace beamkit
