#include "beamkit/taylor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "nlohmann/json.hpp"
#include "beamkit/tensorio.hpp"

namespace beamkit::taylor {

void TaylorConfig::validate() const {
  if (order < 0) throw InvalidArgument("taylor: order must be >= 0");
  if (num_beams < 1) throw InvalidArgument("taylor: need at least one beam");
  if (hidden < 1) throw InvalidArgument("taylor: hidden width must be >= 1");
  if (context < 0) throw InvalidArgument("taylor: context must be >= 0");
  if (!(compression > 0.0) || compression > 1.0)
    throw InvalidArgument("taylor: compression must be in (0, 1]");
  if (!(lr > 0.0)) throw InvalidArgument("taylor: lr must be > 0");
  if (epochs < 1 || batch < 1) throw InvalidArgument("taylor: epochs/batch must be >= 1");
}

std::string TaylorConfig::to_json() const {
  nlohmann::json j;
  j["order"] = order;
  j["num_beams"] = num_beams;
  j["hidden"] = hidden;
  j["context"] = context;
  j["compression"] = compression;
  j["feature_eps"] = feature_eps;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch"] = batch;
  j["seed"] = seed;
  return j.dump();
}

TaylorConfig TaylorConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw IoError(std::string("taylor config: ") + e.what());
  }
  TaylorConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "order") c.order = it.value().get<int>();
    else if (k == "num_beams") c.num_beams = it.value().get<int>();
    else if (k == "hidden") c.hidden = it.value().get<int>();
    else if (k == "context") c.context = it.value().get<int>();
    else if (k == "compression") c.compression = it.value().get<double>();
    else if (k == "feature_eps") c.feature_eps = it.value().get<double>();
    else if (k == "lr") c.lr = it.value().get<double>();
    else if (k == "epochs") c.epochs = it.value().get<int>();
    else if (k == "batch") c.batch = it.value().get<int>();
    else if (k == "seed") c.seed = it.value().get<uint64_t>();
    else throw IoError("taylor config: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

int Model::mixer_input_dim() const {
  return 2 * cfg.num_beams * (cfg.context + 1) + 1;
}

std::vector<nn::ParamPtr> Model::params() const {
  std::vector<nn::ParamPtr> out = dict.params();
  out.insert(out.end(), {mix_w1, mix_b1, mix_w2, mix_b2, mix_w3, mix_b3});
  for (const OrderModule& om : orders)
    out.insert(out.end(), {om.w1, om.b1, om.w2, om.b2});
  return out;
}

Model make_model(TrainableDictionary dict, const TaylorConfig& cfg, Rng& rng) {
  cfg.validate();
  if (dict.num_beams != cfg.num_beams)
    throw InvalidArgument("make_model: dictionary and config disagree on P");
  Model m;
  m.cfg = cfg;
  m.dict = std::move(dict);

  auto mk = [&](const std::string& name, int64_t in, int64_t out) {
    return std::make_shared<nn::Param>(name, nn::uniform_init({in, out}, in, out, rng));
  };
  auto mkb = [&](const std::string& name, int64_t out) {
    return std::make_shared<nn::Param>(name, nn::Tensor({1, out}));
  };

  int d = m.mixer_input_dim();
  int h = cfg.hidden;
  int p2 = 2 * cfg.num_beams;
  m.mix_w1 = mk("mixer.w1", d, h);
  m.mix_b1 = mkb("mixer.b1", h);
  m.mix_w2 = mk("mixer.w2", h, h);
  m.mix_b2 = mkb("mixer.b2", h);
  m.mix_w3 = mk("mixer.w3", h, p2);
  m.mix_b3 = mkb("mixer.b3", p2);
  for (int q = 0; q < cfg.order; ++q) {
    OrderModule om;
    std::string base = "order" + std::to_string(q);
    om.w1 = mk(base + ".w1", p2 + 2, h);
    om.b1 = mkb(base + ".b1", h);
    om.w2 = mk(base + ".w2", h, 2);
    om.b2 = mkb(base + ".b2", 2);
    m.orders.push_back(std::move(om));
  }
  return m;
}

SceneTensors scene_to_tensors(const Scene& scene, const StftConfig& cfg) {
  MultichannelSpectrogram x = analyze(scene.mixture, cfg);
  Spectrogram s = analyze_mono(scene.clean_ref, cfg);
  SceneTensors t;
  t.frames = x.frames;
  t.bins = x.bins;
  t.channels = x.channels;
  t.x = nn::Tensor({static_cast<int64_t>(x.frames) * x.bins, 2 * x.channels});
  for (int l = 0; l < x.frames; ++l)
    for (int k = 0; k < x.bins; ++k) {
      int64_t row = static_cast<int64_t>(l) * x.bins + k;
      for (int m = 0; m < x.channels; ++m) {
        t.x.at(row, 2 * m) = x.at(l, k, m).real();
        t.x.at(row, 2 * m + 1) = x.at(l, k, m).imag();
      }
    }
  t.s_clean = nn::Tensor({static_cast<int64_t>(s.frames) * s.bins, 2});
  for (int l = 0; l < s.frames; ++l)
    for (int k = 0; k < s.bins; ++k) {
      int64_t row = static_cast<int64_t>(l) * s.bins + k;
      t.s_clean.at(row, 0) = s.at(l, k).real();
      t.s_clean.at(row, 1) = s.at(l, k).imag();
    }
  return t;
}

namespace {

nn::Tape::Id dict_node(nn::Tape& tape, const Model& model) {
  const TrainableDictionary& d = model.dict;
  switch (d.regime) {
    case DictRegime::FixedDs:
    case DictRegime::FixedSd:
      return tape.constant(d.fixed_beams);
    case DictRegime::SemiLearnable:
      return ops::chol_beams(tape, tape.param(d.chol.factors),
                             tape.constant(d.steering_fixed), d.bins, d.channels,
                             d.num_beams);
    case DictRegime::FullPhysics:
      return ops::chol_beams(tape, tape.param(d.chol.factors),
                             tape.param(d.steering), d.bins, d.channels,
                             d.num_beams);
    case DictRegime::FullFree:
      return tape.param(d.free_beams);
  }
  throw InvalidArgument("dict_node: bad regime");
}

}  // namespace

void forward_0th(nn::Tape& tape, const Model& model, ForwardIds& ids, int frames,
                 int bins) {
  const TaylorConfig& cfg = model.cfg;
  nn::Tape::Id feats =
      ops::assemble_context(tape, ids.compressed, frames, bins, cfg.num_beams,
                            cfg.context, /*bin_feature=*/true);
  nn::Tape::Id h1 = tape.dense(feats, tape.param(model.mix_w1),
                               tape.param(model.mix_b1), nn::Act::Tanh);
  nn::Tape::Id h2 = tape.dense(h1, tape.param(model.mix_w2),
                               tape.param(model.mix_b2), nn::Act::Tanh);
  ids.activations = tape.dense(h2, tape.param(model.mix_w3),
                               tape.param(model.mix_b3), nn::Act::Linear);
  ids.zeroth = ops::mix(tape, ids.activations, ids.beam_out, cfg.num_beams);
}

nn::Tape::Id recursion_step(nn::Tape& tape, const Model& model, int q,
                            nn::Tape::Id h_prev, nn::Tape::Id compressed) {
  if (q < 0 || q >= static_cast<int>(model.orders.size()))
    throw InvalidArgument("recursion_step: order index out of range");
  const TaylorConfig& cfg = model.cfg;
  const OrderModule& om = model.orders[q];
  nn::Tape::Id hc = tape.compress_pairs(h_prev, cfg.compression, cfg.feature_eps);
  nn::Tape::Id fin = tape.concat_cols(compressed, hc);
  nn::Tape::Id z1 =
      tape.dense(fin, tape.param(om.w1), tape.param(om.b1), nn::Act::Tanh);
  nn::Tape::Id z =
      tape.dense(z1, tape.param(om.w2), tape.param(om.b2), nn::Act::Linear);
  return tape.add_scaled(z, h_prev, static_cast<double>(q));
}

ForwardIds taylor_forward(nn::Tape& tape, const Model& model, const nn::Tensor& x,
                          int frames, int bins) {
  const TaylorConfig& cfg = model.cfg;
  const TrainableDictionary& d = model.dict;
  if (bins != d.bins)
    throw ShapeError("taylor_forward: spectrogram bins do not match dictionary");
  if (x.rows() != static_cast<int64_t>(frames) * bins || x.cols() != 2 * d.channels)
    throw ShapeError("taylor_forward: bad input tensor shape");

  ForwardIds ids;
  nn::Tape::Id xc = tape.constant(x);
  ids.beams = dict_node(tape, model);
  ids.beam_out =
      ops::project(tape, ids.beams, xc, frames, bins, d.channels, d.num_beams);
  ids.compressed =
      tape.compress_pairs(ids.beam_out, cfg.compression, cfg.feature_eps);
  forward_0th(tape, model, ids, frames, bins);

  nn::Tape::Id h = ids.zeroth;  // H_0 := S0 seeds the recursion
  nn::Tape::Id acc = ids.zeroth;
  for (int q = 0; q < cfg.order; ++q) {
    h = recursion_step(tape, model, q, h, ids.compressed);
    ids.order_terms.push_back(h);
    acc = tape.add(acc, h);
  }
  ids.estimate = acc;
  return ids;
}

nn::Tape::Id taylor_loss(nn::Tape& tape, const Model& model, nn::Tape::Id estimate,
                         const nn::Tensor& s_clean) {
  const TaylorConfig& cfg = model.cfg;
  if (tape.val(estimate).rows() != s_clean.rows())
    throw ShapeError("taylor_loss: estimate/target row mismatch");
  double n = static_cast<double>(s_clean.rows());
  nn::Tape::Id target = tape.constant(s_clean);

  nn::Tape::Id ce = tape.compress_pairs(estimate, cfg.compression, cfg.feature_eps);
  nn::Tape::Id ct = tape.compress_pairs(target, cfg.compression, cfg.feature_eps);
  nn::Tape::Id complex_term =
      tape.scale(tape.sum_all(tape.square(tape.sub(ce, ct))), 1.0 / n);

  nn::Tape::Id me = tape.magnitude_pow(estimate, cfg.compression, cfg.feature_eps);
  nn::Tape::Id mt = tape.magnitude_pow(target, cfg.compression, cfg.feature_eps);
  nn::Tape::Id mag_term =
      tape.scale(tape.sum_all(tape.square(tape.sub(me, mt))), 1.0 / n);

  return tape.add(complex_term, mag_term);
}

Spectrogram enhance(const Model& model, const MultichannelSpectrogram& x,
                    ActivationMatrix* activations_out) {
  if (x.channels != model.dict.channels)
    throw ShapeError("enhance: channel count mismatch");
  nn::Tensor xt({static_cast<int64_t>(x.frames) * x.bins, 2 * x.channels});
  for (int l = 0; l < x.frames; ++l)
    for (int k = 0; k < x.bins; ++k) {
      int64_t row = static_cast<int64_t>(l) * x.bins + k;
      for (int m = 0; m < x.channels; ++m) {
        xt.at(row, 2 * m) = x.at(l, k, m).real();
        xt.at(row, 2 * m + 1) = x.at(l, k, m).imag();
      }
    }
  nn::Tape tape;
  ForwardIds ids = taylor_forward(tape, model, xt, x.frames, x.bins);
  const nn::Tensor& est = tape.val(ids.estimate);
  Spectrogram out;
  out.frames = x.frames;
  out.bins = x.bins;
  out.config = x.config;
  out.data.resize(static_cast<size_t>(x.frames) * x.bins);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = cplx(est.data[2 * i], est.data[2 * i + 1]);
  if (activations_out) {
    const nn::Tensor& g = tape.val(ids.activations);
    activations_out->frames = x.frames;
    activations_out->bins = x.bins;
    activations_out->num_beams = model.cfg.num_beams;
    activations_out->values.resize(static_cast<size_t>(x.frames) * x.bins *
                                   model.cfg.num_beams);
    for (int64_t r = 0; r < g.rows(); ++r)
      for (int p = 0; p < model.cfg.num_beams; ++p)
        activations_out->values[static_cast<size_t>(r) * model.cfg.num_beams + p] =
            cplx(g.at(r, 2 * p), g.at(r, 2 * p + 1));
  }
  return out;
}

double LrSchedule::observe(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
    if (bad_epochs_ >= 2) {
      lr_ *= 0.5;
      bad_epochs_ = 0;
    }
  }
  return lr_;
}

double mean_loss(const Model& model, const std::vector<SceneTensors>& set) {
  if (set.empty()) throw InvalidArgument("mean_loss: empty set");
  double acc = 0.0;
  for (const SceneTensors& sc : set) {
    nn::Tape tape;
    ForwardIds ids = taylor_forward(tape, model, sc.x, sc.frames, sc.bins);
    nn::Tape::Id loss = taylor_loss(tape, model, ids.estimate, sc.s_clean);
    acc += tape.val(loss).data[0];
  }
  return acc / static_cast<double>(set.size());
}

TrainResult train(Model& model, const std::vector<SceneTensors>& train_set,
                  const std::vector<SceneTensors>& val_set,
                  const EpochCallback& on_epoch) {
  const TaylorConfig& cfg = model.cfg;
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw InvalidArgument("train: train/validation splits must be non-empty");

  std::vector<nn::ParamPtr> params = model.params();
  nn::Adam adam({cfg.lr});
  LrSchedule sched(cfg.lr);
  Rng rng(cfg.seed ^ 0x5eedul);

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's own stream keeps reruns bit-identical.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);

    double loss_sum = 0.0;
    size_t pos = 0;
    int batch_id = 0;
    while (pos < order.size()) {
      size_t take = std::min<size_t>(cfg.batch, order.size() - pos);
      for (const nn::ParamPtr& p : params) p->zero_grad();
      for (size_t b = 0; b < take; ++b) {
        const SceneTensors& sc = train_set[order[pos + b]];
        try {
          nn::Tape tape;
          ForwardIds ids = taylor_forward(tape, model, sc.x, sc.frames, sc.bins);
          nn::Tape::Id loss = taylor_loss(tape, model, ids.estimate, sc.s_clean);
          loss_sum += tape.val(loss).data[0];
          tape.backward(loss, 1.0 / static_cast<double>(take));
        } catch (const PoisonedGraph& e) {
          throw PoisonedGraph(std::string(e.what()) + " [epoch " +
                              std::to_string(epoch) + ", batch " +
                              std::to_string(batch_id) + ", scene " +
                              std::to_string(order[pos + b]) + "]");
        }
      }
      adam.step(params);
      pos += take;
      ++batch_id;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(train_set.size());
    log.val_loss = mean_loss(model, val_set);
    log.lr = sched.observe(log.val_loss);
    adam.set_lr(log.lr);
    result.log.push_back(log);

    if (log.val_loss < result.best_val_loss) {
      result.best_val_loss = log.val_loss;
      result.best_epoch = epoch;
      result.best_params.clear();
      for (const nn::ParamPtr& p : params) result.best_params.push_back(p->value);
    }
    if (on_epoch) on_epoch(log);
  }

  if (!result.best_params.empty())
    for (size_t i = 0; i < params.size(); ++i)
      params[i]->value = result.best_params[i];
  return result;
}

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_train_log_csv: cannot open " + path);
  f << "epoch,train_loss,val_loss,lr\n";
  f.precision(12);
  for (const EpochLog& e : log)
    f << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.lr << "\n";
  if (!f) throw IoError("write_train_log_csv: write failed");
}

namespace {

StftConfig stft_from_meta(const nlohmann::json& j) {
  return make_stft_config(j.at("win_len").get<int>(), j.at("hop").get<int>(),
                          j.at("fft_size").get<int>(),
                          j.at("compression_power").get<double>());
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     const StftConfig& stft, const nn::Adam& adam, int epoch,
                     double best_val_loss) {
  nlohmann::json meta;
  meta["kind"] = "checkpoint";
  meta["config"] = nlohmann::json::parse(model.cfg.to_json());
  meta["regime"] = regime_name(model.dict.regime);
  meta["loading"] = model.dict.loading;
  meta["geometry"] = nlohmann::json::parse(geometry_to_json(model.dict.geometry));
  meta["stft"] = {{"win_len", stft.win_len},
                  {"hop", stft.hop},
                  {"fft_size", stft.fft_size},
                  {"compression_power", stft.compression_power}};
  meta["epoch"] = epoch;
  meta["best_val_loss"] = best_val_loss;
  meta["adam"] = {{"lr", adam.lr()},
                  {"steps", adam.steps()},
                  {"beta1", adam.config().beta1},
                  {"beta2", adam.config().beta2},
                  {"eps", adam.config().eps}};

  TensorFile file;
  nlohmann::json shapes = nlohmann::json::array();
  for (const nn::ParamPtr& p : model.params()) {
    NamedTensor t;
    t.name = p->name;
    t.shape = p->value.shape;
    t.data = p->value.data;
    file.tensors.push_back(std::move(t));
    shapes.push_back({{"name", p->name}, {"shape", p->value.shape}});
    if (!p->adam_m.data.empty()) {
      NamedTensor m{"adam_m:" + p->name, p->adam_m.shape, p->adam_m.data};
      NamedTensor v{"adam_v:" + p->name, p->adam_v.shape, p->adam_v.data};
      file.tensors.push_back(std::move(m));
      file.tensors.push_back(std::move(v));
    }
  }
  meta["params"] = shapes;
  file.manifest_json = meta.dump();
  save_tensor_file(path, file);
}

Checkpoint load_checkpoint(const std::string& path) {
  TensorFile file = load_tensor_file(path);
  nlohmann::json meta = nlohmann::json::parse(file.manifest_json);
  if (meta.value("kind", "") != "checkpoint")
    throw IoError("load_checkpoint: not a checkpoint file: " + path);

  Checkpoint ck;
  TaylorConfig cfg = TaylorConfig::from_json(meta.at("config").dump());
  ArrayGeometry geom = geometry_from_json(meta.at("geometry").dump());
  ck.stft = stft_from_meta(meta.at("stft"));
  DictRegime regime = regime_from_name(meta.at("regime").get<std::string>());
  double loading = meta.at("loading").get<double>();

  TrainableDictionary dict;
  switch (regime) {
    case DictRegime::FixedDs:
    case DictRegime::FixedSd:
      dict = init_fixed(geom, ck.stft, regime, cfg.num_beams, loading);
      break;
    case DictRegime::SemiLearnable:
      dict = init_semi_learnable(geom, ck.stft, cfg.num_beams, loading);
      break;
    case DictRegime::FullPhysics:
      dict = init_full_learnable(geom, ck.stft, cfg.num_beams, true, loading);
      break;
    case DictRegime::FullFree:
      dict = init_full_learnable(geom, ck.stft, cfg.num_beams, false, loading);
      break;
  }

  Rng rng(0);
  ck.model = make_model(std::move(dict), cfg, rng);
  for (const nn::ParamPtr& p : ck.model.params()) {
    const NamedTensor& t = file.find(p->name);
    if (t.shape != p->value.shape)
      throw IoError("load_checkpoint: shape mismatch for '" + p->name + "'");
    p->value.data = t.data;
    if (file.contains("adam_m:" + p->name)) {
      p->adam_m = nn::Tensor(p->value.shape);
      p->adam_m.data = file.find("adam_m:" + p->name).data;
      p->adam_v = nn::Tensor(p->value.shape);
      p->adam_v.data = file.find("adam_v:" + p->name).data;
    }
  }

  const nlohmann::json& aj = meta.at("adam");
  ck.adam_config.lr = aj.at("lr").get<double>();
  ck.adam_config.beta1 = aj.at("beta1").get<double>();
  ck.adam_config.beta2 = aj.at("beta2").get<double>();
  ck.adam_config.eps = aj.at("eps").get<double>();
  ck.adam_steps = aj.at("steps").get<int64_t>();
  ck.epoch = meta.at("epoch").get<int>();
  ck.best_val_loss = meta.at("best_val_loss").get<double>();
  return ck;
}

}  // namespace beamkit::taylor
