// The truncated-series beam-mixing model: a 0th-order mixer that estimates
// complex activations for beam mixing, and Q high-order modules chained by
// H_{q+1} = q H_q + module_q(features, H_q), summed without factorials.
// H_0 is the 0th-order output, so zeroed modules collapse to pure mixing.
#ifndef BEAMKIT_TAYLOR_HPP
#define BEAMKIT_TAYLOR_HPP

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "beamkit/beam_ops.hpp"
#include "beamkit/beamspace.hpp"
#include "beamkit/dictionary.hpp"
#include "beamkit/nn.hpp"
#include "beamkit/sim.hpp"
#include "beamkit/stft.hpp"

namespace beamkit::taylor {

struct TaylorConfig {
  int order = 3;       // Q
  int num_beams = 36;  // P
  int hidden = 48;     // units per hidden layer
  int context = 3;     // causal past frames fed to the mixer
  double compression = 0.5;
  double feature_eps = 1e-12;  // keeps the compression gradient bounded at 0
  double lr = 5e-4;
  int epochs = 25;
  int batch = 4;
  uint64_t seed = 1234;

  void validate() const;
  std::string to_json() const;
  static TaylorConfig from_json(const std::string& text);
};

struct OrderModule {
  nn::ParamPtr w1, b1, w2, b2;  // (2P+2) -> hidden tanh -> 2 linear
};

struct Model {
  TaylorConfig cfg;
  TrainableDictionary dict;
  // Mixer: features -> hidden tanh -> hidden tanh -> 2P linear.
  nn::ParamPtr mix_w1, mix_b1, mix_w2, mix_b2, mix_w3, mix_b3;
  std::vector<OrderModule> orders;  // cfg.order entries

  std::vector<nn::ParamPtr> params() const;
  int mixer_input_dim() const;
};

Model make_model(TrainableDictionary dict, const TaylorConfig& cfg, Rng& rng);

// Per-scene constants for training/evaluation.
struct SceneTensors {
  int frames = 0, bins = 0, channels = 0;
  nn::Tensor x;        // (L*K, 2M) mixture spectra
  nn::Tensor s_clean;  // (L*K, 2) clean reference spectra
};

SceneTensors scene_to_tensors(const Scene& scene, const StftConfig& cfg);

struct ForwardIds {
  nn::Tape::Id beams = -1;        // (K*P, 2M)
  nn::Tape::Id beam_out = -1;     // Y
  nn::Tape::Id compressed = -1;   // compressed Y features
  nn::Tape::Id activations = -1;  // G
  nn::Tape::Id zeroth = -1;       // S0
  std::vector<nn::Tape::Id> order_terms;  // H_1..H_Q
  nn::Tape::Id estimate = -1;     // S0 + sum H_q
};

// (G, S0) from the mixer; S0 mixes the uncompressed beam outputs.
void forward_0th(nn::Tape& tape, const Model& model, ForwardIds& ids,
                 int frames, int bins);

// H_{q+1} = q H_q + module_q(compressed Y features, compressed H_q).
nn::Tape::Id recursion_step(nn::Tape& tape, const Model& model, int q,
                            nn::Tape::Id h_prev, nn::Tape::Id compressed);

ForwardIds taylor_forward(nn::Tape& tape, const Model& model, const nn::Tensor& x,
                          int frames, int bins);

// mean over bins of |compress(S_hat) - compress(S)|^2
//               + (|S_hat|^p - |S|^p)^2, p = cfg.compression.
nn::Tape::Id taylor_loss(nn::Tape& tape, const Model& model, nn::Tape::Id estimate,
                         const nn::Tensor& s_clean);

// Inference: enhanced single-channel spectrogram (and optionally activations).
Spectrogram enhance(const Model& model, const MultichannelSpectrogram& x,
                    ActivationMatrix* activations_out = nullptr);

// Halve the rate after two consecutive epochs without improvement.
class LrSchedule {
 public:
  explicit LrSchedule(double initial_lr) : lr_(initial_lr) {}
  double observe(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  std::vector<nn::Tensor> best_params;  // aligned with model.params()
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Deterministic given config.seed. Throws PoisonedGraph naming the batch if
// a forward/backward produces NaN. Restores the best parameters at the end.
TrainResult train(Model& model, const std::vector<SceneTensors>& train_set,
                  const std::vector<SceneTensors>& val_set,
                  const EpochCallback& on_epoch = nullptr);

double mean_loss(const Model& model, const std::vector<SceneTensors>& set);

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log);

void save_checkpoint(const std::string& path, const Model& model,
                     const StftConfig& stft, const nn::Adam& adam, int epoch,
                     double best_val_loss);

struct Checkpoint {
  Model model;
  StftConfig stft;
  nn::AdamConfig adam_config;
  int64_t adam_steps = 0;
  int epoch = 0;
  double best_val_loss = 0.0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace beamkit::taylor

#endif  // BEAMKIT_TAYLOR_HPP
