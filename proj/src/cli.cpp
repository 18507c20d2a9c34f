#include "beamkit/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "beamkit/beamspace.hpp"
#include "beamkit/dictionary.hpp"
#include "beamkit/gradcheck_suite.hpp"
#include "beamkit/oracle.hpp"
#include "beamkit/taylor.hpp"
#include "beamkit/tensorio.hpp"
#include "beamkit/wav.hpp"

namespace fs = std::filesystem;

namespace beamkit::cli {

namespace {

std::string scene_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", id);
  return buf;
}

// Write through a temp file so a failed command never leaves a partial output.
class AtomicFile {
 public:
  explicit AtomicFile(std::string path) : path_(std::move(path)), tmp_(path_ + ".tmp") {}
  const std::string& tmp() const { return tmp_; }
  void commit() {
    fs::rename(tmp_, path_);
    committed_ = true;
  }
  ~AtomicFile() {
    if (!committed_) {
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }

 private:
  std::string path_, tmp_;
  bool committed_ = false;
};

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

// Geometry flags shared by the commands that build arrays.
struct GeomArgs {
  double radius = 0.0425;
  int ring = 6;
  bool no_center = false;
  double sample_rate = 16000.0;

  void attach(CLI::App* app) {
    app->add_option("--radius", radius, "ring radius in meters");
    app->add_option("--ring", ring, "microphones on the ring");
    app->add_flag("--no-center", no_center, "omit the center reference mic");
    app->add_option("--sample-rate", sample_rate, "sample rate in Hz");
  }
  ArrayGeometry build() const {
    return circular_array(radius, ring, !no_center, sample_rate);
  }
};

double trimmed_si_snr(const std::vector<double>& ref, const std::vector<double>& est,
                      size_t trim) {
  size_t n = std::min(ref.size(), est.size());
  if (n <= 2 * trim + 1) throw InvalidArgument("signals too short for trimmed SI-SNR");
  std::vector<double> r(ref.begin() + trim, ref.begin() + (n - trim));
  std::vector<double> e(est.begin() + trim, est.begin() + (n - trim));
  return si_snr_db(r, e);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const std::string& out_dir, const GeomArgs& ga, DatasetSpec ds,
                 bool pcm16) {
  ArrayGeometry geom = ga.build();
  std::vector<Scene> scenes = make_dataset(geom, ds);
  save_dataset(out_dir, geom, ds.bucket, scenes, pcm16);
  std::cout << "wrote " << scenes.size() << " scenes to " << out_dir << "\n";
  return 0;
}

// -------------------------------------------------------------- beampattern

int cmd_beampattern(const std::string& dict_path, const std::string& weights_path,
                    const std::string& regime, int num_beams, const GeomArgs& ga,
                    std::vector<double> freqs, int beam, double grid_step,
                    const std::string& out_csv) {
  std::vector<Beampattern> patterns;
  if (!weights_path.empty()) {
    ArrayGeometry geom;
    BinWeights bw = load_bin_weights(weights_path, &geom);
    double fft_size = 2.0 * (bw.bins - 1);
    for (double f : freqs) {
      int k = static_cast<int>(std::lround(f * fft_size / geom.sample_rate));
      if (k < 0 || k >= bw.bins) throw InvalidArgument("frequency outside the band");
      std::vector<cplx> w(bw.bin(k), bw.bin(k) + bw.channels);
      patterns.push_back(beampattern(w, geom, k * geom.sample_rate / fft_size, grid_step));
    }
  } else {
    BeamDictionary dict;
    if (!dict_path.empty()) {
      dict = load_dictionary(dict_path);
    } else {
      ArrayGeometry geom = ga.build();
      StftConfig cfg = make_stft_config();
      dict = build_fixed_dictionary(geom, cfg, regime_from_name(regime), num_beams);
    }
    if (beam < 0 || beam >= dict.num_beams)
      throw InvalidArgument("beam index out of range");
    double fft_size = 2.0 * (dict.bins - 1);
    for (double f : freqs) {
      int k = static_cast<int>(std::lround(f * fft_size / dict.geometry.sample_rate));
      if (k < 0 || k >= dict.bins) throw InvalidArgument("frequency outside the band");
      std::vector<cplx> w(dict.beam(k, beam), dict.beam(k, beam) + dict.channels);
      patterns.push_back(
          beampattern(w, dict.geometry, k * dict.geometry.sample_rate / fft_size, grid_step));
    }
  }
  AtomicFile out(out_csv);
  write_beampattern_csv(out.tmp(), patterns);
  out.commit();
  std::cout << "wrote " << patterns.size() << " beampatterns to " << out_csv << "\n";
  return 0;
}

// -------------------------------------------------------------- oracle-eval

int cmd_oracle_eval(const std::string& data_dir, const std::string& out_csv,
                    double loading, const std::string& atf_mode) {
  DatasetOnDisk ds = load_dataset_manifest(data_dir);
  StftConfig cfg = make_stft_config();
  int trim = cfg.win_len;

  AtomicFile out(out_csv);
  std::ofstream f(out.tmp(), std::ios::trunc);
  if (!f) throw IoError("cannot open " + out_csv);
  f << "scene,snr_db,si_noisy,si_mvdr,si_mwf\n";
  f.precision(10);

  double sum_noisy = 0.0, sum_mvdr = 0.0, sum_mwf = 0.0;
  for (const SceneFiles& sf : ds.scenes) {
    // Scenes re-render deterministically; the oracle needs the multichannel
    // target/noise components, which are not persisted.
    Scene scene = render_scene(ds.geometry, sf.spec);

    MultichannelSpectrogram xs = analyze(scene.mixture, cfg);
    SpatialCovariance phi_n =
        estimate_covariance(analyze(scene.noise_multi, cfg), CovKind::Noise);
    SpatialCovariance phi_s =
        estimate_covariance(analyze(scene.target_multi, cfg), CovKind::Speech);
    SpatialCovariance phi_x = estimate_covariance(xs, CovKind::Mixture);

    std::vector<std::vector<cplx>> atf =
        atf_mode == "principal"
            ? principal_atf(phi_s, ds.geometry.reference_index)
            : steering_atf(ds.geometry, cfg, scene.spec.target_doa_deg);

    BinWeights w_mvdr = ti_mvdr(phi_n, atf, loading);
    BinWeights w_mwf = ti_mwf(phi_x, phi_s, ds.geometry.reference_index, loading);

    std::vector<double> mvdr_wave =
        synthesize_mono(apply_bin_weights(w_mvdr, xs));
    std::vector<double> mwf_wave = synthesize_mono(apply_bin_weights(w_mwf, xs));

    double si_noisy = trimmed_si_snr(scene.clean_ref,
                                     scene.mixture[ds.geometry.reference_index], trim);
    double si_mvdr = trimmed_si_snr(scene.clean_ref, mvdr_wave, trim);
    double si_mwf = trimmed_si_snr(scene.clean_ref, mwf_wave, trim);
    sum_noisy += si_noisy;
    sum_mvdr += si_mvdr;
    sum_mwf += si_mwf;
    f << sf.id << "," << scene.spec.snr_db << "," << si_noisy << "," << si_mvdr
      << "," << si_mwf << "\n";
  }
  double n = static_cast<double>(ds.scenes.size());
  f << "mean," << "" << "," << sum_noisy / n << "," << sum_mvdr / n << ","
    << sum_mwf / n << "\n";
  f.close();
  out.commit();
  std::cout << "noisy " << sum_noisy / n << " dB | TI-MVDR " << sum_mvdr / n
            << " dB | TI-MWF " << sum_mwf / n << " dB (mean SI-SNR, " << n
            << " scenes)\n";
  return 0;
}

// -------------------------------------------------------------------- train

std::vector<taylor::SceneTensors> tensors_from_disk(const DatasetOnDisk& ds,
                                                    const std::string& dir,
                                                    const StftConfig& cfg) {
  std::vector<taylor::SceneTensors> out;
  for (const SceneFiles& sf : ds.scenes) {
    WavData mix = read_wav((fs::path(dir) / sf.mixture).string());
    WavData clean = read_wav((fs::path(dir) / sf.clean).string());
    Scene scene;
    scene.mixture = mix.channels;
    scene.clean_ref = clean.channels.at(0);
    out.push_back(taylor::scene_to_tensors(scene, cfg));
  }
  return out;
}

int cmd_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& regime_str, taylor::TaylorConfig tc,
              double val_frac, bool quiet) {
  DatasetOnDisk ds = load_dataset_manifest(data_dir);
  StftConfig cfg = make_stft_config(320, 160, 320, tc.compression);
  DictRegime regime = regime_from_name(regime_str);

  TrainableDictionary dict;
  switch (regime) {
    case DictRegime::FixedDs:
    case DictRegime::FixedSd:
      dict = init_fixed(ds.geometry, cfg, regime, tc.num_beams);
      break;
    case DictRegime::SemiLearnable:
      dict = init_semi_learnable(ds.geometry, cfg, tc.num_beams);
      break;
    case DictRegime::FullPhysics:
      dict = init_full_learnable(ds.geometry, cfg, tc.num_beams, true);
      break;
    case DictRegime::FullFree:
      dict = init_full_learnable(ds.geometry, cfg, tc.num_beams, false);
      break;
  }

  std::vector<taylor::SceneTensors> all = tensors_from_disk(ds, data_dir, cfg);
  if (all.size() < 2) throw InvalidArgument("train: need at least two scenes");
  size_t val_n = std::max<size_t>(1, static_cast<size_t>(all.size() * val_frac));
  if (val_n >= all.size()) val_n = all.size() - 1;
  std::vector<taylor::SceneTensors> val_set(all.end() - val_n, all.end());
  all.resize(all.size() - val_n);

  Rng init_rng(tc.seed);
  taylor::Model model = taylor::make_model(std::move(dict), tc, init_rng);

  fs::create_directories(out_dir);
  taylor::TrainResult res = taylor::train(
      model, all, val_set, [&](const taylor::EpochLog& e) {
        if (!quiet)
          std::cout << "epoch " << e.epoch << " train " << e.train_loss << " val "
                    << e.val_loss << " lr " << e.lr << "\n";
      });

  taylor::write_train_log_csv((fs::path(out_dir) / "train_log.csv").string(), res.log);
  {
    std::ofstream cf(fs::path(out_dir) / "config.json");
    cf << nlohmann::json{{"config", nlohmann::json::parse(tc.to_json())},
                         {"regime", regime_name(regime)},
                         {"data", data_dir},
                         {"val_frac", val_frac}}
              .dump(2)
       << "\n";
  }
  nn::Adam adam({tc.lr});
  taylor::save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), model, cfg,
                          adam, res.best_epoch, res.best_val_loss);
  save_dictionary((fs::path(out_dir) / "dictionary.bkd").string(),
                  model.dict.materialize());
  std::cout << "best epoch " << res.best_epoch << " val loss " << res.best_val_loss
            << "; run artifacts in " << out_dir << "\n";
  return 0;
}

// ----------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& data_dir, const std::string& ckpt_path,
                 const std::string& out_csv) {
  DatasetOnDisk ds = load_dataset_manifest(data_dir);
  taylor::Checkpoint ck = taylor::load_checkpoint(ckpt_path);
  int trim = ck.stft.win_len;

  AtomicFile out(out_csv);
  std::ofstream f(out.tmp(), std::ios::trunc);
  if (!f) throw IoError("cannot open " + out_csv);
  f << "scene,snr_db,si_noisy,si_enhanced,improvement\n";
  f.precision(10);

  double sum_noisy = 0.0, sum_enh = 0.0;
  for (const SceneFiles& sf : ds.scenes) {
    WavData mix = read_wav((fs::path(data_dir) / sf.mixture).string());
    WavData clean = read_wav((fs::path(data_dir) / sf.clean).string());
    const std::vector<double>& clean_ref = clean.channels.at(0);

    MultichannelSpectrogram xs = analyze(mix.channels, ck.stft);
    Spectrogram est = taylor::enhance(ck.model, xs);
    std::vector<double> wave = synthesize_mono(est);

    int ref = ds.geometry.reference_index;
    double si_noisy = trimmed_si_snr(clean_ref, mix.channels.at(ref), trim);
    double si_enh = trimmed_si_snr(clean_ref, wave, trim);
    sum_noisy += si_noisy;
    sum_enh += si_enh;
    f << sf.id << "," << sf.spec.snr_db << "," << si_noisy << "," << si_enh << ","
      << (si_enh - si_noisy) << "\n";
  }
  double n = static_cast<double>(ds.scenes.size());
  f << "mean,," << sum_noisy / n << "," << sum_enh / n << ","
    << (sum_enh - sum_noisy) / n << "\n";
  f.close();
  out.commit();
  std::cout << "noisy " << sum_noisy / n << " dB | enhanced " << sum_enh / n
            << " dB | improvement " << (sum_enh - sum_noisy) / n << " dB ("
            << n << " scenes)\n";
  return 0;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck() {
  std::vector<GradCheckCase> cases = run_gradient_checks();
  bool all_pass = true;
  for (const GradCheckCase& c : cases) {
    std::printf("%-24s max_rel_err %.3e (tol %.0e) %s\n", c.name.c_str(),
                c.max_rel_err, c.tolerance, c.pass ? "ok" : "FAIL");
    all_pass = all_pass && c.pass;
  }
  std::cout << (all_pass ? "all gradient checks passed\n"
                         : "gradient check FAILURES\n");
  return all_pass ? 0 : 1;
}

// Apply config-file values for options the user did not pass on the command
// line; flags win, config beats defaults, unknown keys are rejected.
void merge_config(CLI::App* cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  nlohmann::json j = load_json_file(config_path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + it.key());
    if (!opt) throw IoError("config: unknown key '" + it.key() + "'");
    if (opt->count() > 0) continue;  // explicit flag wins
    std::string v = it.value().is_string() ? it.value().get<std::string>()
                                           : it.value().dump();
    opt->add_result(v);
    opt->run_callback();
  }
}

}  // namespace

void save_dataset(const std::string& dir, const ArrayGeometry& geom,
                  const std::string& bucket, const std::vector<Scene>& scenes,
                  bool pcm16) {
  fs::create_directories(dir);
  WavFormat fmt = pcm16 ? WavFormat::Pcm16 : WavFormat::Float32;
  nlohmann::json list = nlohmann::json::array();
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Scene& sc = scenes[i];
    std::string stem = scene_stem(static_cast<int>(i));
    write_wav((fs::path(dir) / (stem + ".wav")).string(), sc.mixture,
              geom.sample_rate, fmt);
    write_wav((fs::path(dir) / (stem + ".clean.wav")).string(), {sc.clean_ref},
              geom.sample_rate, fmt);
    write_wav((fs::path(dir) / (stem + ".noise.wav")).string(), {sc.noise_ref},
              geom.sample_rate, fmt);
    std::ofstream sj(fs::path(dir) / (stem + ".json"));
    sj << scene_spec_to_json(sc.spec) << "\n";
    list.push_back({{"id", i},
                    {"mixture", stem + ".wav"},
                    {"clean", stem + ".clean.wav"},
                    {"noise", stem + ".noise.wav"},
                    {"spec", nlohmann::json::parse(scene_spec_to_json(sc.spec))}});
  }
  // The manifest is written last: its presence marks a complete dataset.
  nlohmann::json manifest = {{"kind", "scene_dataset"},
                             {"geometry", nlohmann::json::parse(geometry_to_json(geom))},
                             {"bucket", bucket},
                             {"scenes", list}};
  std::ofstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IoError("save_dataset: cannot write manifest");
  mf << manifest.dump(2) << "\n";
}

DatasetOnDisk load_dataset_manifest(const std::string& dir) {
  nlohmann::json m = load_json_file((fs::path(dir) / "manifest.json").string());
  if (m.value("kind", "") != "scene_dataset")
    throw IoError("not a scene dataset: " + dir);
  DatasetOnDisk ds;
  ds.geometry = geometry_from_json(m.at("geometry").dump());
  ds.bucket = m.value("bucket", "");
  for (const auto& item : m.at("scenes")) {
    SceneFiles sf;
    sf.id = item.at("id").get<int>();
    sf.mixture = item.at("mixture").get<std::string>();
    sf.clean = item.at("clean").get<std::string>();
    sf.noise = item.at("noise").get<std::string>();
    sf.spec = scene_spec_from_json(item.at("spec").dump());
    ds.scenes.push_back(std::move(sf));
  }
  return ds;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"beam-space dictionary beamforming toolkit"};
  app.require_subcommand(1);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "render a scene dataset to disk");
  std::string sim_out, sim_config;
  DatasetSpec dspec;
  GeomArgs sim_geom;
  bool pcm16 = false;
  sim_cmd->add_option("--out", sim_out, "output directory")->required();
  sim_cmd->add_option("--n", dspec.num_scenes, "number of scenes")->required();
  sim_cmd->add_option("--bucket", dspec.bucket,
                      "DOA-difference bucket: 0-15, 15-45, 45-90, 90-180, set-B");
  sim_cmd->add_option("--seed", dspec.seed, "dataset seed");
  sim_cmd->add_option("--snr-min", dspec.snr_min_db, "minimum SNR in dB");
  sim_cmd->add_option("--snr-max", dspec.snr_max_db, "maximum SNR in dB");
  sim_cmd->add_option("--duration", dspec.duration_s, "scene duration in seconds");
  sim_cmd->add_option("--noise-kinds", dspec.noise_kind_pool, "noise kind pool");
  sim_cmd->add_flag("--pcm16", pcm16, "write 16-bit PCM instead of float32");
  sim_cmd->add_option("--config", sim_config, "JSON config file");
  sim_geom.attach(sim_cmd);

  // beampattern
  auto* bp_cmd = app.add_subcommand("beampattern", "export beampatterns as CSV");
  std::string bp_dict, bp_weights, bp_regime = "ds", bp_out;
  std::vector<double> bp_freqs = {2000.0};
  int bp_beam = 0, bp_p = 36;
  double bp_step = 1.0;
  GeomArgs bp_geom;
  bp_cmd->add_option("--dict", bp_dict, "dictionary file (.bkd)");
  bp_cmd->add_option("--weights", bp_weights, "per-bin weight tensor file");
  bp_cmd->add_option("--regime", bp_regime, "build a fixed dictionary: ds or sd");
  bp_cmd->add_option("--P", bp_p, "beam count when building");
  bp_cmd->add_option("--freq", bp_freqs, "frequencies in Hz");
  bp_cmd->add_option("--beam", bp_beam, "beam index");
  bp_cmd->add_option("--grid-step", bp_step, "azimuth grid step in degrees");
  bp_cmd->add_option("--out", bp_out, "output CSV")->required();
  bp_geom.attach(bp_cmd);

  // oracle-eval
  auto* or_cmd = app.add_subcommand("oracle-eval", "run TI-MVDR / TI-MWF oracles");
  std::string or_data, or_out, or_atf = "steering";
  double or_loading = kOracleLoading;
  or_cmd->add_option("--data", or_data, "dataset directory")->required();
  or_cmd->add_option("--out", or_out, "metrics CSV")->required();
  or_cmd->add_option("--loading", or_loading, "diagonal loading");
  or_cmd->add_option("--atf", or_atf, "target ATF source: steering or principal");

  // train
  auto* tr_cmd = app.add_subcommand("train", "train a beam-mixing model");
  std::string tr_data, tr_out, tr_regime = "full-free", tr_config;
  taylor::TaylorConfig tcfg;
  double tr_val_frac = 0.2;
  bool tr_quiet = false;
  tr_cmd->add_option("--data", tr_data, "dataset directory")->required();
  tr_cmd->add_option("--out", tr_out, "run directory")->required();
  tr_cmd->add_option("--regime", tr_regime,
                     "dictionary regime: ds, sd, semi, full-physics, full-free");
  tr_cmd->add_option("--Q", tcfg.order, "series truncation order");
  tr_cmd->add_option("--P", tcfg.num_beams, "beam count");
  tr_cmd->add_option("--hidden", tcfg.hidden, "hidden units");
  tr_cmd->add_option("--context", tcfg.context, "causal context frames");
  tr_cmd->add_option("--epochs", tcfg.epochs, "training epochs");
  tr_cmd->add_option("--batch", tcfg.batch, "scenes per optimizer step");
  tr_cmd->add_option("--lr", tcfg.lr, "initial learning rate");
  tr_cmd->add_option("--seed", tcfg.seed, "training seed");
  tr_cmd->add_option("--val-frac", tr_val_frac, "validation fraction");
  tr_cmd->add_flag("--quiet", tr_quiet, "suppress per-epoch output");
  tr_cmd->add_option("--config", tr_config, "JSON config file");

  // evaluate
  auto* ev_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint by SI-SNR");
  std::string ev_data, ev_ckpt, ev_out;
  ev_cmd->add_option("--data", ev_data, "dataset directory")->required();
  ev_cmd->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev_cmd->add_option("--out", ev_out, "metrics CSV")->required();

  // gradcheck
  app.add_subcommand("gradcheck", "run the registered gradient checks");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim_cmd->parsed()) {
      merge_config(sim_cmd, sim_config);
      return cmd_simulate(sim_out, sim_geom, dspec, pcm16);
    }
    if (bp_cmd->parsed())
      return cmd_beampattern(bp_dict, bp_weights, bp_regime, bp_p, bp_geom,
                             bp_freqs, bp_beam, bp_step, bp_out);
    if (or_cmd->parsed()) return cmd_oracle_eval(or_data, or_out, or_loading, or_atf);
    if (tr_cmd->parsed()) {
      merge_config(tr_cmd, tr_config);
      return cmd_train(tr_data, tr_out, tr_regime, tcfg, tr_val_frac, tr_quiet);
    }
    if (ev_cmd->parsed()) return cmd_evaluate(ev_data, ev_ckpt, ev_out);
    if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 1;
}

}  // namespace beamkit::cli
