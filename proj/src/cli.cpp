#include "gean/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "gean/config.hpp"
#include "gean/dataset.hpp"
#include "gean/error.hpp"
#include "gean/landmark_io.hpp"
#include "gean/manipulation.hpp"
#include "gean/pipeline.hpp"

namespace gean {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

const char* status_name(BranchStatus s) {
  switch (s) {
    case BranchStatus::kConverged: return "converged";
    case BranchStatus::kMaxIterations: return "max_iters";
    case BranchStatus::kAborted: return "aborted";
  }
  return "?";
}

// Missing inputs are usage errors, unlike failures while running.
struct UsageError : Error {
  using Error::Error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

// Options shared by every subcommand that builds a PipelineConfig.
struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> variant;
  std::optional<int> k_train, k_test, epochs;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value configuration file");
    app->add_option("--set", sets, "override one config key (key=value); repeatable");
    app->add_option("--variant", variant, "manipulation variant: adv, Gadv or GK");
    app->add_option("--k-train", k_train, "branches per training sample");
    app->add_option("--k-test", k_test, "branches at inference");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--seed", seed, "random seed");
  }

  // Order: base values, config file, --set, then dedicated flags.
  PipelineConfig build(PipelineConfig cfg) const {
    if (!config_path.empty()) {
      require_file(config_path, "config file");
      apply_config_file(cfg, config_path);
    }
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (variant) cfg.variant = parse_variant(*variant);
    if (k_train) cfg.k_train = *k_train;
    if (k_test) cfg.k_test = *k_test;
    if (epochs) cfg.epochs = *epochs;
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

PipelineConfig config_from_checkpoint(const Checkpoint& ckpt) {
  PipelineConfig cfg;
  for (const auto& [k, v] : ckpt.config) set_config_value(cfg, k, v);
  cfg.detector = ckpt.architecture;
  return cfg;
}

int cmd_synth(int n, std::uint64_t seed, int size, const std::string& out_dir, std::ostream& out) {
  const std::vector<Sample> data = synth_dataset(n, seed, size);
  save_dataset(data, out_dir);
  out << "samples=" << data.size() << "\n";
  out << "out=" << out_dir << "\n";
  return kExitOk;
}

int cmd_generate(const std::string& image_path, const std::string& landmarks_path, const std::string& out_dir,
                 const ConfigOptions& opts, std::ostream& out) {
  require_file(image_path, "image");
  require_file(landmarks_path, "landmark file");
  const PipelineConfig cfg = opts.build(PipelineConfig{});
  const Image img = load_image(image_path);
  const LandmarkSet P = load_landmarks(landmarks_path);
  const ToyEmbedder embedder;
  const auto manipulator = make_manipulator(cfg, embedder);
  std::mt19937_64 rng(cfg.seed);
  const std::vector<ManipulatedFace> faces = manipulator->manipulate(img, P, cfg.k_test, rng);
  fs::create_directories(out_dir);
  for (std::size_t k = 0; k < faces.size(); ++k) {
    const std::string stem = (fs::path(out_dir) / ("face_" + std::to_string(k))).string();
    save_image(faces[k].image, stem + ".pgm");
    save_landmarks(faces[k].control_target, stem + ".pts");
    save_landmarks(faces[k].displacement, stem + ".disp");
    out << "face." << k << ".image=" << stem << ".pgm\n";
    out << "face." << k << ".iterations=" << faces[k].iterations_used << "\n";
    out << "face." << k << ".status=" << (cfg.variant == Variant::kGK ? "sampled" : status_name(faces[k].status))
        << "\n";
  }
  out << "faces=" << faces.size() << "\n";
  return kExitOk;
}

int cmd_train(const std::string& data_dir, const std::string& ckpt_path, const ConfigOptions& opts,
              std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(data_dir)) throw UsageError("data directory '" + data_dir + "' does not exist");
  const PipelineConfig cfg = opts.build(PipelineConfig{});
  const std::vector<Sample> data = load_dataset(data_dir, cfg.scheme);
  const ToyEmbedder embedder;
  const TrainResult result =
      train(cfg, data, embedder, [&out](int epoch, double loss) { out << "epoch=" << epoch << " loss=" << num(loss) << "\n" << std::flush; });
  for (const std::string& w : result.warnings) err << "warning: " << w << "\n";
  save_checkpoint(result.checkpoint, ckpt_path);
  out << "skipped=" << result.skipped_samples << "\n";
  out << "checkpoint=" << ckpt_path << "\n";
  return kExitOk;
}

int cmd_infer(const std::string& ckpt_path, const std::string& image_path, const std::string& out_path,
              const ConfigOptions& opts, std::ostream& out, std::ostream& err) {
  require_file(ckpt_path, "checkpoint");
  require_file(image_path, "image");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const PipelineConfig cfg = opts.build(config_from_checkpoint(ckpt));
  const ToyDetector det = ckpt.detector();
  const ToyEmbedder embedder;
  const auto manipulator = make_manipulator(cfg, embedder);
  std::mt19937_64 rng(cfg.seed);
  const InferenceResult r =
      infer(det, load_image(image_path), *manipulator, cfg.k_test, rng, cfg.weighting, cfg.attack.ridge);
  if (r.fallback) err << "warning: " << r.warning << "\n";
  out << "fallback=" << (r.fallback ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < r.landmarks.size(); ++i) {
    out << "landmark." << i << "=" << num(r.landmarks[i].x) << " " << num(r.landmarks[i].y) << "\n";
  }
  if (!out_path.empty()) {
    save_landmarks(r.landmarks, out_path);
    out << "out=" << out_path << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& norm,
             const std::string& ced_path, const ConfigOptions& opts, std::ostream& out) {
  require_file(ckpt_path, "checkpoint");
  if (!fs::is_directory(data_dir)) throw UsageError("data directory '" + data_dir + "' does not exist");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  PipelineConfig cfg = opts.build(config_from_checkpoint(ckpt));
  cfg.normalization = parse_normalization(norm);
  const std::vector<Sample> data = load_dataset(data_dir, cfg.scheme);
  const ToyEmbedder embedder;
  const Evaluation ev = evaluate(ckpt.detector(), data, cfg, embedder);
  out << "samples=" << data.size() << "\n";
  out << "k_test=" << cfg.k_test << "\n";
  out << "norm=" << norm << "\n";
  out << "nme=" << num(ev.nme) << "\n";
  if (!ced_path.empty()) {
    std::ofstream csv(ced_path, std::ios::trunc);
    if (!csv) throw IoError("cannot open '" + ced_path + "' for writing");
    csv << "threshold,fraction\n";
    for (const auto& [t, f] : ev.ced) csv << num(t) << "," << num(f) << "\n";
    if (!csv) throw IoError("failed writing '" + ced_path + "'");
    out << "ced=" << ced_path << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Geometry-aware landmark detection toolkit", "gean"};
  app.require_subcommand(1);

  int synth_n = 100;
  std::uint64_t synth_seed = 0;
  int synth_size = 64;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "render a synthetic face dataset");
  synth->add_option("--n", synth_n, "number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--size", synth_size, "image side in pixels");
  synth->add_option("--out", synth_out, "output directory")->required();

  ConfigOptions gen_opts;
  std::string gen_image, gen_landmarks, gen_out;
  CLI::App* generate = app.add_subcommand("generate", "write K manipulated faces of one image");
  generate->add_option("--image", gen_image, "input PGM")->required();
  generate->add_option("--landmarks", gen_landmarks, "landmark file of the image")->required();
  generate->add_option("--out", gen_out, "output directory")->required();
  gen_opts.attach(generate);

  ConfigOptions train_opts;
  std::string train_data, train_out;
  CLI::App* train_cmd = app.add_subcommand("train", "train a detector");
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();
  train_opts.attach(train_cmd);

  ConfigOptions infer_opts;
  std::string infer_ckpt, infer_image, infer_out;
  CLI::App* infer_cmd = app.add_subcommand("infer", "predict landmarks for one image");
  infer_cmd->add_option("--checkpoint", infer_ckpt, "checkpoint path")->required();
  infer_cmd->add_option("--image", infer_image, "input PGM")->required();
  infer_cmd->add_option("--out", infer_out, "write the landmarks to this file");
  infer_opts.attach(infer_cmd);

  ConfigOptions eval_opts;
  std::string eval_ckpt, eval_data, eval_norm = "interocular", eval_ced;
  CLI::App* eval_cmd = app.add_subcommand("eval", "NME and CED on a dataset");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--norm", eval_norm, "interocular or facesize")
      ->check(CLI::IsMember({"interocular", "facesize"}));
  eval_cmd->add_option("--ced", eval_ced, "write the CED table (threshold,fraction) to this CSV");
  eval_opts.attach(eval_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run 'gean --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_n, synth_seed, synth_size, synth_out, out);
    if (*generate) return cmd_generate(gen_image, gen_landmarks, gen_out, gen_opts, out);
    if (*train_cmd) return cmd_train(train_data, train_out, train_opts, out, err);
    if (*infer_cmd) return cmd_infer(infer_ckpt, infer_image, infer_out, infer_opts, out, err);
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_norm, eval_ced, eval_opts, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace gean
