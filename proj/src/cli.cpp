#include "c3dm/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "c3dm/dataset.hpp"
#include "c3dm/error.hpp"
#include "c3dm/experiment.hpp"
#include "c3dm/fddp.hpp"

namespace c3dm {

namespace fs = std::filesystem;

namespace {

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return default_experiment_config();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return experiment_from_json_text(text);
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<int> n_steps;
  std::optional<int> n_demos;
  std::optional<std::string> out;
};

void apply(ExperimentConfig& cfg, const Overrides& ov) {
  if (ov.seed) {
    cfg.train.seed = *ov.seed;
    cfg.infer.seed = *ov.seed;
    cfg.data_seed = *ov.seed + 1;
    cfg.eval_seed = *ov.seed + 9000;
  }
  if (ov.mode) {
    cfg.train.mode = mode_from_name(*ov.mode);
    cfg.infer.mode = cfg.train.mode;
  }
  if (ov.n_steps) cfg.infer.n_steps = *ov.n_steps;
  if (ov.n_demos) cfg.n_demos = *ov.n_demos;
  if (ov.out) cfg.output_dir = *ov.out;
  cfg.validate();
}

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "override all seeds");
  cmd->add_option("--mode", ov.mode, "baseline|mask|zoom");
  cmd->add_option("--n-steps", ov.n_steps, "inference refinement steps");
  cmd->add_option("--n-demos", ov.n_demos, "dataset size");
  cmd->add_option("--out", ov.out, "output directory");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output dir " + dir + ": " + ec.message());
}

int cmd_gen_data(const ExperimentConfig& cfg) {
  write_dataset(cfg.output_dir, cfg.task, cfg.n_demos, cfg.data_seed);
  std::cout << "wrote " << cfg.n_demos << " episodes to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& data_dir,
              const std::string& resume_path) {
  std::vector<Demo> demos;
  TaskConfig task = cfg.task;
  if (!data_dir.empty()) {
    Dataset ds = load_dataset(data_dir);
    task = ds.task;
    demos = std::move(ds.demos);
  } else {
    demos = make_demos(task, cfg.n_demos, cfg.data_seed);
  }

  ensure_dir(cfg.output_dir);
  TrainResult result;
  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path, {.lr = cfg.train.lr});
    result = train(demos, task, cfg.train, &ck);
  } else {
    result = train(demos, task, cfg.train);
  }

  const auto weights = (fs::path(cfg.output_dir) / "weights.c3dm").string();
  save_checkpoint(result.params, result.adam, weights);
  write_loss_csv((fs::path(cfg.output_dir) / "loss.csv").string(), result.epoch_loss);
  std::cout << "trained " << cfg.train.epochs << " epochs (mode="
            << mode_name(cfg.train.mode) << ", variant="
            << variant_name(cfg.train.variant) << "), final loss "
            << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back())
            << "\nweights: " << weights << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& weights_path,
             bool oracle_policy, bool random_policy, bool ood, bool traces) {
  ensure_dir(cfg.output_dir);

  EvalOptions opt;
  opt.policy = oracle_policy ? EvalPolicy::oracle
               : random_policy ? EvalPolicy::random
                               : EvalPolicy::model;
  opt.ood_swap = ood;
  opt.experiment_id = std::string("eval-") + mode_name(cfg.infer.mode) +
                      (ood ? "-ood" : "");
  opt.seed_label = static_cast<long long>(cfg.infer.seed);
  opt.n_demos_label = cfg.n_demos;
  if (traces) {
    opt.trace_dir = (fs::path(cfg.output_dir) / "traces").string();
    opt.trace_episodes = 1;
  }

  ParamSet params;
  ModelConfig model = cfg.train.model;
  const ParamSet* params_ptr = nullptr;
  const ModelConfig* model_ptr = nullptr;
  if (opt.policy == EvalPolicy::model) {
    if (weights_path.empty()) throw ConfigError("eval: --weights required");
    params = load_checkpoint(weights_path, {}).params;
    // Recover chain heads and image size from the weights themselves.
    model.image_h = cfg.task.image_h;
    model.image_w = cfg.task.image_w;
    const auto plans = make_chains(pick_place_layout(), cfg.infer.joint_chain);
    model.chains = chain_specs(plans);
    params_ptr = &params;
    model_ptr = &model;
  }

  const EvalResult res = evaluate(cfg.task, params_ptr, model_ptr, cfg.infer,
                                  cfg.n_eval_episodes, cfg.eval_seed, opt);
  write_metrics_csv((fs::path(cfg.output_dir) / "metrics.csv").string(), {res.row});
  std::cout << "success_rate " << res.row.success_rate << " (" << res.successes
            << "/" << res.episodes << "), pick_err " << res.row.pick_err_m
            << " m, place_err " << res.row.place_err_m << " m\n";
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& which) {
  const auto rows = run_ablation(cfg, ablation_from_name(which));
  std::cout << "wrote " << rows.size() << " rows to " << cfg.output_dir << "\n";
  for (const auto& r : rows)
    if (r.seed == -1)
      std::cout << "  " << r.experiment << ": success " << r.success_rate << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"C3DM desk-scale workbench: fixation-while-denoising diffusion "
               "policies on a synthetic tabletop"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "experiment config JSON")
      ->check(CLI::ExistingFile);

  Overrides ov;

  auto* gen = app.add_subcommand("gen-data", "write a demo dataset directory");
  add_override_flags(gen, ov);

  auto* tr = app.add_subcommand("train", "train a policy, write weights + loss.csv");
  std::string data_dir, resume_path;
  tr->add_option("--data", data_dir, "dataset directory (default: regenerate)");
  tr->add_option("--resume", resume_path, "checkpoint to continue from");
  add_override_flags(tr, ov);

  auto* ev = app.add_subcommand("eval", "roll out a policy, write metrics.csv");
  std::string weights_path;
  bool oracle_policy = false, random_policy = false, ood = false, traces = false;
  ev->add_option("--weights", weights_path, "weight file");
  ev->add_flag("--oracle-policy", oracle_policy, "evaluate the oracle demonstrator");
  ev->add_flag("--random-policy", random_policy, "evaluate uniform random actions");
  ev->add_flag("--ood", ood, "swap distractors to unseen shapes/colors");
  ev->add_flag("--traces", traces, "write PPM refinement traces");
  add_override_flags(ev, ov);

  auto* ab = app.add_subcommand("ablate", "run an ablation matrix");
  std::string which;
  ab->add_option("--which", which, "drift|timesteps|demos|ood")->required();
  add_override_flags(ab, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    apply(cfg, ov);
    if (gen->parsed()) return cmd_gen_data(cfg);
    if (tr->parsed()) return cmd_train(cfg, data_dir, resume_path);
    if (ev->parsed())
      return cmd_eval(cfg, weights_path, oracle_policy, random_policy, ood, traces);
    if (ab->parsed()) return cmd_ablate(cfg, which);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "file format error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace c3dm
