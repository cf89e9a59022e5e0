#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "c3dm/dataset.hpp"
#include "c3dm/fddp.hpp"

namespace c3dm {

struct ExperimentConfig {
  TaskConfig task;
  TrainConfig train;
  InferConfig infer;
  int n_demos = 30;
  int n_eval_episodes = 50;
  int n_seeds = 3;
  std::uint64_t data_seed = 1;
  std::uint64_t eval_seed = 9000;
  std::string output_dir = "out";

  void validate() const;
};

ExperimentConfig default_experiment_config();

// JSON round trip for the config file; unknown keys are rejected.
ExperimentConfig experiment_from_json_text(const std::string& text);
std::string experiment_to_json_text(const ExperimentConfig& cfg);

struct MetricsRow {
  std::string experiment;
  long long seed = 0;  // -1 marks a per-cell median summary row
  std::string mode;
  std::string variant;
  int n_demos = 0;
  int n_steps = 0;
  double success_rate = 0.0;
  double pick_err_m = 0.0;
  double place_err_m = 0.0;
  double wall_s = 0.0;
};

inline const char* kMetricsHeader =
    "experiment,seed,mode,variant,n_demos,n_steps,success_rate,pick_err_m,"
    "place_err_m,wall_s";

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

void write_loss_csv(const std::string& path, const std::vector<double>& epoch_loss);

enum class EvalPolicy { model, oracle, random };

struct EvalOptions {
  EvalPolicy policy = EvalPolicy::model;
  bool ood_swap = false;       // replace distractors with unseen shapes/colors
  std::string trace_dir;       // non-empty: write PPM traces
  int trace_episodes = 1;
  std::string experiment_id = "eval";
  long long seed_label = 0;
  int n_demos_label = 0;
};

struct EvalResult {
  MetricsRow row;
  int successes = 0;
  int episodes = 0;
};

// Rolls out n fresh scenes. params/model may be null for oracle/random policies.
EvalResult evaluate(const TaskConfig& task, const ParamSet* params,
                    const ModelConfig* model, const InferConfig& icfg,
                    int n_episodes, std::uint64_t eval_seed, const EvalOptions& opt);

// PPM visualization of one rollout: the context consumed at each step with
// the fixation point and window marked. Files ep{N}_sub{S}_t{K}.ppm.
void export_trace_ppms(const ContextProvider& ctx, const InferOutcome& outcome,
                       const InferConfig& icfg, const std::string& dir,
                       int episode_index);

// One train+eval cell (used by the ablation driver and the acceptance suite).
struct CellSpec {
  PolicyMode mode = PolicyMode::zoom;
  NoiseVariant variant = NoiseVariant::no_drift;
  int n_demos = 30;
  std::uint64_t seed = 0;
};

std::string cell_id(const CellSpec& cell);

TrainResult train_cell(const ExperimentConfig& cfg, const CellSpec& cell);

enum class AblationKind { drift, timesteps, demos, ood };

AblationKind ablation_from_name(const std::string& s);

// Runs the requested matrix across seeds; returns all rows plus one median
// summary row per cell and writes them to <output_dir>/ablation_<which>.csv.
std::vector<MetricsRow> run_ablation(const ExperimentConfig& cfg, AblationKind which);

// Median helper (odd or even counts).
double median(std::vector<double> values);

}  // namespace c3dm
