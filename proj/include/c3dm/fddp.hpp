#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "c3dm/geometry.hpp"
#include "c3dm/nn.hpp"
#include "c3dm/scene.hpp"
#include "c3dm/schedules.hpp"

namespace c3dm {

enum class PolicyMode { baseline, mask, zoom };

const char* mode_name(PolicyMode m);
PolicyMode mode_from_name(const std::string& s);
const char* variant_name(NoiseVariant v);
NoiseVariant variant_from_name(const std::string& s);

struct TrainConfig {
  int k_noisy = 1;     // noisy action samples per demo per step
  int batch_size = 10; // demos per optimizer step
  int epochs = 150;
  double lr = 5e-4;
  ScheduleSpec schedule;
  NoiseVariant variant = NoiseVariant::no_drift;
  PolicyMode mode = PolicyMode::zoom;
  double f_min = 0.2;  // terminal window fraction (baseline ignores it)
  bool rotation_augment = false;
  bool joint_chain = false;
  std::uint64_t seed = 0;
  ModelConfig model;  // chain specs are filled in by train()
};

struct InferConfig {
  int n_steps = 10;
  std::vector<std::array<double, 2>> act_bounds;  // per slot, normalized units
  PolicyMode mode = PolicyMode::zoom;
  NoiseVariant variant = NoiseVariant::no_drift;
  ScheduleSpec schedule;
  double f_min = 0.2;
  bool joint_chain = false;
  std::uint64_t seed = 0;
};

// Positions span [-1, 1] (the table in full-window units), yaw (-pi, pi].
std::vector<std::array<double, 2>> default_act_bounds(const ActionLayout& layout);

// One refinement chain: the sub-actions denoised together and the sub-action
// whose position provides the fixation point.
struct ChainPlan {
  std::string name;
  std::vector<int> sub_actions;
  int fixation_sub = 0;
  int model_chain = 0;     // denoiser head index
  std::vector<int> slots;  // flat indices into the full action vector
  int dim() const { return static_cast<int>(slots.size()); }
};

// Per-subaction chains (default), or a single joint chain fixating on the
// first sub-action.
std::vector<ChainPlan> make_chains(const ActionLayout& layout, bool joint);

// Chain-local layout / slot gather-scatter.
ActionLayout chain_layout(const ActionLayout& full, const ChainPlan& plan);
std::vector<double> gather_slots(const std::vector<double>& full_values,
                                 const ChainPlan& plan);
void scatter_slots(std::vector<double>& full_values, const ChainPlan& plan,
                   const std::vector<double>& chain_values);

std::vector<ChainSpec> chain_specs(const std::vector<ChainPlan>& plans);

// Observation source for one scene: the unconstrained render plus zoomed
// window views.
class ContextProvider {
 public:
  virtual ~ContextProvider() = default;
  virtual const CameraTransform& camera() const = 0;
  virtual const Image& full() const = 0;
  virtual Image view(const Window& w, int out_h, int out_w) const = 0;
  virtual Rgb background() const = 0;
};

// Exact provider: re-renders the parametric scene per window.
class SceneContextProvider : public ContextProvider {
 public:
  SceneContextProvider(SceneSpec scene, const TaskConfig& task);
  const CameraTransform& camera() const override { return cam_; }
  const Image& full() const override { return base_; }
  Image view(const Window& w, int out_h, int out_w) const override;
  Rgb background() const override { return scene_.table_color; }

 private:
  SceneSpec scene_;
  CameraTransform cam_;
  Image base_;
  double noise_sigma_ = 0.0;
  mutable Rng noise_rng_;
};

// Parity provider: crops and bilinearly resamples a fixed high-resolution
// bitmap instead of re-rendering.
class BitmapContextProvider : public ContextProvider {
 public:
  BitmapContextProvider(Image base, Image high_res, int factor,
                        const CameraTransform& cam, Rgb background);
  const CameraTransform& camera() const override { return cam_; }
  const Image& full() const override { return base_; }
  Image view(const Window& w, int out_h, int out_w) const override;
  Rgb background() const override { return background_; }

 private:
  Image base_;
  Image high_res_;
  int factor_;
  CameraTransform cam_;
  Rgb background_;
};

// One supervised example produced from a demo (Algorithm 1 body).
struct TrainingExample {
  Image context;                       // constrained observation
  const Image* shared_context = nullptr;  // set instead of `context` for baseline
  std::vector<double> a_noisy_model;   // model-input frame
  std::vector<double> eps_target;      // unconstrained frame
  double t = 0.0;
  int chain = 0;
  Window window;

  const Image& image() const { return shared_context ? *shared_context : context; }
};

// eps_chain must have the chain's dimension. The fixation point always comes
// from the ground-truth action; jitter_rng == nullptr disables window jitter.
TrainingExample make_training_example(const Demo& demo, const ChainPlan& plan,
                                      int chain_index, double t,
                                      const std::vector<double>& eps_chain,
                                      const TrainConfig& cfg,
                                      const ContextProvider& ctx, Rng* jitter_rng);

// 90-degree scene rotation with action co-rotation (training augmentation).
Demo rotate_demo(const Demo& demo, int quarter_turns);

struct TrainResult {
  ParamSet params;
  AdamState adam;
  ModelConfig model;
  std::vector<double> epoch_loss;
};

// Algorithm 1: epsilon-regression over constrained contexts.
// Throws DivergenceError when the loss stops being finite.
TrainResult train(const std::vector<Demo>& demos, const TaskConfig& task,
                  const TrainConfig& cfg, const Checkpoint* resume = nullptr);

// --- inference ---------------------------------------------------------------

struct EpsQuery {
  const Image* context = nullptr;
  std::vector<double> a_model;     // current-window frame in zoom mode
  std::vector<double> a_fullnorm;  // unconstrained frame
  double t = 0.0;
  int chain = 0;
  const Window* window = nullptr;
};

class EpsModel {
 public:
  virtual ~EpsModel() = default;
  virtual std::vector<double> predict(const EpsQuery& q) = 0;
};

// Network-backed epsilon model; caches the embedding of the most recent
// context so the baseline re-uses one encoding across all steps.
class NnEpsModel : public EpsModel {
 public:
  NnEpsModel(const ParamSet& params, ModelConfig cfg);
  std::vector<double> predict(const EpsQuery& q) override;

 private:
  const ParamSet& params_;
  ModelConfig cfg_;
  std::uint64_t cached_hash_ = 0;
  bool cache_valid_ = false;
  std::vector<double> cached_embed_;
};

// Analytic denoiser that always points at a known target (test oracle).
class IdealEpsModel : public EpsModel {
 public:
  IdealEpsModel(std::vector<std::vector<double>> target_per_chain,
                ScheduleSpec schedule, NoiseVariant variant);
  std::vector<double> predict(const EpsQuery& q) override;

 private:
  std::vector<std::vector<double>> targets_;
  ScheduleSpec schedule_;
  NoiseVariant variant_;
};

struct StepRecord {
  double t = 0.0;
  Window window;                // context window consumed at this step
  std::vector<double> a_t;      // latent entering the step (unconstrained frame)
  std::vector<double> a_point;  // point estimate of a0 (unconstrained frame)
  Vec2 fixation_px;             // fixation derived from the point estimate
};

struct DenoiseTrace {
  std::string chain_name;
  std::vector<StepRecord> steps;
};

struct ChainResult {
  std::vector<double> a0_fullnorm;
  DenoiseTrace trace;
};

// Algorithm 2 for one chain. Descending linear time grid over (0, T]; the
// terminal step returns the point estimate (zero-noise renoise at t=0).
ChainResult infer_chain(const ContextProvider& ctx, EpsModel& model,
                        const ActionLayout& full_layout, const ChainPlan& plan,
                        const InferConfig& cfg, Rng& rng);

struct InferOutcome {
  ActionVec action;  // global meters frame
  std::vector<ChainResult> chains;
};

// Runs every chain with an independent rng stream and assembles the full
// action in the global frame.
InferOutcome run_fddp(const ContextProvider& ctx, EpsModel& model,
                      const ActionLayout& layout, const InferConfig& cfg,
                      Rng& rng);

}  // namespace c3dm
