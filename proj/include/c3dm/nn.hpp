#pragma once

#include <map>
#include <string>
#include <vector>

#include "c3dm/image.hpp"
#include "c3dm/rng.hpp"
#include "c3dm/tensor.hpp"

namespace c3dm {

// One denoiser head: a named chain of action slots refined together.
struct ChainSpec {
  std::string name;
  int dim = 3;
};

// Conv encoder + per-chain MLP denoiser sizes. The defaults are the
// desk-scale model; tests shrink everything for speed.
struct ModelConfig {
  int image_h = 64;
  int image_w = 64;
  std::vector<int> conv_channels{8, 16, 32, 32};
  int enc_hidden = 128;
  int embed_dim = 64;
  int denoiser_hidden = 128;
  int time_enc_dim = 64;  // 0 disables timestep conditioning
  std::vector<ChainSpec> chains{{"pick", 3}, {"place", 3}};

  int conv_out_h() const { return image_h >> conv_channels.size(); }
  int conv_out_w() const { return image_w >> conv_channels.size(); }
  int flatten_dim() const {
    return conv_out_h() * conv_out_w() * conv_channels.back();
  }
  int denoiser_input_dim(int chain) const {
    return embed_dim + chains.at(chain).dim + time_enc_dim;
  }
  void validate() const;
};

// Named weight collection; map keys give a stable iteration order.
struct ParamSet {
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  ParamSet zeros_like() const;
  std::size_t total_params() const;
};

// He-style uniform fan-in init, zero biases; deterministic in seed.
ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed);

// Sinusoidal timestep features, geometric frequency ladder.
std::vector<double> time_features(double t, int dim);

// Cached activations for the backward passes.
struct EncoderActs {
  std::vector<Tensor> cols;      // im2col buffers per conv layer
  std::vector<Tensor> conv_post; // post-ReLU conv outputs (planar C,H,W)
  Tensor input;                  // planar image
  Tensor fc0_post;
  Tensor embed;                  // post-ReLU embedding
};

struct DenoiserActs {
  std::vector<double> input;  // [o ; a ; t_features]
  Tensor h1, h2, h3;          // post-activation hidden states
  Tensor pre1, pre2, pre3;    // pre-activation (for ReLU masks)
};

// Deterministic embedding of an image; throws ShapeError on a size mismatch.
std::vector<double> encoder_forward(const ParamSet& params, const ModelConfig& cfg,
                                    const Image& o, EncoderActs* acts = nullptr);

// Accumulates encoder parameter gradients for dL/d_embed.
void encoder_backward(const ParamSet& params, const ModelConfig& cfg,
                      const EncoderActs& acts, const std::vector<double>& d_embed,
                      ParamSet& grads);

// Epsilon prediction head for one chain. Output length = chain dim, in the
// unconstrained-context frame of its training inputs.
std::vector<double> denoiser_forward(const ParamSet& params, const ModelConfig& cfg,
                                     int chain, const std::vector<double>& o,
                                     const std::vector<double>& a_noisy, double t,
                                     DenoiserActs* acts = nullptr);

// Accumulates head gradients; returns dL/d_input (embedding gradient in the
// first embed_dim slots, action gradient next).
std::vector<double> denoiser_backward(const ParamSet& params, const ModelConfig& cfg,
                                      int chain, const DenoiserActs& acts,
                                      const std::vector<double>& d_out,
                                      ParamSet& grads);

// One training example for the epsilon-regression loss. Items sharing an
// image pointer must be adjacent so the encoder runs once per context.
struct LossItem {
  const Image* image = nullptr;
  int chain = 0;
  std::vector<double> a_noisy;
  double t = 0.0;
  std::vector<double> eps_target;
};

// Mean over items of || eps_hat - eps_target ||^2, with reverse-mode
// gradients accumulated into `grads` (which must be zeros_like(params)).
double loss_and_grads(const ParamSet& params, const ModelConfig& cfg,
                      const std::vector<LossItem>& batch, ParamSet& grads);

// Forward-only loss (diagnostics).
double loss_only(const ParamSet& params, const ModelConfig& cfg,
                 const std::vector<LossItem>& batch);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stab = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;

  static AdamState init(const ParamSet& params, AdamConfig cfg);
};

// Standard bias-corrected Adam update; throws ShapeError on any mismatch.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

// --- Weight file format (bit-exact) --------------------------------------
// magic "C3DMWTS1", little-endian; u32 tensor count; per tensor:
// u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f32 data.
void save_params(const ParamSet& params, const std::string& path);
ParamSet load_params(const std::string& path);

// Optimizer state rides in the same container under the "adam." prefix.
void save_checkpoint(const ParamSet& params, const AdamState& adam,
                     const std::string& path);
struct Checkpoint {
  ParamSet params;
  bool has_adam = false;
  AdamState adam;
};
Checkpoint load_checkpoint(const std::string& path, AdamConfig adam_cfg);

}  // namespace c3dm
