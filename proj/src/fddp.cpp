#include "c3dm/fddp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <numeric>
#include <sstream>

#include "c3dm/error.hpp"

namespace c3dm {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t fnv1a(const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Chain values between window frames via the real plane.
std::vector<double> convert_frame(const std::vector<double>& values,
                                  const ActionLayout& layout, const Window& from,
                                  const Window& to) {
  ActionVec a;
  a.values = values;
  a.layout = layout;
  a.frame = ActionFrame::window_normalized;
  return renormalize_action(unnormalize_action(a, from), to).values;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

const char* mode_name(PolicyMode m) {
  switch (m) {
    case PolicyMode::baseline: return "baseline";
    case PolicyMode::mask: return "mask";
    case PolicyMode::zoom: return "zoom";
  }
  return "?";
}

PolicyMode mode_from_name(const std::string& s) {
  if (s == "baseline") return PolicyMode::baseline;
  if (s == "mask") return PolicyMode::mask;
  if (s == "zoom") return PolicyMode::zoom;
  throw ConfigError("unknown mode: " + s);
}

const char* variant_name(NoiseVariant v) {
  return v == NoiseVariant::drift ? "drift" : "no_drift";
}

NoiseVariant variant_from_name(const std::string& s) {
  if (s == "drift") return NoiseVariant::drift;
  if (s == "no_drift") return NoiseVariant::no_drift;
  throw ConfigError("unknown variant: " + s);
}

std::vector<std::array<double, 2>> default_act_bounds(const ActionLayout& layout) {
  std::vector<std::array<double, 2>> b(layout.dim());
  for (const auto& s : layout.subs) {
    b[s.offset] = {-1.0, 1.0};
    b[s.offset + 1] = {-1.0, 1.0};
    if (s.has_yaw) b[s.offset + 2] = {-kPi, kPi};
  }
  return b;
}

std::vector<ChainPlan> make_chains(const ActionLayout& layout, bool joint) {
  std::vector<ChainPlan> plans;
  if (joint) {
    ChainPlan p;
    p.name = "joint";
    p.fixation_sub = 0;
    p.model_chain = 0;
    for (std::size_t s = 0; s < layout.subs.size(); ++s) {
      p.sub_actions.push_back(static_cast<int>(s));
      for (int d = 0; d < layout.subs[s].dim(); ++d)
        p.slots.push_back(layout.subs[s].offset + d);
    }
    plans.push_back(std::move(p));
    return plans;
  }
  for (std::size_t s = 0; s < layout.subs.size(); ++s) {
    ChainPlan p;
    p.name = layout.subs[s].name;
    p.sub_actions = {static_cast<int>(s)};
    p.fixation_sub = static_cast<int>(s);
    p.model_chain = static_cast<int>(s);
    for (int d = 0; d < layout.subs[s].dim(); ++d)
      p.slots.push_back(layout.subs[s].offset + d);
    plans.push_back(std::move(p));
  }
  return plans;
}

ActionLayout chain_layout(const ActionLayout& full, const ChainPlan& plan) {
  ActionLayout l;
  int offset = 0;
  for (int s : plan.sub_actions) {
    SubAction sub = full.subs.at(s);
    sub.offset = offset;
    offset += sub.dim();
    l.subs.push_back(std::move(sub));
  }
  return l;
}

std::vector<double> gather_slots(const std::vector<double>& full_values,
                                 const ChainPlan& plan) {
  std::vector<double> out(plan.slots.size());
  for (std::size_t i = 0; i < plan.slots.size(); ++i)
    out[i] = full_values.at(plan.slots[i]);
  return out;
}

void scatter_slots(std::vector<double>& full_values, const ChainPlan& plan,
                   const std::vector<double>& chain_values) {
  if (chain_values.size() != plan.slots.size())
    throw ShapeError("scatter_slots: size mismatch");
  for (std::size_t i = 0; i < plan.slots.size(); ++i)
    full_values.at(plan.slots[i]) = chain_values[i];
}

std::vector<ChainSpec> chain_specs(const std::vector<ChainPlan>& plans) {
  std::vector<ChainSpec> specs;
  for (const auto& p : plans) specs.push_back({p.name, p.dim()});
  return specs;
}

// --- providers ---------------------------------------------------------------

SceneContextProvider::SceneContextProvider(SceneSpec scene, const TaskConfig& task)
    : scene_(std::move(scene)),
      cam_(task.base_camera()),
      noise_sigma_(task.pixel_noise_sigma),
      noise_rng_(scene_.seed ^ 0x5eed5eedULL) {
  base_ = render(scene_, cam_);
  if (noise_sigma_ > 0.0) add_pixel_noise(base_, noise_sigma_, noise_rng_);
}

Image SceneContextProvider::view(const Window& w, int out_h, int out_w) const {
  Image img = zoom_context(scene_, w, out_h, out_w);
  if (noise_sigma_ > 0.0) add_pixel_noise(img, noise_sigma_, noise_rng_);
  return img;
}

BitmapContextProvider::BitmapContextProvider(Image base, Image high_res, int factor,
                                             const CameraTransform& cam,
                                             Rgb background)
    : base_(std::move(base)),
      high_res_(std::move(high_res)),
      factor_(factor),
      cam_(cam),
      background_(background) {
  if (high_res_.h != base_.h * factor_ || high_res_.w != base_.w * factor_)
    throw ShapeError("BitmapContextProvider: high-res dims must be factor * base");
}

Image BitmapContextProvider::view(const Window& w, int out_h, int out_w) const {
  return zoom_from_bitmap(high_res_, factor_, w, out_h, out_w);
}

// --- training ----------------------------------------------------------------

TrainingExample make_training_example(const Demo& demo, const ChainPlan& plan,
                                      int chain_index, double t,
                                      const std::vector<double>& eps_chain,
                                      const TrainConfig& cfg,
                                      const ContextProvider& ctx, Rng* jitter_rng) {
  if (static_cast<int>(eps_chain.size()) != plan.dim())
    throw ShapeError("make_training_example: eps size mismatch");

  const CameraTransform& cam = ctx.camera();
  const Window full_w = full_window(cam);
  const ActionLayout local = chain_layout(demo.action.layout, plan);

  // Ground-truth chain action in the unconstrained (full-window) frame.
  ActionVec gt_local;
  gt_local.values = gather_slots(demo.action.values, plan);
  gt_local.layout = local;
  gt_local.frame = ActionFrame::global_meters;
  const std::vector<double> a_norm = renormalize_action(gt_local, full_w).values;

  const std::vector<double> a_noisy =
      noise(cfg.variant, a_norm, t, eps_chain, cfg.schedule);

  TrainingExample ex;
  ex.t = t;
  ex.chain = chain_index;
  ex.eps_target = eps_chain;

  // Fixation always from the ground-truth action, never the noisy one.
  int fix_local = 0;
  for (std::size_t s = 0; s < plan.sub_actions.size(); ++s)
    if (plan.sub_actions[s] == plan.fixation_sub) fix_local = static_cast<int>(s);
  const Vec2 p = fixation_point(gt_local, fix_local, cam);

  switch (cfg.mode) {
    case PolicyMode::baseline:
      ex.window = full_w;
      ex.shared_context = &ctx.full();
      ex.a_noisy_model = a_noisy;
      break;
    case PolicyMode::mask: {
      ex.window = constrain_window(p, t, cfg.schedule, cfg.f_min, cam, jitter_rng);
      ex.context = mask_context(ctx.full(), ex.window, ctx.background());
      ex.a_noisy_model = a_noisy;
      break;
    }
    case PolicyMode::zoom: {
      ex.window = constrain_window(p, t, cfg.schedule, cfg.f_min, cam, jitter_rng);
      ex.context = ctx.view(ex.window, cam.image_h, cam.image_w);
      ex.a_noisy_model = convert_frame(a_noisy, local, full_w, ex.window);
      break;
    }
  }
  return ex;
}

Demo rotate_demo(const Demo& demo, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return demo;
  auto rot = [&](Vec2 v) {
    for (int i = 0; i < k; ++i) v = {-v.y, v.x};
    return v;
  };
  Demo out = demo;
  for (auto& obj : out.scene.objects) {
    obj.position = rot(obj.position);
    obj.yaw = wrap_angle(obj.yaw + k * kPi / 2.0);
  }
  for (std::size_t s = 0; s < out.action.layout.subs.size(); ++s) {
    const auto& sub = out.action.layout.subs[s];
    out.action.set_position(static_cast<int>(s), rot(demo.action.position(static_cast<int>(s))));
    if (sub.has_yaw)
      out.action.values[sub.offset + 2] =
          wrap_angle(demo.action.values[sub.offset + 2] + k * kPi / 2.0);
  }
  return out;
}

TrainResult train(const std::vector<Demo>& demos, const TaskConfig& task,
                  const TrainConfig& cfg, const Checkpoint* resume) {
  if (demos.empty()) throw ConfigError("train: empty dataset");
  if (cfg.k_noisy < 1) throw ConfigError("train: k_noisy must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

  std::vector<Demo> data = demos;
  if (cfg.rotation_augment) {
    data.reserve(demos.size() * 4);
    for (const auto& d : demos)
      for (int k = 1; k < 4; ++k) data.push_back(rotate_demo(d, k));
  }

  const ActionLayout layout = data.front().action.layout;
  const auto plans = make_chains(layout, cfg.joint_chain);

  ModelConfig model = cfg.model;
  model.image_h = task.image_h;
  model.image_w = task.image_w;
  model.chains = chain_specs(plans);
  model.validate();

  TrainResult result;
  result.model = model;
  if (resume) {
    result.params = resume->params;
    result.adam = resume->adam;
    result.adam.cfg.lr = cfg.lr;
  } else {
    result.params = init_params(model, cfg.seed);
    result.adam = AdamState::init(result.params, {.lr = cfg.lr});
  }

  std::vector<SceneContextProvider> providers;
  providers.reserve(data.size());
  for (const auto& d : data) providers.emplace_back(d.scene, task);

  Rng rng(cfg.seed ^ 0x7e417a11ULL);
  ParamSet grads = result.params.zeros_like();

  const int n = static_cast<int>(data.size());
  const int batch = std::min(cfg.batch_size, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates shuffle with the run rng.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    int steps = 0;
    for (int start = 0; start < n; start += batch) {
      const int end = std::min(start + batch, n);
      std::deque<TrainingExample> owned;
      std::vector<LossItem> items;
      for (int bi = start; bi < end; ++bi) {
        const int d = order[bi];
        for (int k = 0; k < cfg.k_noisy; ++k) {
          const double t = rng.uniform(0.0, cfg.schedule.horizon_t);
          std::vector<double> eps_full(layout.dim());
          for (auto& e : eps_full) e = rng.normal();
          for (std::size_t c = 0; c < plans.size(); ++c) {
            owned.push_back(make_training_example(
                data[d], plans[c], static_cast<int>(c), t,
                gather_slots(eps_full, plans[c]), cfg, providers[d], &rng));
            const TrainingExample& ex = owned.back();
            items.push_back({&ex.image(), ex.chain, ex.a_noisy_model, ex.t,
                             ex.eps_target});
          }
        }
      }
      for (auto& [name, g] : grads.tensors) g.fill(0.0);
      const double loss = loss_and_grads(result.params, model, items, grads);
      if (!std::isfinite(loss) || loss > 1e12) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << " step " << steps
           << " (lr=" << cfg.lr << ", mode=" << mode_name(cfg.mode) << ")";
        throw DivergenceError(os.str());
      }
      adam_step(result.params, grads, result.adam);
      epoch_loss += loss;
      ++steps;
    }
    result.epoch_loss.push_back(epoch_loss / std::max(1, steps));
  }
  return result;
}

// --- inference ---------------------------------------------------------------

NnEpsModel::NnEpsModel(const ParamSet& params, ModelConfig cfg)
    : params_(params), cfg_(std::move(cfg)) {}

std::vector<double> NnEpsModel::predict(const EpsQuery& q) {
  const std::uint64_t h =
      fnv1a(q.context->data.data(), q.context->data.size() * sizeof(float));
  if (!cache_valid_ || h != cached_hash_) {
    cached_embed_ = encoder_forward(params_, cfg_, *q.context);
    cached_hash_ = h;
    cache_valid_ = true;
  }
  return denoiser_forward(params_, cfg_, q.chain, cached_embed_, q.a_model, q.t);
}

IdealEpsModel::IdealEpsModel(std::vector<std::vector<double>> target_per_chain,
                             ScheduleSpec schedule, NoiseVariant variant)
    : targets_(std::move(target_per_chain)), schedule_(schedule), variant_(variant) {}

std::vector<double> IdealEpsModel::predict(const EpsQuery& q) {
  const auto& target = targets_.at(q.chain);
  if (target.size() != q.a_fullnorm.size())
    throw ShapeError("IdealEpsModel: target size mismatch");
  const double ab = alpha_bar(schedule_, q.t);
  const double scale = std::sqrt(1.0 - ab);
  const double drift = variant_ == NoiseVariant::drift ? std::sqrt(ab) : 1.0;
  std::vector<double> eps(target.size());
  for (std::size_t i = 0; i < eps.size(); ++i)
    eps[i] = (q.a_fullnorm[i] - drift * target[i]) / scale;
  return eps;
}

ChainResult infer_chain(const ContextProvider& ctx, EpsModel& model,
                        const ActionLayout& full_layout, const ChainPlan& plan,
                        const InferConfig& cfg, Rng& rng) {
  if (cfg.n_steps < 1) throw ConfigError("infer: n_steps must be >= 1");
  const CameraTransform& cam = ctx.camera();
  const Window full_w = full_window(cam);
  const ActionLayout local = chain_layout(full_layout, plan);
  const auto bounds_full = cfg.act_bounds.empty() ? default_act_bounds(full_layout)
                                                  : cfg.act_bounds;
  if (static_cast<int>(bounds_full.size()) != full_layout.dim())
    throw ConfigError("infer: act_bounds size mismatch");

  int fix_local = 0;
  for (std::size_t s = 0; s < plan.sub_actions.size(); ++s)
    if (plan.sub_actions[s] == plan.fixation_sub) fix_local = static_cast<int>(s);

  // a_T ~ Unif(act_bounds), unconstrained frame.
  std::vector<double> a(plan.dim());
  for (int i = 0; i < plan.dim(); ++i) {
    const auto& b = bounds_full[plan.slots[i]];
    a[i] = rng.uniform(b[0], b[1]);
  }

  // Descending linear grid: T, T(n-1)/n, ..., T/n.
  std::vector<double> grid(cfg.n_steps);
  for (int i = 0; i < cfg.n_steps; ++i)
    grid[i] = cfg.schedule.horizon_t * static_cast<double>(cfg.n_steps - i) /
              cfg.n_steps;

  ChainResult out;
  out.trace.chain_name = plan.name;
  Window w = full_w;
  std::vector<double> a_final;

  for (int step = 0; step < cfg.n_steps; ++step) {
    const double t = grid[step];

    Image ctx_owned;
    const Image* ctx_img = nullptr;
    switch (cfg.mode) {
      case PolicyMode::baseline:
        w = full_w;
        ctx_img = &ctx.full();
        break;
      case PolicyMode::mask:
        ctx_owned = mask_context(ctx.full(), w, ctx.background());
        ctx_img = &ctx_owned;
        break;
      case PolicyMode::zoom:
        ctx_owned = ctx.view(w, cam.image_h, cam.image_w);
        ctx_img = &ctx_owned;
        break;
    }

    EpsQuery q;
    q.context = ctx_img;
    q.a_fullnorm = a;
    q.a_model = cfg.mode == PolicyMode::zoom ? convert_frame(a, local, full_w, w) : a;
    q.t = t;
    q.chain = plan.model_chain;
    q.window = &w;

    const auto eps_hat = model.predict(q);
    const auto a_point =
        denoise_point_estimate(a, eps_hat, t, cfg.schedule, cfg.variant);
    if (!all_finite(a_point)) {
      std::ostringstream os;
      os << "infer: non-finite action at step " << step << " (t=" << t
         << ", chain=" << plan.name << "); trace:";
      for (const auto& r : out.trace.steps) {
        double mag = 0.0;
        for (double v : r.a_t) mag = std::max(mag, std::abs(v));
        os << " [t=" << r.t << " max|a|=" << mag << "]";
      }
      throw DivergenceError(os.str());
    }

    // Clamp latents to 1.5x bounds before fixation extraction so the window
    // stays valid even for wild early estimates.
    std::vector<double> a_fix = a_point;
    for (int i = 0; i < plan.dim(); ++i) {
      const auto& b = bounds_full[plan.slots[i]];
      const double mid = 0.5 * (b[0] + b[1]);
      const double half = 0.75 * (b[1] - b[0]);  // 1.5x the half-range
      a_fix[i] = std::clamp(a_fix[i], mid - half, mid + half);
    }
    ActionVec est;
    est.values = a_fix;
    est.layout = local;
    est.frame = ActionFrame::window_normalized;
    Vec2 p = fixation_point(unnormalize_action(est, full_w), fix_local, cam);
    p.x = std::clamp(p.x, 0.0, static_cast<double>(cam.image_w));
    p.y = std::clamp(p.y, 0.0, static_cast<double>(cam.image_h));

    out.trace.steps.push_back({t, w, a, a_point, p});

    if (step + 1 == cfg.n_steps) {
      // Terminal renoise at t=0 carries no noise; return the point estimate.
      a_final = a_point;
      break;
    }
    const double t_next = grid[step + 1];
    std::vector<double> eps(plan.dim());
    for (auto& e : eps) e = rng.normal();
    a = renoise(a_point, t_next, eps, cfg.schedule, cfg.variant);
    if (cfg.mode != PolicyMode::baseline)
      w = constrain_window(p, t_next, cfg.schedule, cfg.f_min, cam, nullptr);
  }

  out.a0_fullnorm = std::move(a_final);
  return out;
}

InferOutcome run_fddp(const ContextProvider& ctx, EpsModel& model,
                      const ActionLayout& layout, const InferConfig& cfg,
                      Rng& rng) {
  const auto plans = make_chains(layout, cfg.joint_chain);
  InferOutcome outcome;

  std::vector<double> full_norm(layout.dim(), 0.0);
  for (std::size_t c = 0; c < plans.size(); ++c) {
    Rng chain_rng = rng.fork(c);
    auto res = infer_chain(ctx, model, layout, plans[c], cfg, chain_rng);
    scatter_slots(full_norm, plans[c], res.a0_fullnorm);
    outcome.chains.push_back(std::move(res));
  }

  ActionVec a_norm;
  a_norm.values = std::move(full_norm);
  a_norm.layout = layout;
  a_norm.frame = ActionFrame::window_normalized;
  outcome.action = unnormalize_action(a_norm, full_window(ctx.camera()));
  return outcome;
}

}  // namespace c3dm
