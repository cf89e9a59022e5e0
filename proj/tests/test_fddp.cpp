#include <doctest.h>

#include <cmath>
#include <set>

#include "c3dm/dataset.hpp"
#include "c3dm/error.hpp"
#include "c3dm/fddp.hpp"

using namespace c3dm;

namespace {

TaskConfig small_task() {
  TaskConfig cfg = default_task_config();
  cfg.image_h = 32;
  cfg.image_w = 32;
  cfg.n_distractors = 2;
  return cfg;
}

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.conv_channels = {4, 8};
  cfg.enc_hidden = 32;
  cfg.embed_dim = 16;
  cfg.denoiser_hidden = 32;
  cfg.time_enc_dim = 8;
  return cfg;
}

// Ground-truth targets per chain in the unconstrained frame.
std::vector<std::vector<double>> fullnorm_targets(const Demo& demo,
                                                  const TaskConfig& task,
                                                  bool joint) {
  const Window fw = full_window(task.base_camera());
  const ActionVec norm = renormalize_action(demo.action, fw);
  std::vector<std::vector<double>> targets;
  for (const auto& plan : make_chains(demo.action.layout, joint))
    targets.push_back(gather_slots(norm.values, plan));
  return targets;
}

double action_distance(const ActionVec& a, const ActionVec& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    d = std::max(d, std::abs(a.values[i] - b.values[i]));
  return d;
}

// Ideal model that additionally asserts the frame contract between the
// window-local and unconstrained action inputs.
class FrameCheckingModel : public EpsModel {
 public:
  FrameCheckingModel(IdealEpsModel inner, const ActionLayout& layout,
                     const CameraTransform& cam, PolicyMode mode)
      : inner_(std::move(inner)), layout_(layout), cam_(cam), mode_(mode) {}

  std::vector<double> predict(const EpsQuery& q) override {
    if (mode_ == PolicyMode::zoom) {
      // a_model unnormalized through the current window must equal
      // a_fullnorm unnormalized through the full window.
      const auto plans = make_chains(layout_, false);
      const ActionLayout local = chain_layout(layout_, plans.at(q.chain));
      ActionVec m;
      m.values = q.a_model;
      m.layout = local;
      m.frame = ActionFrame::window_normalized;
      ActionVec f;
      f.values = q.a_fullnorm;
      f.layout = local;
      f.frame = ActionFrame::window_normalized;
      const ActionVec am = unnormalize_action(m, *q.window);
      const ActionVec af = unnormalize_action(f, full_window(cam_));
      for (std::size_t i = 0; i < am.values.size(); ++i) {
        REQUIRE(std::abs(am.values[i] - af.values[i]) <= 1e-9);
      }
    } else {
      REQUIRE(q.a_model == q.a_fullnorm);
    }
    ++calls;
    return inner_.predict(q);
  }

  int calls = 0;

 private:
  IdealEpsModel inner_;
  ActionLayout layout_;
  CameraTransform cam_;
  PolicyMode mode_;
};

}  // namespace

TEST_CASE("ideal denoiser recovers the target action exactly") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 10);
  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);

  for (auto mode : {PolicyMode::baseline, PolicyMode::mask, PolicyMode::zoom}) {
    for (auto variant : {NoiseVariant::drift, NoiseVariant::no_drift}) {
      for (int n_steps : {1, 5, 10}) {
        InferConfig cfg;
        cfg.n_steps = n_steps;
        cfg.mode = mode;
        cfg.variant = variant;
        cfg.seed = 77;
        IdealEpsModel ideal(fullnorm_targets(demo, task, false), cfg.schedule, variant);
        Rng rng(cfg.seed);
        const InferOutcome out = run_fddp(ctx, ideal, demo.action.layout, cfg, rng);
        CHECK(action_distance(out.action, demo.action) <= 1e-6);
        for (const auto& chain : out.chains)
          CHECK(static_cast<int>(chain.trace.steps.size()) == n_steps);
      }
    }
  }
}

TEST_CASE("n_steps=1 denoises a single uniform draw") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 3);
  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);

  InferConfig cfg;
  cfg.n_steps = 1;
  cfg.mode = PolicyMode::baseline;
  cfg.seed = 5;
  IdealEpsModel ideal(fullnorm_targets(demo, task, false), cfg.schedule, cfg.variant);
  Rng rng(cfg.seed);
  const InferOutcome out = run_fddp(ctx, ideal, demo.action.layout, cfg, rng);
  REQUIRE(out.chains.size() == 2);
  for (const auto& chain : out.chains) {
    REQUIRE(chain.trace.steps.size() == 1);
    CHECK(chain.trace.steps[0].t == doctest::Approx(cfg.schedule.horizon_t));
    // Output equals the single point estimate.
    CHECK(chain.a0_fullnorm == chain.trace.steps[0].a_point);
  }
}

TEST_CASE("trace windows shrink and frames stay consistent") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 21);
  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);

  for (auto mode : {PolicyMode::mask, PolicyMode::zoom}) {
    InferConfig cfg;
    cfg.n_steps = 10;
    cfg.mode = mode;
    cfg.seed = 13;
    FrameCheckingModel model(
        IdealEpsModel(fullnorm_targets(demo, task, false), cfg.schedule, cfg.variant),
        demo.action.layout, task.base_camera(), mode);
    Rng rng(cfg.seed);
    const InferOutcome out = run_fddp(ctx, model, demo.action.layout, cfg, rng);
    CHECK(model.calls == 20);
    for (const auto& chain : out.chains) {
      double prev = 1e18;
      for (const auto& rec : chain.trace.steps) {
        CHECK(rec.window.area() <= prev + 1e-9);
        prev = rec.window.area();
      }
    }
  }
}

TEST_CASE("make_training_example: baseline at t=T passes everything through") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 8);
  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);

  TrainConfig cfg;
  cfg.mode = PolicyMode::baseline;
  const auto plans = make_chains(demo.action.layout, false);
  const std::vector<double> eps{0.5, -0.25, 1.0};

  const TrainingExample ex = make_training_example(
      demo, plans[0], 0, cfg.schedule.horizon_t, eps, cfg, ctx, nullptr);
  CHECK(&ex.image() == &ctx.full());
  CHECK(ex.eps_target == eps);

  // The model input is the noisy action in the unconstrained frame.
  const Window fw = full_window(task.base_camera());
  ActionVec gt_local;
  gt_local.layout = chain_layout(demo.action.layout, plans[0]);
  gt_local.values = gather_slots(demo.action.values, plans[0]);
  gt_local.frame = ActionFrame::global_meters;
  const auto a_norm = renormalize_action(gt_local, fw).values;
  const auto expect = noise(cfg.variant, a_norm, cfg.schedule.horizon_t, eps, cfg.schedule);
  for (int i = 0; i < 3; ++i)
    CHECK(ex.a_noisy_model[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("make_training_example: zoom at small t centers on the oracle") {
  TaskConfig task = small_task();
  task.n_distractors = 0;
  // Target near the center so the terminal window needs no clipping.
  SceneSpec scene;
  scene.table_size = task.table_size;
  scene.table_color = task.table_color;
  scene.seed = 1;
  ObjectSpec target;
  target.shape = ObjectShape::square_block;
  target.half_size = task.target_half;
  target.position = {0.05, -0.03};
  target.color = task.target_color;
  target.role = ObjectRole::pick_target;
  scene.objects.push_back(target);
  ObjectSpec goal;
  goal.shape = ObjectShape::disk_bowl;
  goal.half_size = task.goal_radius;
  goal.position = {-0.2, 0.1};
  goal.color = task.goal_color;
  goal.role = ObjectRole::place_goal;
  scene.objects.push_back(goal);

  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);
  TrainConfig cfg;
  cfg.mode = PolicyMode::zoom;
  const auto plans = make_chains(demo.action.layout, false);
  const std::vector<double> zero_eps{0.0, 0.0, 0.0};

  const TrainingExample ex =
      make_training_example(demo, plans[0], 0, 1e-6, zero_eps, cfg, ctx, nullptr);
  // Window centered on the ground-truth fixation point.
  const Vec2 p = fixation_point(demo.action, 0, task.base_camera());
  CHECK(ex.window.center.x == doctest::Approx(p.x).epsilon(1e-9));
  CHECK(ex.window.center.y == doctest::Approx(p.y).epsilon(1e-9));
  // Noiseless action renormalized into that window sits at the origin.
  CHECK(ex.a_noisy_model[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(ex.a_noisy_model[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(ex.a_noisy_model[2] == demo.action.values[2]);  // yaw untouched
}

TEST_CASE("fixation always comes from the ground truth, never the noisy action") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 30);
  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);
  TrainConfig cfg;
  cfg.mode = PolicyMode::zoom;
  const auto plans = make_chains(demo.action.layout, false);
  const Vec2 p_gt = fixation_point(demo.action, 0, task.base_camera());

  Rng rng(44);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(0.0, 1.0);
    std::vector<double> eps(3);
    for (auto& e : eps) e = rng.normal() * 3.0;  // wild noise
    const TrainingExample ex =
        make_training_example(demo, plans[0], 0, t, eps, cfg, ctx, &rng);
    CHECK(ex.window.contains(p_gt, 1e-9));
  }
}

TEST_CASE("zoom training example keeps noisy action and window consistent") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 16);
  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);
  TrainConfig cfg;
  cfg.mode = PolicyMode::zoom;
  const auto plans = make_chains(demo.action.layout, false);
  const Window fw = full_window(task.base_camera());
  const ActionLayout local = chain_layout(demo.action.layout, plans[1]);

  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const double t = rng.uniform(0.0, 1.0);
    std::vector<double> eps(3);
    for (auto& e : eps) e = rng.normal();
    const TrainingExample ex =
        make_training_example(demo, plans[1], 1, t, eps, cfg, ctx, &rng);

    // Recover the unconstrained noisy action by inverting the window map.
    ActionVec m;
    m.values = ex.a_noisy_model;
    m.layout = local;
    m.frame = ActionFrame::window_normalized;
    const ActionVec meters = unnormalize_action(m, ex.window);

    ActionVec gt_local;
    gt_local.layout = local;
    gt_local.values = gather_slots(demo.action.values, plans[1]);
    gt_local.frame = ActionFrame::global_meters;
    const auto a_norm = renormalize_action(gt_local, fw).values;
    const auto noisy_norm = noise(cfg.variant, a_norm, t, eps, cfg.schedule);
    ActionVec n;
    n.values = noisy_norm;
    n.layout = local;
    n.frame = ActionFrame::window_normalized;
    const ActionVec expect = unnormalize_action(n, fw);
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(meters.values[k] - expect.values[k]) <= 1e-9);
  }
}

TEST_CASE("baked-in augmentation: zoom sees more distinct pairs than demos") {
  TaskConfig task = small_task();
  const auto demos = make_demos(task, 3, 123);
  TrainConfig cfg;
  cfg.mode = PolicyMode::zoom;
  cfg.k_noisy = 2;
  const auto plans = make_chains(demos[0].action.layout, false);

  Rng rng(9);
  std::set<std::pair<double, double>> pairs;  // (window center x, renorm x)
  for (const auto& demo : demos) {
    SceneContextProvider ctx(demo.scene, task);
    for (int k = 0; k < cfg.k_noisy; ++k) {
      const double t = rng.uniform(0.0, 1.0);
      std::vector<double> eps(3);
      for (auto& e : eps) e = rng.normal();
      const TrainingExample ex =
          make_training_example(demo, plans[0], 0, t, eps, cfg, ctx, &rng);
      pairs.insert({ex.window.center.x, ex.a_noisy_model[0]});
    }
  }
  CHECK(pairs.size() > demos.size());
}

TEST_CASE("rotation augmentation co-rotates scene and action") {
  TaskConfig task = small_task();
  const auto demos = make_demos(task, 1, 55);
  for (int k = 0; k < 4; ++k) {
    const Demo rotated = rotate_demo(demos[0], k);
    CHECK(success(rotated.scene, rotated.action, task));
    const ActionVec oracle = oracle_action(rotated.scene);
    for (int i = 0; i < 6; ++i)
      CHECK(rotated.action.values[i] == doctest::Approx(oracle.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("train overfits a single demo quickly") {
  TaskConfig task = small_task();
  const auto demos = make_demos(task, 1, 3);
  TrainConfig cfg;
  cfg.mode = PolicyMode::baseline;
  cfg.model = small_model();
  cfg.k_noisy = 8;
  cfg.batch_size = 1;
  cfg.epochs = 250;
  cfg.lr = 2e-3;
  cfg.seed = 0;

  const TrainResult result = train(demos, task, cfg);
  REQUIRE(result.epoch_loss.size() == 250);
  CHECK(result.epoch_loss.back() < 0.05);
  CHECK(result.epoch_loss.back() < result.epoch_loss.front());

  // Loss trend: 20-epoch moving average is non-increasing up to slack.
  const auto& loss = result.epoch_loss;
  auto avg = [&](int start) {
    double s = 0.0;
    for (int i = start; i < start + 20; ++i) s += loss[i];
    return s / 20.0;
  };
  for (int start = 0; start + 40 <= static_cast<int>(loss.size()); start += 20)
    CHECK(avg(start + 20) <= avg(start) * 1.25 + 1e-3);
}

TEST_CASE("K=10 and K=1 reach the same loss with equal gradient samples") {
  TaskConfig task = small_task();
  const auto demos = make_demos(task, 5, 17);

  auto run = [&](int k, int epochs) {
    TrainConfig cfg;
    cfg.mode = PolicyMode::baseline;
    cfg.model = small_model();
    cfg.k_noisy = k;
    cfg.batch_size = 5;
    cfg.epochs = epochs;
    cfg.lr = 2e-3;
    cfg.seed = 1;
    return train(demos, task, cfg).epoch_loss.back();
  };

  CHECK(run(10, 60) < 1e-2);
  CHECK(run(1, 600) < 1e-2);
}

TEST_CASE("training aborts with a divergence error on absurd learning rates") {
  TaskConfig task = small_task();
  const auto demos = make_demos(task, 2, 5);
  TrainConfig cfg;
  cfg.mode = PolicyMode::baseline;
  cfg.model = small_model();
  cfg.epochs = 200;
  cfg.lr = 1e18;
  CHECK_THROWS_AS(train(demos, task, cfg), DivergenceError);
}

TEST_CASE("per-subaction chains are independent and order-insensitive") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 60);
  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);

  InferConfig cfg;
  cfg.n_steps = 5;
  cfg.mode = PolicyMode::zoom;
  cfg.seed = 3;
  const auto targets = fullnorm_targets(demo, task, false);
  const auto plans = make_chains(demo.action.layout, false);

  // Run the chains directly in both orders with the same forked streams.
  IdealEpsModel m1(targets, cfg.schedule, cfg.variant);
  Rng base(cfg.seed);
  Rng r0 = base.fork(0);
  Rng r1 = base.fork(1);
  const auto pick_first = infer_chain(ctx, m1, demo.action.layout, plans[0], cfg, r0);
  const auto place_first = infer_chain(ctx, m1, demo.action.layout, plans[1], cfg, r1);

  IdealEpsModel m2(targets, cfg.schedule, cfg.variant);
  Rng base2(cfg.seed);
  Rng r1b = base2.fork(1);
  Rng r0b = base2.fork(0);
  const auto place_again = infer_chain(ctx, m2, demo.action.layout, plans[1], cfg, r1b);
  const auto pick_again = infer_chain(ctx, m2, demo.action.layout, plans[0], cfg, r0b);

  CHECK(pick_first.a0_fullnorm == pick_again.a0_fullnorm);
  CHECK(place_first.a0_fullnorm == place_again.a0_fullnorm);
}

TEST_CASE("joint chain mode runs a single 6-dim chain with pick fixation") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 61);
  const Demo demo{scene, oracle_action(scene)};
  SceneContextProvider ctx(scene, task);

  InferConfig cfg;
  cfg.n_steps = 6;
  cfg.mode = PolicyMode::zoom;
  cfg.joint_chain = true;
  cfg.seed = 7;
  IdealEpsModel ideal(fullnorm_targets(demo, task, true), cfg.schedule, cfg.variant);
  Rng rng(cfg.seed);
  const InferOutcome out = run_fddp(ctx, ideal, demo.action.layout, cfg, rng);
  REQUIRE(out.chains.size() == 1);
  CHECK(out.chains[0].trace.chain_name == "joint");
  CHECK(out.chains[0].trace.steps.size() == 6);
  CHECK(action_distance(out.action, demo.action) <= 1e-6);

  // The joint fixation tracks the pick position.
  const Vec2 p = fixation_point(demo.action, 0, task.base_camera());
  const auto& last = out.chains[0].trace.steps.back();
  CHECK(std::abs(last.fixation_px.x - p.x) <= 1e-6);
  CHECK(std::abs(last.fixation_px.y - p.y) <= 1e-6);
}

TEST_CASE("bitmap provider matches the exact renderer closely") {
  TaskConfig task = small_task();
  const SceneSpec scene = sample_scene(task, 14);
  SceneContextProvider exact(scene, task);

  TaskConfig hi = task;
  hi.image_h = task.image_h * 8;
  hi.image_w = task.image_w * 8;
  BitmapContextProvider bitmap(render_full(scene, task), render_full(scene, hi), 8,
                               task.base_camera(), task.table_color);

  Window w;
  w.parent = task.base_camera();
  w.half_extent = {8.0, 8.0};
  w.center = {14.0, 20.0};
  const Image a = exact.view(w, task.image_h, task.image_w);
  const Image b = bitmap.view(w, task.image_h, task.image_w);
  REQUIRE(a.data.size() == b.data.size());
  double mean_err = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    mean_err += std::abs(a.data[i] - b.data[i]);
  mean_err /= a.data.size();
  CHECK(mean_err < 0.02);
}
