#include "c3dm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "c3dm/error.hpp"

namespace c3dm {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ScheduleSpec schedule_from_json(const ordered_json& j) {
  ScheduleSpec s;
  if (j.contains("family")) {
    const std::string f = j.at("family").get<std::string>();
    if (f == "linear")
      s.family = ScheduleFamily::linear;
    else if (f == "cos2")
      s.family = ScheduleFamily::cos2;
    else
      throw ConfigError("unknown schedule family: " + f);
  }
  if (j.contains("horizon_t")) s.horizon_t = j.at("horizon_t").get<double>();
  if (j.contains("alpha_max")) s.alpha_max = j.at("alpha_max").get<double>();
  if (j.contains("alpha_min")) s.alpha_min = j.at("alpha_min").get<double>();
  if (!(s.horizon_t > 0.0) || !(s.alpha_min > 0.0) ||
      !(s.alpha_min < s.alpha_max) || !(s.alpha_max < 1.0))
    throw ConfigError("schedule: need 0 < alpha_min < alpha_max < 1, horizon > 0");
  return s;
}

ordered_json schedule_to_json(const ScheduleSpec& s) {
  ordered_json j;
  j["family"] = s.family == ScheduleFamily::linear ? "linear" : "cos2";
  j["horizon_t"] = s.horizon_t;
  j["alpha_max"] = s.alpha_max;
  j["alpha_min"] = s.alpha_min;
  return j;
}

std::chrono::steady_clock::time_point now() { return std::chrono::steady_clock::now(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(now() - t0).count();
}

void draw_cross(Image& img, double px, double py, Rgb color, int arm = 3) {
  const int c = static_cast<int>(std::floor(px));
  const int r = static_cast<int>(std::floor(py));
  for (int d = -arm; d <= arm; ++d) {
    if (r >= 0 && r < img.h && c + d >= 0 && c + d < img.w) img.set(r, c + d, color);
    if (r + d >= 0 && r + d < img.h && c >= 0 && c < img.w) img.set(r + d, c, color);
  }
}

void draw_window_border(Image& img, const Window& w, Rgb color) {
  const int c0 = std::max(0, static_cast<int>(std::floor(w.center.x - w.half_extent.x)));
  const int c1 = std::min(img.w - 1, static_cast<int>(std::ceil(w.center.x + w.half_extent.x)) - 1);
  const int r0 = std::max(0, static_cast<int>(std::floor(w.center.y - w.half_extent.y)));
  const int r1 = std::min(img.h - 1, static_cast<int>(std::ceil(w.center.y + w.half_extent.y)) - 1);
  for (int c = c0; c <= c1; ++c) {
    img.set(r0, c, color);
    img.set(r1, c, color);
  }
  for (int r = r0; r <= r1; ++r) {
    img.set(r, c0, color);
    img.set(r, c1, color);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_eval_episodes < 1) throw ConfigError("n_eval_episodes must be >= 1");
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  if (n_demos < 1) throw ConfigError("n_demos must be >= 1");
  if (infer.n_steps < 1) throw ConfigError("infer.n_steps must be >= 1");
  if (train.k_noisy < 1) throw ConfigError("train.k_noisy must be >= 1");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.task = default_task_config();
  cfg.train.schedule = ScheduleSpec{};
  cfg.infer.schedule = cfg.train.schedule;
  return cfg;
}

ExperimentConfig experiment_from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  ExperimentConfig cfg = default_experiment_config();

  static const std::vector<std::string> known_top = {
      "task",    "train",        "infer",     "n_demos",   "n_eval_episodes",
      "n_seeds", "data_seed",    "eval_seed", "output_dir"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known_top.begin(), known_top.end(), it.key()) == known_top.end())
      throw ConfigError("unknown config key: " + it.key());
  }

  if (j.contains("task")) cfg.task = task_from_json_text(j.at("task").dump());

  if (j.contains("train")) {
    const auto& t = j.at("train");
    auto get = [&](const char* key, auto& dst) {
      if (t.contains(key)) dst = t.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("k_noisy", cfg.train.k_noisy);
    get("batch_size", cfg.train.batch_size);
    get("epochs", cfg.train.epochs);
    get("lr", cfg.train.lr);
    if (t.contains("schedule")) cfg.train.schedule = schedule_from_json(t.at("schedule"));
    if (t.contains("variant"))
      cfg.train.variant = variant_from_name(t.at("variant").get<std::string>());
    if (t.contains("mode"))
      cfg.train.mode = mode_from_name(t.at("mode").get<std::string>());
    get("f_min", cfg.train.f_min);
    get("rotation_augment", cfg.train.rotation_augment);
    get("joint_chain", cfg.train.joint_chain);
    get("seed", cfg.train.seed);
    if (t.contains("model")) {
      const auto& m = t.at("model");
      auto getm = [&](const char* key, auto& dst) {
        if (m.contains(key)) dst = m.at(key).get<std::decay_t<decltype(dst)>>();
      };
      getm("conv_channels", cfg.train.model.conv_channels);
      getm("enc_hidden", cfg.train.model.enc_hidden);
      getm("embed_dim", cfg.train.model.embed_dim);
      getm("denoiser_hidden", cfg.train.model.denoiser_hidden);
      getm("time_enc_dim", cfg.train.model.time_enc_dim);
    }
  }

  if (j.contains("infer")) {
    const auto& t = j.at("infer");
    auto get = [&](const char* key, auto& dst) {
      if (t.contains(key)) dst = t.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("n_steps", cfg.infer.n_steps);
    if (t.contains("schedule")) cfg.infer.schedule = schedule_from_json(t.at("schedule"));
    if (t.contains("variant"))
      cfg.infer.variant = variant_from_name(t.at("variant").get<std::string>());
    if (t.contains("mode"))
      cfg.infer.mode = mode_from_name(t.at("mode").get<std::string>());
    get("f_min", cfg.infer.f_min);
    get("joint_chain", cfg.infer.joint_chain);
    get("seed", cfg.infer.seed);
  } else if (j.contains("train")) {
    // Keep train/infer schedule in sync unless the file pins both.
    cfg.infer.schedule = cfg.train.schedule;
    cfg.infer.variant = cfg.train.variant;
    cfg.infer.mode = cfg.train.mode;
    cfg.infer.f_min = cfg.train.f_min;
    cfg.infer.joint_chain = cfg.train.joint_chain;
  }

  auto get_top = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get_top("n_demos", cfg.n_demos);
  get_top("n_eval_episodes", cfg.n_eval_episodes);
  get_top("n_seeds", cfg.n_seeds);
  get_top("data_seed", cfg.data_seed);
  get_top("eval_seed", cfg.eval_seed);
  get_top("output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

std::string experiment_to_json_text(const ExperimentConfig& cfg) {
  ordered_json j;
  j["task"] = ordered_json::parse(task_to_json_text(cfg.task));
  ordered_json t;
  t["k_noisy"] = cfg.train.k_noisy;
  t["batch_size"] = cfg.train.batch_size;
  t["epochs"] = cfg.train.epochs;
  t["lr"] = cfg.train.lr;
  t["schedule"] = schedule_to_json(cfg.train.schedule);
  t["variant"] = variant_name(cfg.train.variant);
  t["mode"] = mode_name(cfg.train.mode);
  t["f_min"] = cfg.train.f_min;
  t["rotation_augment"] = cfg.train.rotation_augment;
  t["joint_chain"] = cfg.train.joint_chain;
  t["seed"] = cfg.train.seed;
  ordered_json m;
  m["conv_channels"] = cfg.train.model.conv_channels;
  m["enc_hidden"] = cfg.train.model.enc_hidden;
  m["embed_dim"] = cfg.train.model.embed_dim;
  m["denoiser_hidden"] = cfg.train.model.denoiser_hidden;
  m["time_enc_dim"] = cfg.train.model.time_enc_dim;
  t["model"] = m;
  j["train"] = t;
  ordered_json i;
  i["n_steps"] = cfg.infer.n_steps;
  i["schedule"] = schedule_to_json(cfg.infer.schedule);
  i["variant"] = variant_name(cfg.infer.variant);
  i["mode"] = mode_name(cfg.infer.mode);
  i["f_min"] = cfg.infer.f_min;
  i["joint_chain"] = cfg.infer.joint_chain;
  i["seed"] = cfg.infer.seed;
  j["infer"] = i;
  j["n_demos"] = cfg.n_demos;
  j["n_eval_episodes"] = cfg.n_eval_episodes;
  j["n_seeds"] = cfg.n_seeds;
  j["data_seed"] = cfg.data_seed;
  j["eval_seed"] = cfg.eval_seed;
  j["output_dir"] = cfg.output_dir;
  return j.dump(2) + "\n";
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_metrics_csv: cannot open " + path);
  out << kMetricsHeader << "\n";
  for (const auto& r : rows) {
    out << r.experiment << "," << r.seed << "," << r.mode << "," << r.variant << ","
        << r.n_demos << "," << r.n_steps << "," << fmt_double(r.success_rate) << ","
        << fmt_double(r.pick_err_m) << "," << fmt_double(r.place_err_m) << ","
        << fmt_double(r.wall_s) << "\n";
  }
  if (!out) throw IoError("write_metrics_csv: short write to " + path);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_metrics_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw IoError("read_metrics_csv: bad header in " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 10) throw IoError("read_metrics_csv: bad row: " + line);
    MetricsRow r;
    r.experiment = f[0];
    r.seed = std::stoll(f[1]);
    r.mode = f[2];
    r.variant = f[3];
    r.n_demos = std::stoi(f[4]);
    r.n_steps = std::stoi(f[5]);
    r.success_rate = std::strtod(f[6].c_str(), nullptr);
    r.pick_err_m = std::strtod(f[7].c_str(), nullptr);
    r.place_err_m = std::strtod(f[8].c_str(), nullptr);
    r.wall_s = std::strtod(f[9].c_str(), nullptr);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_loss_csv(const std::string& path, const std::vector<double>& epoch_loss) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_loss_csv: cannot open " + path);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < epoch_loss.size(); ++i)
    out << i << "," << fmt_double(epoch_loss[i]) << "\n";
  if (!out) throw IoError("write_loss_csv: short write to " + path);
}

EvalResult evaluate(const TaskConfig& task, const ParamSet* params,
                    const ModelConfig* model, const InferConfig& icfg,
                    int n_episodes, std::uint64_t eval_seed, const EvalOptions& opt) {
  if (n_episodes < 1) throw ConfigError("evaluate: n_episodes must be >= 1");
  if (opt.policy == EvalPolicy::model && (params == nullptr || model == nullptr))
    throw ConfigError("evaluate: model policy requires weights");

  const ActionLayout layout = pick_place_layout();
  const auto bounds = icfg.act_bounds.empty() ? default_act_bounds(layout)
                                              : icfg.act_bounds;
  const auto t0 = now();
  int successes = 0;
  double pick_err_sum = 0.0, place_err_sum = 0.0;

  for (int e = 0; e < n_episodes; ++e) {
    const std::uint64_t scene_seed = episode_seed(eval_seed, e);
    SceneSpec scene = sample_scene(task, scene_seed);
    if (opt.ood_swap) scene = swap_distractors(scene, task, scene_seed ^ 0x00dULL);

    ActionVec action;
    Rng episode_rng = Rng(icfg.seed).fork(static_cast<std::uint64_t>(e));

    if (opt.policy == EvalPolicy::oracle) {
      action = oracle_action(scene);
    } else if (opt.policy == EvalPolicy::random) {
      ActionVec a_norm;
      a_norm.layout = layout;
      a_norm.frame = ActionFrame::window_normalized;
      a_norm.values.resize(layout.dim());
      for (int i = 0; i < layout.dim(); ++i)
        a_norm.values[i] = episode_rng.uniform(bounds[i][0], bounds[i][1]);
      const CameraTransform cam = task.base_camera();
      action = unnormalize_action(a_norm, full_window(cam));
    } else {
      SceneContextProvider ctx(scene, task);
      NnEpsModel eps(*params, *model);
      const InferOutcome outcome = run_fddp(ctx, eps, layout, icfg, episode_rng);
      action = outcome.action;
      if (!opt.trace_dir.empty() && e < opt.trace_episodes)
        export_trace_ppms(ctx, outcome, icfg, opt.trace_dir, e);
    }

    if (success(scene, action, task)) ++successes;
    const ActionErrors err = action_errors(scene, action);
    pick_err_sum += err.pick_m;
    place_err_sum += err.place_m;
  }

  EvalResult res;
  res.successes = successes;
  res.episodes = n_episodes;
  res.row.experiment = opt.experiment_id;
  res.row.seed = opt.seed_label;
  res.row.mode = mode_name(icfg.mode);
  res.row.variant = variant_name(icfg.variant);
  res.row.n_demos = opt.n_demos_label;
  res.row.n_steps = icfg.n_steps;
  res.row.success_rate = static_cast<double>(successes) / n_episodes;
  res.row.pick_err_m = pick_err_sum / n_episodes;
  res.row.place_err_m = place_err_sum / n_episodes;
  res.row.wall_s = seconds_since(t0);
  return res;
}

void export_trace_ppms(const ContextProvider& ctx, const InferOutcome& outcome,
                       const InferConfig& icfg, const std::string& dir,
                       int episode_index) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("export_trace_ppms: cannot create " + dir);
  const Rgb cross{1.0f, 0.0f, 1.0f};
  const Rgb border{1.0f, 1.0f, 1.0f};
  const CameraTransform& cam = ctx.camera();

  for (std::size_t s = 0; s < outcome.chains.size(); ++s) {
    const DenoiseTrace& trace = outcome.chains[s].trace;
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
      const StepRecord& rec = trace.steps[k];
      Image img;
      double fx = rec.fixation_px.x, fy = rec.fixation_px.y;
      switch (icfg.mode) {
        case PolicyMode::baseline:
          img = ctx.full();
          break;
        case PolicyMode::mask:
          img = mask_context(ctx.full(), rec.window, ctx.background());
          draw_window_border(img, rec.window, border);
          break;
        case PolicyMode::zoom: {
          img = ctx.view(rec.window, cam.image_h, cam.image_w);
          // Fixation point in window-local pixels.
          fx = (rec.fixation_px.x - (rec.window.center.x - rec.window.half_extent.x)) *
               cam.image_w / (2.0 * rec.window.half_extent.x);
          fy = (rec.fixation_px.y - (rec.window.center.y - rec.window.half_extent.y)) *
               cam.image_h / (2.0 * rec.window.half_extent.y);
          break;
        }
      }
      draw_cross(img, fx, fy, cross);
      char name[64];
      std::snprintf(name, sizeof(name), "ep%d_sub%zu_t%zu.ppm", episode_index, s, k);
      write_ppm(img, (fs::path(dir) / name).string());
    }
  }
}

std::string cell_id(const CellSpec& cell) {
  std::ostringstream os;
  os << mode_name(cell.mode) << "-" << variant_name(cell.variant) << "-nd"
     << cell.n_demos;
  return os.str();
}

TrainResult train_cell(const ExperimentConfig& cfg, const CellSpec& cell) {
  TrainConfig tc = cfg.train;
  tc.mode = cell.mode;
  tc.variant = cell.variant;
  tc.seed = cell.seed;
  const auto demos = make_demos(cfg.task, cell.n_demos, cfg.data_seed + cell.seed);
  return train(demos, cfg.task, tc);
}

AblationKind ablation_from_name(const std::string& s) {
  if (s == "drift") return AblationKind::drift;
  if (s == "timesteps") return AblationKind::timesteps;
  if (s == "demos") return AblationKind::demos;
  if (s == "ood") return AblationKind::ood;
  throw ConfigError("unknown ablation: " + s + " (drift|timesteps|demos|ood)");
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median: empty");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

MetricsRow summarize(const std::string& id, const std::vector<MetricsRow>& rows) {
  MetricsRow s;
  s.experiment = id + ".median";
  s.seed = -1;
  s.mode = rows.front().mode;
  s.variant = rows.front().variant;
  s.n_demos = rows.front().n_demos;
  s.n_steps = rows.front().n_steps;
  std::vector<double> sr, pe, ple, ws;
  for (const auto& r : rows) {
    sr.push_back(r.success_rate);
    pe.push_back(r.pick_err_m);
    ple.push_back(r.place_err_m);
    ws.push_back(r.wall_s);
  }
  s.success_rate = median(sr);
  s.pick_err_m = median(pe);
  s.place_err_m = median(ple);
  s.wall_s = median(ws);
  return s;
}

}  // namespace

std::vector<MetricsRow> run_ablation(const ExperimentConfig& cfg, AblationKind which) {
  std::vector<MetricsRow> all;
  std::string csv_name;

  auto eval_model = [&](const TrainResult& tr, const CellSpec& cell,
                        const InferConfig& icfg, bool ood,
                        const std::string& id) {
    EvalOptions opt;
    opt.policy = EvalPolicy::model;
    opt.ood_swap = ood;
    opt.experiment_id = id;
    opt.seed_label = static_cast<long long>(cell.seed);
    opt.n_demos_label = cell.n_demos;
    InferConfig ic = icfg;
    ic.seed = cfg.infer.seed ^ (cell.seed * 0x9e37ULL + 1);
    return evaluate(cfg.task, &tr.params, &tr.model, ic, cfg.n_eval_episodes,
                    cfg.eval_seed + cell.seed, opt)
        .row;
  };

  auto run_cells = [&](const std::vector<CellSpec>& cells, bool also_ood) {
    for (const auto& base_cell : cells) {
      std::vector<MetricsRow> cell_rows, cell_rows_ood;
      for (int s = 0; s < cfg.n_seeds; ++s) {
        CellSpec cell = base_cell;
        cell.seed = static_cast<std::uint64_t>(s);
        const auto t0 = now();
        const TrainResult tr = train_cell(cfg, cell);
        const double train_s = seconds_since(t0);
        InferConfig ic = cfg.infer;
        ic.mode = cell.mode;
        ic.variant = cell.variant;
        MetricsRow row = eval_model(tr, cell, ic, false, cell_id(cell));
        row.wall_s += train_s;
        cell_rows.push_back(row);
        if (also_ood) {
          MetricsRow ood = eval_model(tr, cell, ic, true, cell_id(cell) + "-ood");
          cell_rows_ood.push_back(ood);
        }
      }
      all.insert(all.end(), cell_rows.begin(), cell_rows.end());
      all.push_back(summarize(cell_id(base_cell), cell_rows));
      if (also_ood) {
        all.insert(all.end(), cell_rows_ood.begin(), cell_rows_ood.end());
        all.push_back(summarize(cell_id(base_cell) + "-ood", cell_rows_ood));
      }
    }
  };

  switch (which) {
    case AblationKind::drift: {
      csv_name = "ablation_drift.csv";
      std::vector<CellSpec> cells;
      for (auto mode : {PolicyMode::mask, PolicyMode::zoom})
        for (auto variant : {NoiseVariant::drift, NoiseVariant::no_drift})
          cells.push_back({mode, variant, cfg.n_demos, 0});
      run_cells(cells, false);
      break;
    }
    case AblationKind::timesteps: {
      csv_name = "ablation_timesteps.csv";
      const CellSpec base{cfg.train.mode, cfg.train.variant, cfg.n_demos, 0};
      std::vector<std::vector<MetricsRow>> per_steps(4);
      const int sweep[4] = {1, 2, 5, 10};
      for (int s = 0; s < cfg.n_seeds; ++s) {
        CellSpec cell = base;
        cell.seed = static_cast<std::uint64_t>(s);
        const auto t0 = now();
        const TrainResult tr = train_cell(cfg, cell);
        const double train_s = seconds_since(t0);
        for (int i = 0; i < 4; ++i) {
          InferConfig ic = cfg.infer;
          ic.mode = cell.mode;
          ic.variant = cell.variant;
          ic.n_steps = sweep[i];
          MetricsRow row = eval_model(tr, cell, ic, false,
                                      cell_id(cell) + "-ns" + std::to_string(sweep[i]));
          if (i == 0) row.wall_s += train_s;
          per_steps[i].push_back(row);
        }
      }
      for (int i = 0; i < 4; ++i) {
        all.insert(all.end(), per_steps[i].begin(), per_steps[i].end());
        all.push_back(summarize(cell_id(base) + "-ns" + std::to_string(sweep[i]),
                                per_steps[i]));
      }
      break;
    }
    case AblationKind::demos: {
      csv_name = "ablation_demos.csv";
      std::vector<CellSpec> cells;
      for (int nd : {5, 10, 30, 100})
        for (auto mode : {PolicyMode::baseline, PolicyMode::zoom})
          cells.push_back({mode, cfg.train.variant, nd, 0});
      run_cells(cells, false);
      break;
    }
    case AblationKind::ood: {
      csv_name = "ablation_ood.csv";
      std::vector<CellSpec> cells;
      for (auto mode : {PolicyMode::baseline, PolicyMode::zoom})
        cells.push_back({mode, cfg.train.variant, cfg.n_demos, 0});
      run_cells(cells, true);
      break;
    }
  }

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("run_ablation: cannot create " + cfg.output_dir);
  write_metrics_csv((fs::path(cfg.output_dir) / csv_name).string(), all);
  return all;
}

}  // namespace c3dm
