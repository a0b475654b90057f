// Command-line front end: synthetic dataset generation, DQN training, metric
// evaluation, and per-step trajectory rendering.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "persearch/agent.hpp"
#include "persearch/encoder.hpp"
#include "persearch/env.hpp"
#include "persearch/oracle.hpp"
#include "persearch/ppm.hpp"
#include "persearch/qnet.hpp"
#include "persearch/scenegen.hpp"

namespace fs = std::filesystem;
using namespace persearch;

namespace {

struct GenOpts {
  std::uint64_t seed = 0;
  int count = 0;
  std::string out;
  int width = 128;
  int height = 128;
  int min_figures = 1;
  int max_figures = 4;
};

struct TrainOpts {
  std::string dataset;
  std::string eval_dataset;
  std::string out;
  std::string features;
  TrainConfig cfg;
  int grid = 16;
  int d_query = 100;
  bool quiet = false;
};

struct EvalOpts {
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::string features;
  std::string mode = "regular";
  std::uint64_t seed = 1;
  int grid = 16;
  int d_query = 100;
  TrainConfig cfg;
};

struct RenderOpts {
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::string features;
  std::string scene_id;
  std::string mode = "regular";
  std::uint64_t seed = 1;
  int grid = 16;
  int d_query = 100;
  TrainConfig cfg;
};

void add_encoder_flags(CLI::App* cmd, int& grid, int& d_query,
                       std::string& features) {
  cmd->add_option("--grid", grid, "Region pooling grid (D_img = grid^2 * 3)");
  cmd->add_option("--d-query", d_query, "Query vector length");
  cmd->add_option("--features", features,
                  "Precomputed region feature file (replaces the built-in encoder)");
}

void add_rollout_flags(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--max-steps", cfg.max_steps, "Episode step limit");
  cmd->add_option("--alpha", cfg.alpha, "Action magnitude, fraction of box size");
  cmd->add_option("--min-frac", cfg.min_frac,
                  "Minimum box size, fraction of image size");
}

StateEncoder build_encoder(int grid, int d_query, const std::string& features_path,
                           std::optional<PrecomputedFeatures>& storage) {
  StateEncoder enc;
  enc.cfg.region_grid = grid;
  enc.cfg.d_img = grid * grid * 3;
  enc.cfg.d_query = d_query;
  if (!features_path.empty()) {
    storage = PrecomputedFeatures::load(features_path);
    enc.cfg.d_img = storage->d_img();
    enc.features = &*storage;
  }
  return enc;
}

std::string metric_cell(const std::optional<double>& v) {
  if (!v) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

// Per-epoch metric table: one row per metric, one column per epoch.
void write_epoch_table(const fs::path& path, const std::vector<Metrics>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "metric";
  for (std::size_t e = 1; e <= history.size(); ++e) out << '\t' << e;
  out << '\n';
  const auto row = [&](const char* name, auto getter) {
    out << name;
    for (const Metrics& m : history) out << '\t' << getter(m);
    out << '\n';
  };
  row("total_terminated",
      [](const Metrics& m) { return metric_cell(m.total_terminated); });
  row("correctly_terminated",
      [](const Metrics& m) { return metric_cell(m.correctly_terminated); });
  row("avg_iou", [](const Metrics& m) { return metric_cell(m.avg_iou); });
  row("avg_iou_terminate",
      [](const Metrics& m) { return metric_cell(m.avg_iou_terminate); });
  row("avg_iou_no_terminate",
      [](const Metrics& m) { return metric_cell(m.avg_iou_no_terminate); });
  row("avg_num_actions",
      [](const Metrics& m) { return metric_cell(m.avg_num_actions); });
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void draw_box_outline(Image& img, const BoundingBox& box) {
  const int x0 = std::clamp(static_cast<int>(std::lround(box.x_min)), 0, img.width - 1);
  const int x1 = std::clamp(static_cast<int>(std::lround(box.x_max)) - 1, 0, img.width - 1);
  const int y0 = std::clamp(static_cast<int>(std::lround(box.y_min)), 0, img.height - 1);
  const int y1 = std::clamp(static_cast<int>(std::lround(box.y_max)) - 1, 0, img.height - 1);
  const auto mark = [&](int x, int y) {
    img.at(x, y, 0) = 0.0f;
    img.at(x, y, 1) = 1.0f;
    img.at(x, y, 2) = 0.0f;
  };
  for (int x = x0; x <= x1; ++x) {
    mark(x, y0);
    mark(x, y1);
  }
  for (int y = y0; y <= y1; ++y) {
    mark(x0, y);
    mark(x1, y);
  }
}

int run_gen(const GenOpts& o) {
  SceneGenParams params;
  params.extent = {o.width, o.height};
  params.min_figures = o.min_figures;
  params.max_figures = o.max_figures;
  const std::vector<Scene> scenes = generate_dataset(o.seed, o.count, params);
  save_dataset(scenes, o.out);
  std::cout << "wrote " << scenes.size() << " scenes to " << o.out << "\n";
  return 0;
}

int run_train(const TrainOpts& o) {
  const std::vector<Scene> train_set = load_dataset(o.dataset);
  std::vector<Scene> eval_set;
  if (!o.eval_dataset.empty()) eval_set = load_dataset(o.eval_dataset);

  std::optional<PrecomputedFeatures> feats;
  const StateEncoder encoder = build_encoder(o.grid, o.d_query, o.features, feats);

  fs::create_directories(o.out);
  const auto on_epoch = [&](int epoch, const Metrics& m) {
    if (!o.quiet)
      std::cout << "epoch " << epoch << ": " << format_metrics(m) << std::endl;
  };
  const TrainResult result =
      train(train_set, o.cfg, encoder,
            o.eval_dataset.empty() ? nullptr : &eval_set, on_epoch);

  save_checkpoint(result.net, result.opt, fs::path(o.out) / "checkpoint.qnet");
  write_epoch_table(fs::path(o.out) / "epoch_metrics.tsv", result.epoch_metrics);
  std::cout << "checkpoint and epoch metrics written to " << o.out << "\n";
  return 0;
}

int run_eval(const EvalOpts& o) {
  const std::vector<Scene> dataset = load_dataset(o.dataset);
  std::optional<PrecomputedFeatures> feats;
  const StateEncoder encoder = build_encoder(o.grid, o.d_query, o.features, feats);
  const auto [net, opt] = load_checkpoint(o.checkpoint);
  const Metrics m = evaluate(dataset, net, o.cfg, encoder,
                             query_mode_from_name(o.mode), o.seed);
  const std::string line = format_metrics(m);

  fs::create_directories(o.out);
  const fs::path log_path = fs::path(o.out) / "results.log";
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw std::runtime_error("cannot append to " + log_path.string());
  log << line << '\n';
  std::cout << line << "\n";
  return 0;
}

int run_render(const RenderOpts& o) {
  const std::vector<Scene> dataset = load_dataset(o.dataset);
  if (dataset.empty()) throw std::runtime_error("dataset is empty");
  std::size_t index = 0;
  if (!o.scene_id.empty()) {
    bool found = false;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset[i].id == o.scene_id) {
        index = i;
        found = true;
        break;
      }
    if (!found)
      throw std::runtime_error("scene id not found in dataset: " + o.scene_id);
  }

  std::optional<PrecomputedFeatures> feats;
  const StateEncoder encoder = build_encoder(o.grid, o.d_query, o.features, feats);
  const auto [net, opt] = load_checkpoint(o.checkpoint);

  const Scene& scene = dataset[index];
  Rng rng(o.seed);
  const std::vector<double> query =
      make_query(scene, dataset, index, query_mode_from_name(o.mode),
                 encoder.cfg.d_query, rng);
  const EpisodeRecord record =
      run_episode(scene, net, encoder, query, o.cfg, 0.0, rng);

  fs::create_directories(o.out);
  const auto frame_path = [&](int i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03d.ppm", i);
    return fs::path(o.out) / name;
  };
  Image frame = scene.image;
  draw_box_outline(frame, full_image_box(scene.extent));
  write_ppm(frame_path(0), frame);
  std::ofstream trace(fs::path(o.out) / "trace.log");
  if (!trace) throw std::runtime_error("cannot write trace log in " + o.out);
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    const StepTrace& st = record.steps[i];
    frame = scene.image;
    draw_box_outline(frame, st.box_after);
    write_ppm(frame_path(static_cast<int>(i) + 1), frame);
    trace << format_trace_line(static_cast<int>(i) + 1, st.action, st.iou_after,
                               st.reward)
          << '\n';
  }
  std::cout << "scene " << scene.id << ": " << record.steps.size()
            << " actions, final IoU " << record.final_iou << ", frames in "
            << o.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DQN person localization on synthetic scenes"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Config file: key = value lines under a [subcommand] section; "
                 "flags given on the command line win");

  GenOpts gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  gen_cmd->add_option("--seed", gen.seed, "Generation seed")->required();
  gen_cmd->add_option("--count", gen.count, "Number of scenes")->required();
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--width", gen.width, "Image width");
  gen_cmd->add_option("--height", gen.height, "Image height");
  gen_cmd->add_option("--min-figures", gen.min_figures, "Minimum figures per scene");
  gen_cmd->add_option("--max-figures", gen.max_figures, "Maximum figures per scene");

  TrainOpts tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a Q-network");
  train_cmd->add_option("--dataset", tr.dataset, "Training dataset directory")
      ->required();
  train_cmd->add_option("--eval-dataset", tr.eval_dataset,
                        "Held-out dataset for per-epoch metrics");
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--seed", tr.cfg.seed, "Training seed")->required();
  train_cmd->add_option("--epochs", tr.cfg.epochs, "Training epochs");
  train_cmd->add_option("--episodes-per-image", tr.cfg.episodes_per_image,
                        "Episodes per image per epoch");
  train_cmd->add_option("--episodes-floor", tr.cfg.episodes_per_image_floor,
                        "Episodes per image after full decay");
  train_cmd->add_option("--epoch-decay-start", tr.cfg.epoch_decay_start,
                        "Epoch after which the schedule decays");
  train_cmd->add_option("--batch-size", tr.cfg.batch_size, "Replay batch size");
  train_cmd->add_option("--gamma", tr.cfg.gamma, "Discount factor");
  train_cmd->add_option("--epsilon-start", tr.cfg.epsilon_start,
                        "Initial exploration rate");
  train_cmd->add_option("--epsilon-min", tr.cfg.epsilon_min,
                        "Exploration rate floor");
  train_cmd->add_option("--epsilon-decay", tr.cfg.epsilon_decay_per_episode,
                        "Per-episode exploration decay");
  train_cmd->add_option("--replay-capacity", tr.cfg.replay_capacity,
                        "Replay buffer capacity");
  train_cmd->add_option("--hidden", tr.cfg.hidden_dims, "Hidden layer sizes")
      ->delimiter(',');
  train_cmd->add_option("--lr", tr.cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--momentum", tr.cfg.momentum, "SGD momentum");
  train_cmd->add_option("--update-period", tr.cfg.update_period,
                        "Environment steps per optimizer step");
  train_cmd->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress");
  add_rollout_flags(train_cmd, tr.cfg);
  add_encoder_flags(train_cmd, tr.grid, tr.d_query, tr.features);

  EvalOpts ev;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--out", ev.out, "Output directory (results.log)")
      ->required();
  eval_cmd->add_option("--mode", ev.mode, "Description mode")
      ->check(CLI::IsMember({"regular", "random", "none"}));
  eval_cmd->add_option("--seed", ev.seed, "Seed for the random description mode");
  add_rollout_flags(eval_cmd, ev.cfg);
  add_encoder_flags(eval_cmd, ev.grid, ev.d_query, ev.features);

  RenderOpts rd;
  CLI::App* render_cmd = app.add_subcommand(
      "render", "Replay one greedy episode and write per-step frames");
  render_cmd->add_option("--dataset", rd.dataset, "Dataset directory")->required();
  render_cmd->add_option("--checkpoint", rd.checkpoint, "Checkpoint file")
      ->required();
  render_cmd->add_option("--out", rd.out, "Output directory")->required();
  render_cmd->add_option("--scene", rd.scene_id,
                         "Scene id (defaults to the first scene)");
  render_cmd->add_option("--mode", rd.mode, "Description mode")
      ->check(CLI::IsMember({"regular", "random", "none"}));
  render_cmd->add_option("--seed", rd.seed, "Seed for the random description mode");
  add_rollout_flags(render_cmd, rd.cfg);
  add_encoder_flags(render_cmd, rd.grid, rd.d_query, rd.features);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) return run_gen(gen);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (render_cmd->parsed()) return run_render(rd);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
