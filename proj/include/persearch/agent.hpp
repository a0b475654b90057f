#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "persearch/encoder.hpp"
#include "persearch/env.hpp"
#include "persearch/qnet.hpp"
#include "persearch/replay.hpp"
#include "persearch/rng.hpp"
#include "persearch/scene.hpp"

namespace persearch {

// ----------------------------------------------------------------- schedule

struct TrainConfig {
  double gamma = 0.9;
  double epsilon_start = 1.0;
  double epsilon_min = 0.1;
  double epsilon_decay_per_episode = (1.0 - 0.1) / 15.0;
  int episodes_per_image = 20;
  int episodes_per_image_floor = 5;
  int epoch_decay_start = 10;  // epochs after this one shrink toward the floors
  int epochs = 25;
  int batch_size = 16;
  int max_steps = 30;
  std::uint64_t seed = 1;

  // Training internals. The learning rate is sized for the 958-D desk
  // encoding; 1e-3 with momentum 0.9 sends the Bellman loss to infinity
  // within the first image block.
  std::size_t replay_capacity = 10000;
  std::vector<int> hidden_dims = {128, 64};
  double learning_rate = 3e-4;
  double momentum = 0.9;
  int update_period = 1;  // optimize after every n-th environment step
  double alpha = kDefaultAlpha;
  double min_frac = kDefaultMinFrac;

  EnvConfig env_config() const { return {alpha, min_frac, max_steps}; }
};

// Linear within-image decay: episode k of a block starts from the epoch's
// epsilon_start and never drops below epsilon_min.
inline double epsilon_for_episode(const TrainConfig& cfg, double epoch_epsilon_start,
                                  int episode_index) {
  return std::max(cfg.epsilon_min,
                  epoch_epsilon_start -
                      episode_index * cfg.epsilon_decay_per_episode);
}

// After epoch_decay_start, epsilon_start and episodes_per_image interpolate
// linearly toward their floors, reaching them at the final epoch.
inline double epsilon_start_for_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch <= cfg.epoch_decay_start || cfg.epochs <= cfg.epoch_decay_start)
    return cfg.epsilon_start;
  const double t = static_cast<double>(epoch - cfg.epoch_decay_start) /
                   (cfg.epochs - cfg.epoch_decay_start);
  return std::max(cfg.epsilon_min,
                  cfg.epsilon_start + (cfg.epsilon_min - cfg.epsilon_start) * t);
}

inline int episodes_for_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch <= cfg.epoch_decay_start || cfg.epochs <= cfg.epoch_decay_start)
    return cfg.episodes_per_image;
  const double t = static_cast<double>(epoch - cfg.epoch_decay_start) /
                   (cfg.epochs - cfg.epoch_decay_start);
  const double v = cfg.episodes_per_image +
                   (cfg.episodes_per_image_floor - cfg.episodes_per_image) * t;
  return std::max(cfg.episodes_per_image_floor,
                  static_cast<int>(std::lround(v)));
}

// ------------------------------------------------------------------- policy

// Epsilon-greedy over the 9 Q-values: a uniform random action with probability
// epsilon, otherwise the argmax with ties broken toward the lowest index.
inline Action select_action(std::span<const double> qvalues, double epsilon,
                            Rng& rng) {
  if (qvalues.size() != static_cast<std::size_t>(kNumActions))
    throw std::invalid_argument("expected exactly 9 Q-values");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (rng.uniform() < epsilon)
    return action_from_index(static_cast<int>(rng.uniform_int(kNumActions)));
  int best = 0;
  for (int a = 1; a < kNumActions; ++a)
    if (qvalues[static_cast<std::size_t>(a)] >
        qvalues[static_cast<std::size_t>(best)])
      best = a;
  return action_from_index(best);
}

// ----------------------------------------------------------------- episodes

struct StepTrace {
  Action action = Action::kTerminate;
  double iou_after = 0.0;
  double reward = 0.0;
  BoundingBox box_after;
};

struct EpisodeRecord {
  std::string scene_id;
  bool terminated = false;  // the agent chose terminate
  double final_iou = 0.0;
  int action_count = 0;
  std::vector<StepTrace> steps;
};

namespace detail {

template <typename NetRef>
EpisodeRecord run_episode_impl(const Scene& scene, NetRef& net,
                               const StateEncoder& encoder,
                               std::span<const double> query,
                               const TrainConfig& cfg, double epsilon, Rng& rng,
                               ReplayBuffer* replay, OptimState* opt) {
  Environment env(cfg.env_config());
  EnvState state = env.reset(scene);
  std::vector<double> enc = encoder.encode(scene, state, query);

  EpisodeRecord record;
  record.scene_id = scene.id;
  while (!state.done) {
    const std::vector<double> q = net.forward(enc);
    const Action action = select_action(q, epsilon, rng);
    StepOutcome out = env.step(action);
    std::vector<double> next_enc = encoder.encode(scene, out.next_state, query);
    if constexpr (!std::is_const_v<NetRef>) {
      if (replay != nullptr) {
        replay->push({enc, action, out.reward, next_enc, out.terminal});
        if (replay->size() >= static_cast<std::size_t>(cfg.batch_size) &&
            out.next_state.step_count % cfg.update_period == 0) {
          const std::vector<Transition> batch =
              replay->sample(static_cast<std::size_t>(cfg.batch_size), rng);
          const std::vector<double> targets =
              bellman_targets(batch, net, cfg.gamma);
          update(net, *opt, batch, targets);
        }
      }
    }
    record.steps.push_back({action, out.iou_after, out.reward,
                            out.next_state.box});
    state = std::move(out.next_state);
    enc = std::move(next_enc);
  }
  record.action_count = static_cast<int>(record.steps.size());
  record.terminated = record.steps.back().action == Action::kTerminate;
  record.final_iou = record.steps.back().iou_after;
  return record;
}

}  // namespace detail

// Learning episode: every transition is pushed to the replay buffer and each
// environment step is followed by one optimizer step on a sampled batch (once
// the buffer holds a full batch).
inline EpisodeRecord run_episode(const Scene& scene, QNetwork& net,
                                 OptimState& opt, ReplayBuffer& replay,
                                 const StateEncoder& encoder,
                                 std::span<const double> query,
                                 const TrainConfig& cfg, double epsilon,
                                 Rng& rng) {
  return detail::run_episode_impl(scene, net, encoder, query, cfg, epsilon, rng,
                                  &replay, &opt);
}

// Rollout-only episode; the network is never touched.
inline EpisodeRecord run_episode(const Scene& scene, const QNetwork& net,
                                 const StateEncoder& encoder,
                                 std::span<const double> query,
                                 const TrainConfig& cfg, double epsilon,
                                 Rng& rng) {
  return detail::run_episode_impl(scene, net, encoder, query, cfg, epsilon, rng,
                                  nullptr, nullptr);
}

// ------------------------------------------------------------------ metrics

struct Metrics {
  double total_terminated = 0.0;
  std::optional<double> correctly_terminated;
  double avg_iou = 0.0;
  std::optional<double> avg_iou_terminate;
  std::optional<double> avg_iou_no_terminate;
  std::optional<double> avg_num_actions;
};

inline Metrics compute_metrics(std::span<const EpisodeRecord> records) {
  if (records.empty())
    throw std::invalid_argument("metrics need at least one episode");
  const double n = static_cast<double>(records.size());
  double terminated = 0.0, correct = 0.0;
  double iou_all = 0.0, iou_term = 0.0, iou_no_term = 0.0, actions_term = 0.0;
  for (const EpisodeRecord& r : records) {
    iou_all += r.final_iou;
    if (r.terminated) {
      terminated += 1.0;
      iou_term += r.final_iou;
      actions_term += r.action_count;
      if (r.final_iou >= 0.5) correct += 1.0;
    } else {
      iou_no_term += r.final_iou;
    }
  }
  Metrics m;
  m.total_terminated = terminated / n;
  m.avg_iou = iou_all / n;
  if (terminated > 0.0) {
    m.correctly_terminated = correct / terminated;
    m.avg_iou_terminate = iou_term / terminated;
    m.avg_num_actions = actions_term / terminated;
  }
  if (n - terminated > 0.0) m.avg_iou_no_terminate = iou_no_term / (n - terminated);
  return m;
}

// One structured-text record; absent fields print as N/A.
inline std::string format_metrics(const Metrics& m) {
  const auto field = [](std::optional<double> v) -> std::string {
    if (!v) return "N/A";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
  };
  char head[96];
  std::snprintf(head, sizeof head, "total_terminated=%.4f", m.total_terminated);
  std::string out = head;
  out += " correctly_terminated=" + field(m.correctly_terminated);
  std::snprintf(head, sizeof head, " avg_iou=%.4f", m.avg_iou);
  out += head;
  out += " avg_iou_terminate=" + field(m.avg_iou_terminate);
  out += " avg_iou_no_terminate=" + field(m.avg_iou_no_terminate);
  out += " avg_num_actions=" + field(m.avg_num_actions);
  return out;
}

// --------------------------------------------------------------- evaluation

// Greedy evaluation (epsilon = 0, no learning): one episode per scene under
// the requested description mode. Read-only on the network.
inline Metrics evaluate(const std::vector<Scene>& dataset, const QNetwork& net,
                        const TrainConfig& cfg, const StateEncoder& encoder,
                        QueryMode mode, std::uint64_t seed,
                        std::vector<EpisodeRecord>* records_out = nullptr) {
  if (dataset.empty())
    throw std::invalid_argument("evaluation needs a non-empty dataset");
  Rng rng(seed);
  std::vector<EpisodeRecord> records;
  records.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Scene& scene = dataset[i];
    const std::vector<double> query =
        make_query(scene, dataset, i, mode, encoder.cfg.d_query, rng);
    records.push_back(
        run_episode(scene, net, encoder, query, cfg, 0.0, rng));
  }
  const Metrics m = compute_metrics(records);
  if (records_out) *records_out = std::move(records);
  return m;
}

// ----------------------------------------------------------------- training

struct TrainResult {
  QNetwork net;
  OptimState opt;
  std::vector<Metrics> epoch_metrics;  // one entry per epoch, in order
  std::int64_t episodes = 0;
  std::int64_t env_steps = 0;
};

namespace detail {
inline constexpr std::uint64_t kEvalSeedTag = 0x65766131ull;
}

// Full training schedule: every epoch visits each image in dataset order and
// plays a block of episodes on it with epsilon decaying linearly inside the
// block. After each epoch the network is evaluated greedily (regular
// descriptions) on eval_set, or on the training set when none is given.
// Bit-reproducible for a fixed config and seed.
inline TrainResult train(
    const std::vector<Scene>& train_set, const TrainConfig& cfg,
    const StateEncoder& encoder, const std::vector<Scene>* eval_set = nullptr,
    const std::function<void(int, const Metrics&)>& on_epoch = {}) {
  if (train_set.empty())
    throw std::invalid_argument("training needs a non-empty dataset");
  if (cfg.batch_size < 1 || cfg.update_period < 1 || cfg.epochs < 0)
    throw std::invalid_argument("invalid training configuration");

  Rng rng(cfg.seed);
  std::vector<int> dims;
  dims.push_back(encoder.dim());
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(kNumActions);

  TrainResult result;
  result.net = QNetwork::init(dims, rng);
  result.opt.learning_rate = cfg.learning_rate;
  result.opt.momentum = cfg.momentum;
  ReplayBuffer replay(cfg.replay_capacity);

  const std::vector<Scene>& held_out = eval_set ? *eval_set : train_set;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double eps0 = epsilon_start_for_epoch(cfg, epoch);
    const int block = episodes_for_epoch(cfg, epoch);
    for (std::size_t si = 0; si < train_set.size(); ++si) {
      const Scene& scene = train_set[si];
      const std::vector<double> query = make_query(
          scene, train_set, si, QueryMode::kRegular, encoder.cfg.d_query, rng);
      for (int k = 0; k < block; ++k) {
        const double eps = epsilon_for_episode(cfg, eps0, k);
        const EpisodeRecord rec = run_episode(scene, result.net, result.opt,
                                              replay, encoder, query, cfg, eps,
                                              rng);
        ++result.episodes;
        result.env_steps += rec.action_count;
      }
    }
    const Metrics m = evaluate(
        held_out, result.net, cfg, encoder, QueryMode::kRegular,
        derive_seed(cfg.seed, detail::kEvalSeedTag + static_cast<std::uint64_t>(epoch)));
    result.epoch_metrics.push_back(m);
    if (on_epoch) on_epoch(epoch, m);
  }
  return result;
}

}  // namespace persearch
