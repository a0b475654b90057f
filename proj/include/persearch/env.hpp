#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "persearch/geometry.hpp"
#include "persearch/scene.hpp"

namespace persearch {

inline constexpr int kHistoryLen = 10;

struct EnvConfig {
  double alpha = kDefaultAlpha;
  double min_frac = kDefaultMinFrac;
  int max_steps = 30;
};

struct EnvState {
  std::string scene_id;
  BoundingBox box;
  std::vector<Action> history;  // most recent first, length <= kHistoryLen
  int step_count = 0;
  bool done = false;
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  bool terminal = false;
  double iou_after = 0.0;
};

// Reward for one transition. Non-terminate actions earn the sign of the IoU
// change; terminate earns +4 when the box overlaps the ground truth with
// IoU >= 0.5 and -2 otherwise.
inline double compute_reward(double iou_before, double iou_after, Action action) {
  if (!(iou_before >= 0.0 && iou_before <= 1.0 && iou_after >= 0.0 &&
        iou_after <= 1.0))
    throw std::invalid_argument("IoU values must lie in [0, 1]");
  if (action == Action::kTerminate) return iou_after >= 0.5 ? 4.0 : -2.0;
  if (iou_after > iou_before) return 1.0;
  if (iou_after < iou_before) return -1.0;
  return 0.0;
}

// One line of the episode trace log: "step action_name iou reward".
inline std::string format_trace_line(int step, Action action, double iou_value,
                                     double reward) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d %s %.4f %d", step, action_name(action),
                iou_value, static_cast<int>(reward));
  return buf;
}

// The person-search episode. One instance serves one episode at a time; the
// ground truth stays internal and reaches the agent only through rewards.
class Environment {
 public:
  explicit Environment(EnvConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.max_steps < 1)
      throw std::invalid_argument("max_steps must be positive");
  }

  const EnvConfig& config() const { return cfg_; }
  const EnvState& state() const { return state_; }
  const Scene& scene() const {
    if (!scene_) throw std::logic_error("environment has no scene; call reset");
    return *scene_;
  }

  // Starts an episode on `scene` with the box covering the full image. The
  // scene must outlive the episode.
  EnvState reset(const Scene& scene) {
    require_valid(scene.extent);
    require_valid(scene.ground_truth);
    if (!box_inside(scene.ground_truth, scene.extent))
      throw std::invalid_argument("scene " + scene.id +
                                  ": ground truth lies outside the image");
    scene_ = &scene;
    state_ = EnvState{};
    state_.scene_id = scene.id;
    state_.box = full_image_box(scene.extent);
    return state_;
  }

  StepOutcome step(Action action) {
    if (!scene_) throw std::logic_error("step before reset");
    if (state_.done) throw std::logic_error("step on a finished episode");

    const double iou_before = iou(state_.box, scene_->ground_truth);
    const BoundingBox next_box =
        action == Action::kTerminate
            ? state_.box
            : apply_action(state_.box, action, scene_->extent, cfg_.alpha,
                           cfg_.min_frac);
    const double iou_after = iou(next_box, scene_->ground_truth);

    state_.box = next_box;
    state_.history.insert(state_.history.begin(), action);
    if (static_cast<int>(state_.history.size()) > kHistoryLen)
      state_.history.resize(kHistoryLen);
    ++state_.step_count;

    const bool terminal =
        action == Action::kTerminate || state_.step_count >= cfg_.max_steps;
    state_.done = terminal;

    StepOutcome out;
    out.next_state = state_;
    out.reward = compute_reward(iou_before, iou_after, action);
    out.terminal = terminal;
    out.iou_after = iou_after;
    return out;
  }

 private:
  EnvConfig cfg_;
  const Scene* scene_ = nullptr;
  EnvState state_;
};

}  // namespace persearch
