#pragma once

#include <stdexcept>
#include <vector>

#include "persearch/env.hpp"
#include "persearch/geometry.hpp"
#include "persearch/scene.hpp"

namespace persearch {

// Learning-free reference policies. Both read the ground truth directly; they
// exist to validate the environment, not to act as agents.

struct OracleResult {
  std::vector<Action> actions;  // includes the final terminate
  std::vector<double> ious;     // IoU after each action
  bool reached = false;         // final IoU >= 0.5
  int steps = 0;                // == actions.size()
};

// Greedy IoU ascent from the full-image box: take the strictly best-improving
// geometric action until none improves or the step budget (including the
// final terminate) is exhausted, then terminate.
inline OracleResult greedy_rollout(const Scene& scene, const EnvConfig& cfg = {}) {
  require_valid(scene.extent);
  require_valid(scene.ground_truth);
  BoundingBox box = full_image_box(scene.extent);
  double cur = iou(box, scene.ground_truth);

  OracleResult result;
  while (static_cast<int>(result.actions.size()) < cfg.max_steps - 1) {
    double best_iou = cur;
    Action best_action = Action::kTerminate;
    BoundingBox best_box = box;
    for (Action a : kAllActions) {
      if (a == Action::kTerminate) continue;
      const BoundingBox candidate =
          apply_action(box, a, scene.extent, cfg.alpha, cfg.min_frac);
      const double v = iou(candidate, scene.ground_truth);
      if (v > best_iou) {
        best_iou = v;
        best_action = a;
        best_box = candidate;
      }
    }
    if (best_action == Action::kTerminate) break;  // no strict improvement
    box = best_box;
    cur = best_iou;
    result.actions.push_back(best_action);
    result.ious.push_back(cur);
  }
  result.actions.push_back(Action::kTerminate);
  result.ious.push_back(cur);
  result.reached = cur >= 0.5;
  result.steps = static_cast<int>(result.actions.size());
  return result;
}

inline constexpr int kMaxExhaustiveHorizon = 6;

namespace detail {
inline void exhaustive_search(const Scene& scene, const EnvConfig& cfg,
                              const BoundingBox& box, int depth_left,
                              double& best) {
  const double v = iou(box, scene.ground_truth);
  if (v > best) best = v;
  if (depth_left == 0) return;
  for (Action a : kAllActions) {
    if (a == Action::kTerminate) continue;
    exhaustive_search(scene, cfg,
                      apply_action(box, a, scene.extent, cfg.alpha, cfg.min_frac),
                      depth_left - 1, best);
  }
}
}  // namespace detail

// Exact maximum IoU reachable with at most `horizon` geometric actions
// (8^horizon sequences; horizon is capped to keep the search bounded).
inline double exhaustive_best(const Scene& scene, int horizon,
                              const EnvConfig& cfg = {}) {
  if (horizon < 0 || horizon > kMaxExhaustiveHorizon)
    throw std::invalid_argument("exhaustive horizon must lie in [0, " +
                                std::to_string(kMaxExhaustiveHorizon) + "]");
  require_valid(scene.extent);
  require_valid(scene.ground_truth);
  double best = 0.0;
  detail::exhaustive_search(scene, cfg, full_image_box(scene.extent), horizon,
                            best);
  return best;
}

}  // namespace persearch
