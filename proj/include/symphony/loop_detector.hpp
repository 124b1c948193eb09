#pragma once

// Rule-based loop detection: the most recent historical window of N steps
// whose (screenshot, action) pairs all match the latest N steps.

#include <optional>
#include <span>
#include <vector>

#include "symphony/actions.hpp"
#include "symphony/error.hpp"
#include "symphony/features.hpp"
#include "symphony/observation.hpp"
#include "symphony/protocol.hpp"
#include "symphony/trajectory.hpp"

namespace symphony {

struct LoopConfig {
  int window = 3;
  int phash_hamming_max = 1;
  double ssim_min = 0.99;
  double coord_tolerance_fraction = 0.05;
  double levenshtein_min = 0.9;
  int ssim_max_side = kSsimDefaultMaxSide;

  void validate() const {
    if (window < 2) fail(ErrorCode::ConfigError, "loop window must be >= 2");
    if (!(ssim_min > 0.0 && ssim_min <= 1.0)) fail(ErrorCode::ConfigError, "ssim_min must be in (0,1]");
    if (phash_hamming_max < 0 || phash_hamming_max > 64)
      fail(ErrorCode::ConfigError, "phash_hamming_max must be in [0,64]");
  }

  SimilarityThresholds action_thresholds() const { return {coord_tolerance_fraction, levenshtein_min}; }
};

struct ImageComparison {
  int hamming = 0;
  std::optional<double> ssim;  // only computed when the hash gate passes
  bool similar = false;
};

// pHash gate first, SSIM only for survivors.
inline ImageComparison compare_images(const Observation& a, const Observation& b, const LoopConfig& cfg) {
  if (a.image().width() != b.image().width() || a.image().height() != b.image().height())
    fail(ErrorCode::DimensionMismatch, "observations differ in size");
  ImageComparison c;
  c.hamming = hamming(a.phash(), b.phash());
  if (c.hamming > cfg.phash_hamming_max) return c;
  c.ssim = ssim(a.ssim_buffer(cfg.ssim_max_side), b.ssim_buffer(cfg.ssim_max_side));
  c.similar = *c.ssim >= cfg.ssim_min;
  return c;
}

inline bool image_similarity(const Observation& a, const Observation& b, const LoopConfig& cfg = {}) {
  return compare_images(a, b, cfg).similar;
}

inline std::span<const Point> resolved_points(const Step& s) {
  if (!s.grounded) return {};
  return s.grounded->coordinates;
}

struct PairDiagnostics {
  int u = 0;
  int v = 0;
  ImageComparison image;
  std::optional<bool> action_similar;  // evaluated only when images match
  bool match = false;
};

inline PairDiagnostics compare_steps(std::span<const Step> steps, int u, int v, const LoopConfig& cfg) {
  if (u < 0 || v < 0 || u >= static_cast<int>(steps.size()) || v >= static_cast<int>(steps.size()))
    fail(ErrorCode::Precondition, "step index out of range");
  PairDiagnostics d{u, v, {}, std::nullopt, false};
  const auto& a = steps[u];
  const auto& b = steps[v];
  d.image = compare_images(a.observation, b.observation, cfg);
  if (!d.image.similar) return d;
  d.action_similar = action_similarity(a.action, b.action, a.observation.geometry(), resolved_points(a),
                                       resolved_points(b), cfg.action_thresholds());
  d.match = *d.action_similar;
  return d;
}

// Joint predicate over screenshot and action at steps u and v.
inline bool joint_match(std::span<const Step> steps, int u, int v, const LoopConfig& cfg = {}) {
  return compare_steps(steps, u, v, cfg).match;
}

inline bool joint_match(const Trajectory& traj, int u, int v, const LoopConfig& cfg = {}) {
  return joint_match(std::span<const Step>(traj.steps()), u, v, cfg);
}

// Scans k from T-2N down to 0 and stops at the first (most recent) window
// that matches the last N steps. Features come from each observation's cache,
// so repeated calls compute at most one pHash and one SSIM buffer per
// observation.
inline std::optional<LoopMatch> detect_loop(std::span<const Step> steps, const LoopConfig& cfg = {}) {
  cfg.validate();
  const int t = static_cast<int>(steps.size());
  const int n = cfg.window;
  if (t < 2 * n) return std::nullopt;
  const int current = t - n;
  for (int k = t - 2 * n; k >= 0; --k) {
    bool all = true;
    for (int j = 0; j < n && all; ++j) all = joint_match(steps, k + j, current + j, cfg);
    if (all) return LoopMatch{k, current, n};
  }
  return std::nullopt;
}

inline std::optional<LoopMatch> detect_loop(const Trajectory& traj, const LoopConfig& cfg = {}) {
  return detect_loop(std::span<const Step>(traj.steps()), cfg);
}

}  // namespace symphony
