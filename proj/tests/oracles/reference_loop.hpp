#pragma once

// Brute-force loop oracle. Evaluates the joint predicate for every candidate
// start k and every offset j from raw pixels, with no caches and no early
// exit, then takes the largest qualifying k.

#include <optional>
#include <span>

#include "symphony/actions.hpp"
#include "symphony/features.hpp"
#include "symphony/protocol.hpp"
#include "symphony/trajectory.hpp"

namespace symphony::oracle {

struct LoopParams {
  int window = 3;
  int hamming_max = 1;
  double ssim_min = 0.99;
  double tolerance = 0.05;
  double lev_min = 0.9;
};

inline bool fresh_image_match(const Image& a, const Image& b, const LoopParams& p) {
  if (hamming(perceptual_hash(a), perceptual_hash(b)) > p.hamming_max) return false;
  return ssim(a, b) >= p.ssim_min;
}

inline bool fresh_joint(const Step& a, const Step& b, const LoopParams& p) {
  const bool img = fresh_image_match(a.observation.image(), b.observation.image(), p);
  std::span<const Point> ra, rb;
  if (a.grounded) ra = a.grounded->coordinates;
  if (b.grounded) rb = b.grounded->coordinates;
  const bool act = action_similarity(a.action, b.action, a.observation.image().geometry(), ra, rb,
                                     {p.tolerance, p.lev_min});
  return img && act;
}

inline std::optional<LoopMatch> detect_loop(std::span<const Step> steps, const LoopParams& p) {
  const int t = static_cast<int>(steps.size());
  const int n = p.window;
  std::optional<LoopMatch> best;
  for (int k = 0; k + 2 * n <= t; ++k) {
    int matches = 0;
    for (int j = 0; j < n; ++j)
      if (fresh_joint(steps[k + j], steps[t - n + j], p)) ++matches;
    if (matches == n) best = LoopMatch{k, t - n, n};
  }
  return best;
}

}  // namespace symphony::oracle
