#pragma once

#include <span>
#include <vector>

#include "textdet/inference.hpp"

namespace textdet {

struct NmsConfig {
  double overlap_threshold = 0.5;
  enum class MergeRule { WeightedAverage, KeepMax };
  MergeRule merge_rule = MergeRule::WeightedAverage;
};

/// Greedy score-descending suppression: a candidate survives iff its IoU with
/// every already-kept candidate is below the threshold. Ties in score break
/// toward the earlier index.
std::vector<DetectionCandidate> traditional_nms(std::span<const DetectionCandidate> candidates,
                                                const NmsConfig& cfg);

/// Score-weighted vertex mean (vertices matched by index after
/// clockwise-from-top-left normalization); score = group max.
DetectionCandidate merge_group(std::span<const DetectionCandidate> group,
                               NmsConfig::MergeRule rule = NmsConfig::MergeRule::WeightedAverage);

/// Three steps: (1) traditional NMS; (2) switch each survivor to the
/// highest-score original candidate overlapping it at or above the threshold
/// (the survivor itself qualifies, so the set is never empty); (3) merge the
/// switched set by transitive IoU-closeness.
std::vector<DetectionCandidate> recalled_nms(std::span<const DetectionCandidate> candidates,
                                             const NmsConfig& cfg);

}  // namespace textdet
