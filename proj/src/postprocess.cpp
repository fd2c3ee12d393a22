#include "textdet/postprocess.hpp"

#include <algorithm>
#include <numeric>

#include "textdet/errors.hpp"

namespace textdet {

namespace {

std::vector<int> score_order(std::span<const DetectionCandidate> candidates) {
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return candidates[static_cast<size_t>(a)].score > candidates[static_cast<size_t>(b)].score;
  });
  return order;
}

}  // namespace

std::vector<DetectionCandidate> traditional_nms(std::span<const DetectionCandidate> candidates,
                                                const NmsConfig& cfg) {
  std::vector<DetectionCandidate> kept;
  for (int i : score_order(candidates)) {
    const DetectionCandidate& c = candidates[static_cast<size_t>(i)];
    bool suppressed = false;
    for (const DetectionCandidate& k : kept) {
      if (iou(c.quad, k.quad) >= cfg.overlap_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

DetectionCandidate merge_group(std::span<const DetectionCandidate> group,
                               NmsConfig::MergeRule rule) {
  if (group.empty()) throw ShapeMismatch("merge_group on empty group");
  if (group.size() == 1) return group[0];
  size_t best = 0;
  for (size_t i = 1; i < group.size(); ++i) {
    if (group[i].score > group[best].score) best = i;
  }
  if (rule == NmsConfig::MergeRule::KeepMax) return group[best];
  DetectionCandidate out;
  out.score = group[best].score;
  double wsum = 0.0;
  Quadrilateral acc;
  for (const DetectionCandidate& c : group) {
    Quadrilateral q = c.quad.normalized();
    for (int i = 0; i < 4; ++i) {
      acc.v[static_cast<size_t>(i)].x += c.score * q.v[static_cast<size_t>(i)].x;
      acc.v[static_cast<size_t>(i)].y += c.score * q.v[static_cast<size_t>(i)].y;
    }
    wsum += c.score;
  }
  for (int i = 0; i < 4; ++i) {
    out.quad.v[static_cast<size_t>(i)] = {acc.v[static_cast<size_t>(i)].x / wsum,
                                          acc.v[static_cast<size_t>(i)].y / wsum};
  }
  return out;
}

std::vector<DetectionCandidate> recalled_nms(std::span<const DetectionCandidate> candidates,
                                             const NmsConfig& cfg) {
  // Step 1: B_sup from B by traditional NMS.
  std::vector<DetectionCandidate> survivors = traditional_nms(candidates, cfg);
  if (survivors.empty()) return survivors;

  // Step 2: switch each survivor to the highest-score candidate in B
  // overlapping it at >= threshold. The survivor overlaps itself at IoU 1, so
  // there is always a target; ties break toward the earlier index.
  std::vector<DetectionCandidate> switched;
  switched.reserve(survivors.size());
  for (const DetectionCandidate& s : survivors) {
    const DetectionCandidate* best = nullptr;
    for (const DetectionCandidate& b : candidates) {
      if (iou(s.quad, b.quad) < cfg.overlap_threshold) continue;
      if (!best || b.score > best->score) best = &b;
    }
    switched.push_back(*best);
  }

  // Step 3: merge switched candidates by transitive IoU-closeness.
  size_t n = switched.size();
  std::vector<size_t> parent(n);
  std::iota(parent.begin(), parent.end(), size_t{0});
  auto find = [&](size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (iou(switched[i].quad, switched[j].quad) >= cfg.overlap_threshold) {
        parent[find(j)] = find(i);
      }
    }
  }
  std::vector<DetectionCandidate> out;
  std::vector<bool> done(n, false);
  for (size_t i = 0; i < n; ++i) {
    size_t root = find(i);
    if (done[root]) continue;
    done[root] = true;
    std::vector<DetectionCandidate> group;
    for (size_t j = i; j < n; ++j) {
      if (find(j) == root) group.push_back(switched[j]);
    }
    out.push_back(merge_group(group, cfg.merge_rule));
  }
  return out;
}

}  // namespace textdet
