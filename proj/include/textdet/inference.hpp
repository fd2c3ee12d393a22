#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "textdet/geometry.hpp"
#include "textdet/image.hpp"
#include "textdet/network.hpp"

namespace textdet {

/// One sliding-window placement in one scaled copy of the image.
struct TilePlan {
  double scale = 1.0;
  int image_w = 0, image_h = 0;    // original image
  int scaled_w = 0, scaled_h = 0;  // after scaling (zero-padded up to window)
  int origin_x = 0, origin_y = 0;  // window origin in the scaled image
  int window = 320;
  int index = 0;                   // evaluation/merge order
};

struct DetectionCandidate {
  Quadrilateral quad;  // original-image pixels
  double score = 0.0;
};

/// {2^-5, 2^-4, ..., 2^1}
const std::vector<double>& default_scale_set();

struct DetectConfig {
  int window = 320;
  int stride = 160;
  std::vector<double> scales = default_scale_set();
  double cls_threshold = 0.7;
  int min_scaled_side = 16;  // scales producing smaller images are skipped
  double min_quad_area = 1.0;  // decoded quads below this are dropped
};

/// Window origins 0, stride, ... with the last window clamped to the border;
/// scaled images smaller than the window get a single padded tile.
std::vector<TilePlan> plan_tiles(int image_w, int image_h, const DetectConfig& cfg);

/// Runs one [3,S,S] tile, returning (cls [1,m,m] or [m,m], loc [8,m,m]
/// post-Scale&Shift). Injectable so the decode path is testable without a
/// trained model.
using TileForward = std::function<std::pair<Tensor, Tensor>(const Tensor&)>;

TileForward model_forward(NetworkModel& model);

/// Thresholds the cls map, decodes per-pixel quads (Eq.-1 style inversion of
/// the offset encoding), and maps them back to original-image coordinates.
/// Pixels whose anchors fall in padding and degenerate quads are dropped.
std::vector<DetectionCandidate> decode_candidates(const Tensor& cls, const Tensor& loc,
                                                  const TilePlan& plan, const DetectConfig& cfg);

std::vector<DetectionCandidate> detect_tile(const TileForward& forward, const Image& scaled_image,
                                            const TilePlan& plan, const DetectConfig& cfg);

/// All tiles over all scales, concatenated in plan order; deduplication is
/// the postprocess module's job.
std::vector<DetectionCandidate> detect_image(const TileForward& forward, const Image& image,
                                             const DetectConfig& cfg);

/// One `x1,y1,...,x4,y4,score` line per candidate, coordinates with 2
/// decimals.
std::string format_candidates(std::span<const DetectionCandidate> candidates);
std::vector<DetectionCandidate> parse_candidates(std::string_view text);

}  // namespace textdet
