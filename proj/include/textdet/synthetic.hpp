#pragma once

#include <vector>

#include "textdet/image.hpp"
#include "textdet/labelgen.hpp"
#include "textdet/rng.hpp"

namespace textdet {

/// Scene generator: striped rotated rectangles (a text-like high-frequency
/// texture) over a Gaussian-noise background, with exact corner annotations.
/// Desk-scale stand-in for real photographs.
struct SceneConfig {
  int width = 640;
  int height = 640;
  int min_boxes = 3;
  int max_boxes = 8;
  double short_side_lo = 16.0;
  double short_side_hi = 64.0;
  double aspect_lo = 2.0;
  double aspect_hi = 8.0;
  double margin = 8.0;       // keep quads this far inside the frame
  int max_tries = 2000;      // consecutive placement rejections before failing
  // Vertices snap to this grid; keeps offset targets exactly representable in
  // float32 so decode round-trips are bit-exact.
  double quantize = 0.125;
  double noise_mean = 128.0;
  double noise_sigma = 20.0;
};

struct SyntheticScene {
  Image image;
  std::vector<Annotation> annotations;
};

/// Places non-overlapping boxes by rejection sampling; throws PlacementFailure
/// when a box cannot be placed within max_tries attempts.
SyntheticScene generate_synthetic_scene(const SceneConfig& cfg, Rng& rng);

}  // namespace textdet
