#pragma once

#include <span>
#include <vector>

#include "textdet/geometry.hpp"
#include "textdet/image.hpp"
#include "textdet/rng.hpp"
#include "textdet/tensor.hpp"

namespace textdet {

struct Annotation {
  Quadrilateral quad;          // tile/input-image pixels
  bool is_dont_care = false;   // ICDAR "###" transcription
  bool clipped = false;        // quad was cut by a crop boundary
};

/// Short-side gates for training: positives in [pos_lo, pos_hi], a NOT-CARE
/// transition band out to [care_lo, care_hi], plain negative beyond.
struct SizeGate {
  double pos_lo = 16.0;
  double pos_hi = 64.0;
  double care_lo = 32.0 * 0.3535533905932738;   // 32 * 2^-1.5
  double care_hi = 32.0 * 2.8284271247461903;   // 32 * 2^1.5

  bool positive(double s) const { return s >= pos_lo && s <= pos_hi; }
  bool transition(double s) const {
    return (s >= care_lo && s < pos_lo) || (s > pos_hi && s <= care_hi);
  }
};

struct LabelMaps {
  Tensor cls;   // [S/d, S/d] in {0,1}
  Tensor loc;   // [S/d, S/d, 8] vertex offsets in input-image pixels
  Tensor care;  // [S/d, S/d] in {0,1}; 0 marks NOT-CARE pixels
  int down_factor = 4;
};

struct LabelGenOptions {
  SizeGate gate;
  double center_band_ratio = 0.2;  // r: positive band half-width / short side
  double max_offset = 400.0;       // codomain bound of the offset targets
  bool strict = false;             // strict: offset overflow throws TargetOutOfRange
  bool dont_care_when_clipped = false;
};

/// Builds the classification / regression / care targets for one tile.
/// A map pixel (w,h) anchors at input point (d*w, d*h); it is positive for the
/// annotation with the smallest center-line distance among those whose short
/// side passes the gate, that contain the anchor, and whose center-line
/// distance is within r * short_side. In lenient mode an annotation whose
/// positive offsets would leave (-max_offset, max_offset) is demoted to a
/// NOT-CARE region.
LabelMaps make_label_maps(int tile_size, std::span<const Annotation> annotations,
                          int down_factor = 4, const LabelGenOptions& opt = {});

/// Rectangular variant for whole-image label dumps; maps are [h/d, w/d].
LabelMaps make_label_maps(int tile_w, int tile_h, std::span<const Annotation> annotations,
                          int down_factor, const LabelGenOptions& opt);

/// Inverse of the offset encoding: vertex n = (loc[2n] + d*w, loc[2n+1] + d*h).
Quadrilateral decode_quad(std::span<const float, 8> loc_row, int w, int h, int down_factor = 4);

struct TileConfig {
  int tile = 320;
  std::vector<double> scales{0.5, 1.0, 2.0};  // training scale jitter
};

struct TrainingTile {
  Image image;
  std::vector<Annotation> annotations;
  double scale = 1.0;
  Rotation rotation = Rotation::None;
  Point2 crop_origin;
};

/// Deterministic core of tile extraction: scale -> right-angle rotation ->
/// crop at (crop_x, crop_y), zero-padded when the transformed image is smaller
/// than the tile. Annotations are mapped through the same transform; quads cut
/// by the crop get their clipped flag set, quads fully outside are dropped.
TrainingTile make_training_tile(const Image& image, std::span<const Annotation> annotations,
                                int tile, double scale, Rotation rot, int crop_x, int crop_y);

/// Random scale from the config set, random rotation, random crop.
TrainingTile sample_training_tile(const Image& image, std::span<const Annotation> annotations,
                                  const TileConfig& cfg, Rng& rng);

}  // namespace textdet
