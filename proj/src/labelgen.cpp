#include "textdet/labelgen.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "textdet/errors.hpp"

namespace textdet {

namespace {

enum class AnnClass { Ignore, PositiveEligible, NotCare };

struct AnnInfo {
  const Annotation* ann;
  AnnClass cls;
  double band;  // r * short_side for positive-eligible quads
  double min_x, max_x, min_y, max_y;
};

AnnInfo classify(const Annotation& a, const LabelGenOptions& opt) {
  AnnInfo info{&a, AnnClass::Ignore, 0.0, 0, 0, 0, 0};
  info.min_x = std::min({a.quad.v[0].x, a.quad.v[1].x, a.quad.v[2].x, a.quad.v[3].x});
  info.max_x = std::max({a.quad.v[0].x, a.quad.v[1].x, a.quad.v[2].x, a.quad.v[3].x});
  info.min_y = std::min({a.quad.v[0].y, a.quad.v[1].y, a.quad.v[2].y, a.quad.v[3].y});
  info.max_y = std::max({a.quad.v[0].y, a.quad.v[1].y, a.quad.v[2].y, a.quad.v[3].y});
  if (a.is_dont_care || (a.clipped && opt.dont_care_when_clipped)) {
    info.cls = AnnClass::NotCare;
    return info;
  }
  double s = short_side(a.quad);
  if (opt.gate.positive(s)) {
    info.cls = AnnClass::PositiveEligible;
    info.band = opt.center_band_ratio * s;
  } else if (opt.gate.transition(s)) {
    info.cls = AnnClass::NotCare;
  }
  return info;
}

// Largest |offset| any in-band anchor of this annotation would produce.
double max_positive_offset(const AnnInfo& info, int map_w, int map_h, int d) {
  double worst = 0.0;
  int w0 = std::max(0, static_cast<int>(std::floor(info.min_x / d)));
  int w1 = std::min(map_w - 1, static_cast<int>(std::ceil(info.max_x / d)));
  int h0 = std::max(0, static_cast<int>(std::floor(info.min_y / d)));
  int h1 = std::min(map_h - 1, static_cast<int>(std::ceil(info.max_y / d)));
  for (int h = h0; h <= h1; ++h) {
    for (int w = w0; w <= w1; ++w) {
      Point2 anchor{static_cast<double>(d * w), static_cast<double>(d * h)};
      if (!info.ann->quad.contains(anchor)) continue;
      if (centerline_distance(anchor, info.ann->quad) > info.band) continue;
      for (const Point2& v : info.ann->quad.v) {
        worst = std::max({worst, std::abs(v.x - anchor.x), std::abs(v.y - anchor.y)});
      }
    }
  }
  return worst;
}

}  // namespace

LabelMaps make_label_maps(int tile_size, std::span<const Annotation> annotations, int down_factor,
                          const LabelGenOptions& opt) {
  return make_label_maps(tile_size, tile_size, annotations, down_factor, opt);
}

LabelMaps make_label_maps(int tile_w, int tile_h, std::span<const Annotation> annotations,
                          int down_factor, const LabelGenOptions& opt) {
  if (down_factor < 1 || tile_w % down_factor != 0 || tile_h % down_factor != 0) {
    throw ShapeMismatch("tile size must be divisible by the down factor");
  }
  int mw = tile_w / down_factor;
  int mh = tile_h / down_factor;
  LabelMaps maps;
  maps.down_factor = down_factor;
  maps.cls = Tensor({mh, mw});
  maps.loc = Tensor({mh, mw, 8});
  maps.care = Tensor::full({mh, mw}, 1.0f);

  std::vector<AnnInfo> infos;
  infos.reserve(annotations.size());
  for (const Annotation& a : annotations) infos.push_back(classify(a, opt));

  for (AnnInfo& info : infos) {
    if (info.cls != AnnClass::PositiveEligible) continue;
    if (max_positive_offset(info, mw, mh, down_factor) >= opt.max_offset) {
      if (opt.strict) {
        throw TargetOutOfRange("annotation offsets reach " +
                               std::to_string(opt.max_offset) + " px");
      }
      std::clog << "textdet: annotation offsets exceed the regression range, treating as"
                   " NOT-CARE\n";
      info.cls = AnnClass::NotCare;
      info.band = 0.0;
    }
  }

  for (int h = 0; h < mh; ++h) {
    for (int w = 0; w < mw; ++w) {
      Point2 anchor{static_cast<double>(down_factor * w), static_cast<double>(down_factor * h)};
      const AnnInfo* best = nullptr;
      double best_dist = std::numeric_limits<double>::infinity();
      bool not_care = false;
      for (const AnnInfo& info : infos) {
        if (info.cls == AnnClass::Ignore) continue;
        if (anchor.x < info.min_x || anchor.x > info.max_x || anchor.y < info.min_y ||
            anchor.y > info.max_y) {
          continue;
        }
        if (!info.ann->quad.contains(anchor)) continue;
        if (info.cls == AnnClass::NotCare) {
          not_care = true;
          continue;
        }
        double dist = centerline_distance(anchor, info.ann->quad);
        if (dist <= info.band) {
          if (dist < best_dist) {
            best_dist = dist;
            best = &info;
          }
        } else {
          // Inside a positive-eligible quad but outside the center band: the
          // transition ring around positives.
          not_care = true;
        }
      }
      if (best) {
        maps.cls.at({h, w}) = 1.0f;
        float* row = maps.loc.data() + (static_cast<int64_t>(h) * mw + w) * 8;
        for (int n = 0; n < 4; ++n) {
          row[2 * n] = static_cast<float>(best->ann->quad.v[static_cast<size_t>(n)].x - anchor.x);
          row[2 * n + 1] =
              static_cast<float>(best->ann->quad.v[static_cast<size_t>(n)].y - anchor.y);
        }
      } else if (not_care) {
        maps.care.at({h, w}) = 0.0f;
      }
    }
  }
  return maps;
}

Quadrilateral decode_quad(std::span<const float, 8> loc_row, int w, int h, int down_factor) {
  Quadrilateral q;
  for (int n = 0; n < 4; ++n) {
    q.v[static_cast<size_t>(n)] = {static_cast<double>(loc_row[static_cast<size_t>(2 * n)]) +
                                       static_cast<double>(down_factor) * w,
                                   static_cast<double>(loc_row[static_cast<size_t>(2 * n + 1)]) +
                                       static_cast<double>(down_factor) * h};
  }
  return q;
}

TrainingTile make_training_tile(const Image& image, std::span<const Annotation> annotations,
                                int tile, double scale, Rotation rot, int crop_x, int crop_y) {
  int sw = std::max(1, static_cast<int>(std::lround(image.width * scale)));
  int sh = std::max(1, static_cast<int>(std::lround(image.height * scale)));
  Image scaled = resize(image, sw, sh);
  Image rotated = rotate_image(scaled, rot);

  TrainingTile out;
  out.scale = scale;
  out.rotation = rot;
  out.crop_origin = {static_cast<double>(crop_x), static_cast<double>(crop_y)};
  out.image = crop_pad(rotated, crop_x, crop_y, tile, tile);

  // Per-axis effective scale keeps annotations aligned with the resized
  // raster when width*scale is not integral.
  double esx = static_cast<double>(sw) / image.width;
  double esy = static_cast<double>(sh) / image.height;
  for (const Annotation& a : annotations) {
    Annotation t = a;
    for (int i = 0; i < 4; ++i) {
      Point2 p{a.quad.v[static_cast<size_t>(i)].x * esx, a.quad.v[static_cast<size_t>(i)].y * esy};
      t.quad.v[static_cast<size_t>(i)] = transform_point(p, 1.0, rot, sw, sh, out.crop_origin);
    }
    t.quad = t.quad.normalized();
    double min_x = std::min({t.quad.v[0].x, t.quad.v[1].x, t.quad.v[2].x, t.quad.v[3].x});
    double max_x = std::max({t.quad.v[0].x, t.quad.v[1].x, t.quad.v[2].x, t.quad.v[3].x});
    double min_y = std::min({t.quad.v[0].y, t.quad.v[1].y, t.quad.v[2].y, t.quad.v[3].y});
    double max_y = std::max({t.quad.v[0].y, t.quad.v[1].y, t.quad.v[2].y, t.quad.v[3].y});
    if (max_x <= 0.0 || max_y <= 0.0 || min_x >= tile || min_y >= tile) continue;
    t.clipped = a.clipped || min_x < 0.0 || min_y < 0.0 || max_x > tile || max_y > tile;
    out.annotations.push_back(t);
  }
  return out;
}

TrainingTile sample_training_tile(const Image& image, std::span<const Annotation> annotations,
                                  const TileConfig& cfg, Rng& rng) {
  if (cfg.scales.empty()) throw ConfigError("empty training scale set");
  double scale = cfg.scales[static_cast<size_t>(rng.uniform_int(static_cast<int>(cfg.scales.size())))];
  int sw = std::max(1, static_cast<int>(std::lround(image.width * scale)));
  int sh = std::max(1, static_cast<int>(std::lround(image.height * scale)));
  Rotation rot = static_cast<Rotation>(rng.uniform_int(4));
  bool swap = rot == Rotation::Quarter || rot == Rotation::ThreeQuarter;
  int rw = swap ? sh : sw, rh = swap ? sw : sh;
  int cx = rw > cfg.tile ? rng.uniform_int(rw - cfg.tile + 1) : 0;
  int cy = rh > cfg.tile ? rng.uniform_int(rh - cfg.tile + 1) : 0;
  return make_training_tile(image, annotations, cfg.tile, scale, rot, cx, cy);
}

}  // namespace textdet
