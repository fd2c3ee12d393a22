#include "textdet/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "textdet/errors.hpp"

namespace textdet {

namespace {

uint8_t clamp_u8(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

struct BoxStyle {
  double tone_a, tone_b;
  double stripe_period;
};

void render_box(Image& img, const Quadrilateral& q, const BoxStyle& style, Rng& rng) {
  Point2 dir = q.v[1] - q.v[0];
  double len = norm(dir);
  if (len <= 0.0) return;
  dir = dir * (1.0 / len);
  double min_x = std::min({q.v[0].x, q.v[1].x, q.v[2].x, q.v[3].x});
  double max_x = std::max({q.v[0].x, q.v[1].x, q.v[2].x, q.v[3].x});
  double min_y = std::min({q.v[0].y, q.v[1].y, q.v[2].y, q.v[3].y});
  double max_y = std::max({q.v[0].y, q.v[1].y, q.v[2].y, q.v[3].y});
  int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
  int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(max_x)));
  int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(max_y)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      Point2 pc{x + 0.5, y + 0.5};
      if (!q.contains(pc)) continue;
      double t = dot(pc - q.v[0], dir) / style.stripe_period;
      bool odd = static_cast<int64_t>(std::floor(t)) & 1;
      double tone = (odd ? style.tone_b : style.tone_a) + rng.uniform(-6.0, 6.0);
      uint8_t v = clamp_u8(tone);
      for (int c = 0; c < img.channels; ++c) img.at(x, y, c) = v;
    }
  }
}

}  // namespace

SyntheticScene generate_synthetic_scene(const SceneConfig& cfg, Rng& rng) {
  if (cfg.width < 64 || cfg.height < 64) throw ConfigError("scene must be at least 64x64");
  if (cfg.min_boxes < 0 || cfg.max_boxes < cfg.min_boxes) throw ConfigError("bad box count range");

  SyntheticScene scene;
  scene.image = Image(cfg.width, cfg.height, 3);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      uint8_t v = clamp_u8(cfg.noise_mean + cfg.noise_sigma * rng.normal());
      for (int c = 0; c < 3; ++c) scene.image.at(x, y, c) = v;
    }
  }

  int want = cfg.min_boxes + rng.uniform_int(cfg.max_boxes - cfg.min_boxes + 1);
  std::vector<BoxStyle> styles;
  int tries = 0;
  while (static_cast<int>(scene.annotations.size()) < want) {
    if (++tries > cfg.max_tries) {
      throw PlacementFailure("could not place box " +
                             std::to_string(scene.annotations.size() + 1) + " after " +
                             std::to_string(cfg.max_tries) + " attempts");
    }
    double s = rng.uniform(cfg.short_side_lo, cfg.short_side_hi);
    double l = s * rng.uniform(cfg.aspect_lo, cfg.aspect_hi);
    double theta = rng.uniform(0.0, 2.0 * M_PI);
    Point2 dir{std::cos(theta), std::sin(theta)};
    Point2 perp{-dir.y, dir.x};
    double hx = 0.5 * (l * std::abs(dir.x) + s * std::abs(perp.x));
    double hy = 0.5 * (l * std::abs(dir.y) + s * std::abs(perp.y));
    double lo_x = cfg.margin + hx, hi_x = cfg.width - cfg.margin - hx;
    double lo_y = cfg.margin + hy, hi_y = cfg.height - cfg.margin - hy;
    if (lo_x >= hi_x || lo_y >= hi_y) continue;
    Point2 c{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};

    Quadrilateral q{c - dir * (l / 2) - perp * (s / 2), c + dir * (l / 2) - perp * (s / 2),
                    c + dir * (l / 2) + perp * (s / 2), c - dir * (l / 2) + perp * (s / 2)};
    if (cfg.quantize > 0.0) {
      for (Point2& p : q.v) {
        p.x = std::round(p.x / cfg.quantize) * cfg.quantize;
        p.y = std::round(p.y / cfg.quantize) * cfg.quantize;
      }
    }
    q = q.normalized();
    if (!q.is_convex()) continue;  // quantization can fold very thin boxes

    bool overlaps = false;
    for (const Annotation& a : scene.annotations) {
      if (intersection_area(q, a.quad) > 0.0) {
        overlaps = true;
        break;
      }
    }
    if (overlaps) continue;

    tries = 0;
    Annotation ann;
    ann.quad = q;
    scene.annotations.push_back(ann);
    BoxStyle style;
    bool dark_on_light = rng.uniform() < 0.5;
    double a_tone = 20.0 + rng.uniform(0.0, 40.0);
    double b_tone = 200.0 + rng.uniform(0.0, 40.0);
    style.tone_a = dark_on_light ? a_tone : b_tone;
    style.tone_b = dark_on_light ? b_tone : a_tone;
    style.stripe_period = std::max(3.0, 0.55 * short_side(q));
    styles.push_back(style);
  }
  for (size_t i = 0; i < scene.annotations.size(); ++i) {
    render_box(scene.image, scene.annotations[i].quad, styles[i], rng);
  }
  return scene;
}

}  // namespace textdet
