#include "textdet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "textdet/errors.hpp"
#include "textdet/labelgen.hpp"

namespace textdet {

const std::vector<double>& default_scale_set() {
  static const std::vector<double> scales{0.03125, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0};
  return scales;
}

namespace {

std::vector<int> window_origins(int extent, int window, int stride) {
  if (extent <= window) return {0};
  std::vector<int> out;
  for (int x = 0; x + window < extent; x += stride) out.push_back(x);
  int last = extent - window;
  if (out.empty() || out.back() != last) out.push_back(last);
  return out;
}

}  // namespace

std::vector<TilePlan> plan_tiles(int image_w, int image_h, const DetectConfig& cfg) {
  if (image_w < 1 || image_h < 1) throw ShapeMismatch("image dimensions must be >= 1");
  std::vector<TilePlan> plans;
  int index = 0;
  for (double scale : cfg.scales) {
    int sw = std::max(1, static_cast<int>(std::lround(image_w * scale)));
    int sh = std::max(1, static_cast<int>(std::lround(image_h * scale)));
    if (std::min(sw, sh) < cfg.min_scaled_side) continue;
    for (int oy : window_origins(sh, cfg.window, cfg.stride)) {
      for (int ox : window_origins(sw, cfg.window, cfg.stride)) {
        TilePlan p;
        p.scale = scale;
        p.image_w = image_w;
        p.image_h = image_h;
        p.scaled_w = sw;
        p.scaled_h = sh;
        p.origin_x = ox;
        p.origin_y = oy;
        p.window = cfg.window;
        p.index = index++;
        plans.push_back(p);
      }
    }
  }
  return plans;
}

TileForward model_forward(NetworkModel& model) {
  return [&model](const Tensor& tile) {
    Tensor batch({1, tile.dim(0), tile.dim(1), tile.dim(2)});
    std::copy(tile.data(), tile.data() + tile.numel(), batch.data());
    NetworkOutput out = model.forward(batch, false);
    int m = out.cls.dim(2);
    Tensor cls({m, m});
    std::copy(out.cls.data(), out.cls.data() + cls.numel(), cls.data());
    Tensor loc({8, m, m});
    std::copy(out.loc.data(), out.loc.data() + loc.numel(), loc.data());
    return std::make_pair(std::move(cls), std::move(loc));
  };
}

std::vector<DetectionCandidate> decode_candidates(const Tensor& cls, const Tensor& loc,
                                                  const TilePlan& plan, const DetectConfig& cfg) {
  const Tensor& c = cls;
  int mh, mw;
  if (c.rank() == 2) {
    mh = c.dim(0);
    mw = c.dim(1);
  } else if (c.rank() == 3 && c.dim(0) == 1) {
    mh = c.dim(1);
    mw = c.dim(2);
  } else {
    throw ShapeMismatch("cls map shape " + c.shape_str());
  }
  if (loc.rank() != 3 || loc.dim(0) != 8 || loc.dim(1) != mh || loc.dim(2) != mw) {
    throw ShapeMismatch("loc map shape " + loc.shape_str());
  }
  int64_t plane = static_cast<int64_t>(mh) * mw;
  // Anchors inside right/bottom zero padding carry no image evidence.
  int valid_w = std::min(plan.window, plan.scaled_w - plan.origin_x);
  int valid_h = std::min(plan.window, plan.scaled_h - plan.origin_y);
  double inv_sx = static_cast<double>(plan.image_w) / plan.scaled_w;
  double inv_sy = static_cast<double>(plan.image_h) / plan.scaled_h;

  std::vector<DetectionCandidate> out;
  const float* cd = c.data();
  for (int h = 0; h < mh; ++h) {
    for (int w = 0; w < mw; ++w) {
      float score = cd[static_cast<int64_t>(h) * mw + w];
      if (score <= cfg.cls_threshold) continue;
      if (4 * w >= valid_w || 4 * h >= valid_h) continue;
      float row[8];
      for (int ch = 0; ch < 8; ++ch) {
        row[ch] = loc[ch * plane + static_cast<int64_t>(h) * mw + w];
      }
      Quadrilateral tile_quad = decode_quad(std::span<const float, 8>(row, 8), w, h, 4);
      if (polygon_area(tile_quad) < cfg.min_quad_area) continue;
      DetectionCandidate cand;
      for (int i = 0; i < 4; ++i) {
        cand.quad.v[static_cast<size_t>(i)] = {
            (tile_quad.v[static_cast<size_t>(i)].x + plan.origin_x) * inv_sx,
            (tile_quad.v[static_cast<size_t>(i)].y + plan.origin_y) * inv_sy};
      }
      cand.score = score;
      out.push_back(cand);
    }
  }
  return out;
}

std::vector<DetectionCandidate> detect_tile(const TileForward& forward, const Image& scaled_image,
                                            const TilePlan& plan, const DetectConfig& cfg) {
  Image tile = crop_pad(scaled_image, plan.origin_x, plan.origin_y, plan.window, plan.window);
  auto [cls, loc] = forward(image_to_tensor(tile));
  return decode_candidates(cls, loc, plan, cfg);
}

std::vector<DetectionCandidate> detect_image(const TileForward& forward, const Image& image,
                                             const DetectConfig& cfg) {
  std::vector<TilePlan> plans = plan_tiles(image.width, image.height, cfg);
  std::vector<DetectionCandidate> out;
  double current_scale = -1.0;
  Image scaled;
  for (const TilePlan& plan : plans) {
    if (plan.scale != current_scale) {
      scaled = resize(image, plan.scaled_w, plan.scaled_h);
      current_scale = plan.scale;
    }
    std::vector<DetectionCandidate> tile_cands = detect_tile(forward, scaled, plan, cfg);
    out.insert(out.end(), tile_cands.begin(), tile_cands.end());
  }
  return out;
}

std::string format_candidates(std::span<const DetectionCandidate> candidates) {
  std::string out;
  char buf[256];
  for (const DetectionCandidate& c : candidates) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,%.2f,%.2f,%.2f,%.2f,%.2f,%.4f\n", c.quad.v[0].x,
                  c.quad.v[0].y, c.quad.v[1].x, c.quad.v[1].y, c.quad.v[2].x, c.quad.v[2].y,
                  c.quad.v[3].x, c.quad.v[3].y, c.score);
    out += buf;
  }
  return out;
}

std::vector<DetectionCandidate> parse_candidates(std::string_view text) {
  std::vector<DetectionCandidate> out;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double v[9];
    for (int i = 0; i < 9; ++i) {
      if (!(ls >> v[i])) throw ParseError(lineno, "expected 8 coordinates and a score");
    }
    double extra;
    if (ls >> extra) throw ParseError(lineno, "trailing fields");
    DetectionCandidate c;
    for (int i = 0; i < 4; ++i) c.quad.v[static_cast<size_t>(i)] = {v[2 * i], v[2 * i + 1]};
    c.score = v[8];
    out.push_back(c);
  }
  return out;
}

}  // namespace textdet
