#include "textdet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "textdet/errors.hpp"

namespace textdet {

Tensor scale_shift_forward(const Tensor& z) {
  Tensor out(z.shape());
  for (int64_t i = 0; i < z.numel(); ++i) out[i] = kScaleShiftGain * z[i] + kScaleShiftBias;
  return out;
}

namespace {

struct MapDims {
  int h, w;
};

MapDims map_dims(const LabelMaps& labels) {
  if (labels.cls.rank() != 2) throw ShapeMismatch("label maps must be rank-2");
  return {labels.cls.dim(0), labels.cls.dim(1)};
}

void check_cls_pred(const Tensor& pred, MapDims m) {
  if (pred.rank() != 2 || pred.dim(0) != m.h || pred.dim(1) != m.w) {
    throw ShapeMismatch("cls prediction shape " + pred.shape_str());
  }
}

}  // namespace

ActiveSet select_active_pixels(const Tensor& pred_cls, const LabelMaps& labels, float hard_ratio,
                               float neg_pos_ratio, int zero_positive_floor, Rng& rng) {
  MapDims m = map_dims(labels);
  check_cls_pred(pred_cls, m);
  ActiveSet out;
  out.mask = Tensor({m.h, m.w});
  int64_t n = static_cast<int64_t>(m.h) * m.w;

  std::vector<int32_t> negatives;
  negatives.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    if (labels.care[i] == 0.0f) continue;
    if (labels.cls[i] == 1.0f) {
      out.mask[i] = 1.0f;
      ++out.positives;
    } else {
      negatives.push_back(static_cast<int32_t>(i));
    }
  }

  int budget = out.positives > 0
                   ? static_cast<int>(std::lround(neg_pos_ratio * out.positives))
                   : zero_positive_floor;
  budget = std::min<int>(budget, static_cast<int>(negatives.size()));
  if (budget <= 0) return out;
  int hard = out.positives > 0 ? std::min(budget, static_cast<int>(std::lround(hard_ratio * budget)))
                               : budget;

  std::sort(negatives.begin(), negatives.end(), [&](int32_t a, int32_t b) {
    float la = std::max(0.0f, pred_cls[a]);
    float lb = std::max(0.0f, pred_cls[b]);
    if (la != lb) return la > lb;
    return a < b;
  });
  for (int i = 0; i < hard; ++i) out.mask[negatives[static_cast<size_t>(i)]] = 1.0f;

  // Uniform fill from the remaining pool (partial Fisher-Yates).
  int fill = budget - hard;
  int pool = static_cast<int>(negatives.size()) - hard;
  for (int i = 0; i < fill; ++i) {
    int j = i + rng.uniform_int(pool - i);
    std::swap(negatives[static_cast<size_t>(hard + i)], negatives[static_cast<size_t>(hard + j)]);
    out.mask[negatives[static_cast<size_t>(hard + i)]] = 1.0f;
  }
  return out;
}

HingeResult hinge_cls_loss_frozen(const Tensor& pred_cls, const LabelMaps& labels,
                                  const ActiveSet& active) {
  MapDims m = map_dims(labels);
  check_cls_pred(pred_cls, m);
  HingeResult out;
  out.grad = Tensor({m.h, m.w});
  int64_t n = static_cast<int64_t>(m.h) * m.w;
  double norm = 1.0 / (static_cast<double>(labels.down_factor) * m.h *
                       static_cast<double>(labels.down_factor) * m.w);
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (active.mask[i] == 0.0f) continue;
    float yhat = pred_cls[i];
    if (labels.cls[i] == 1.0f) {
      float e = std::max(0.0f, 1.0f - yhat);
      sum += static_cast<double>(e) * e;
      out.grad[i] = static_cast<float>(-2.0 * e * norm);
    } else {
      float e = std::max(0.0f, yhat);
      sum += static_cast<double>(e) * e;
      out.grad[i] = static_cast<float>(2.0 * e * norm);
    }
  }
  out.loss = sum * norm;
  return out;
}

HingeMined hinge_cls_loss(const Tensor& pred_cls, const LabelMaps& labels, float hard_ratio,
                          float neg_pos_ratio, int zero_positive_floor, Rng& rng) {
  HingeMined out;
  out.active =
      select_active_pixels(pred_cls, labels, hard_ratio, neg_pos_ratio, zero_positive_floor, rng);
  HingeResult r = hinge_cls_loss_frozen(pred_cls, labels, out.active);
  out.loss = r.loss;
  out.grad = std::move(r.grad);
  return out;
}

namespace {

inline double smooth_l1(double x) {
  double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

}  // namespace

LocLossResult smooth_l1_loc_loss(const Tensor& pred_offsets, const LabelMaps& labels,
                                 bool normalize) {
  MapDims m = map_dims(labels);
  if (pred_offsets.rank() != 3 || pred_offsets.dim(0) != 8 || pred_offsets.dim(1) != m.h ||
      pred_offsets.dim(2) != m.w) {
    throw ShapeMismatch("loc prediction shape " + pred_offsets.shape_str());
  }
  LocLossResult out;
  out.grad = Tensor({8, m.h, m.w});
  int64_t plane = static_cast<int64_t>(m.h) * m.w;
  int positives = 0;
  for (int64_t i = 0; i < plane; ++i) {
    if (labels.cls[i] == 1.0f) ++positives;
  }
  if (positives == 0) return out;
  double norm = normalize ? 1.0 / (8.0 * positives) : 1.0;
  double sum = 0.0;
  for (int64_t i = 0; i < plane; ++i) {
    if (labels.cls[i] != 1.0f) continue;
    const float* target = labels.loc.data() + i * 8;
    for (int ch = 0; ch < 8; ++ch) {
      double zhat = pred_offsets[ch * plane + i];
      double x = static_cast<double>(target[ch]) - zhat;
      sum += smooth_l1(x);
      out.grad[ch * plane + i] = static_cast<float>(std::clamp(zhat - target[ch], -1.0, 1.0) * norm);
    }
  }
  out.loss = sum * norm;
  return out;
}

LossOutput combined_loss_frozen(const Tensor& pred_cls, const Tensor& pred_loc_raw,
                                const LabelMaps& labels, float lambda_loc, const ActiveSet& active,
                                bool normalize_loc) {
  LossOutput out;
  HingeResult cls = hinge_cls_loss_frozen(pred_cls, labels, active);
  Tensor stretched = scale_shift_forward(pred_loc_raw);
  LocLossResult loc = smooth_l1_loc_loss(stretched, labels, normalize_loc);
  out.cls_part = cls.loss;
  out.loc_part = loc.loss;
  out.total = cls.loss + static_cast<double>(lambda_loc) * loc.loss;
  out.cls_gradient = std::move(cls.grad);
  out.loc_gradient = std::move(loc.grad);
  float chain = lambda_loc * kScaleShiftGain;
  for (int64_t i = 0; i < out.loc_gradient.numel(); ++i) out.loc_gradient[i] *= chain;
  out.active_mask = active.mask;
  out.positives = active.positives;
  return out;
}

LossOutput combined_loss(const Tensor& pred_cls, const Tensor& pred_loc_raw,
                         const LabelMaps& labels, const LossConfig& cfg, Rng& rng, int iteration) {
  ActiveSet active = select_active_pixels(pred_cls, labels, cfg.hard_negative_ratio(iteration),
                                          cfg.negative_to_positive_ratio, cfg.zero_positive_floor,
                                          rng);
  return combined_loss_frozen(pred_cls, pred_loc_raw, labels, cfg.lambda_loc(iteration), active,
                              cfg.normalize_loc);
}

}  // namespace textdet
