#pragma once

#include "textdet/labelgen.hpp"
#include "textdet/rng.hpp"
#include "textdet/tensor.hpp"

namespace textdet {

/// The affine stretch applied to the regression head's sigmoid outputs:
/// zhat = 800*z - 400, mapping (0,1) onto the (-400, 400) offset range.
inline constexpr float kScaleShiftGain = 800.0f;
inline constexpr float kScaleShiftBias = -400.0f;

Tensor scale_shift_forward(const Tensor& z);

struct LossConfig {
  float lambda_loc_warm = 0.01f;   // while the classifier is still learning
  float lambda_loc_main = 0.5f;
  int lambda_switch_iter = 5000;
  float hard_ratio_start = 0.2f;
  float hard_ratio_end = 0.7f;
  int hard_ratio_switch_iter = 3000;
  float negative_to_positive_ratio = 3.0f;
  int zero_positive_floor = 64;    // active negatives on tiles with no text
  bool normalize_loc = true;       // divide L_loc by (positives * 8); false = literal sum

  float lambda_loc(int iteration) const {
    return iteration < lambda_switch_iter ? lambda_loc_warm : lambda_loc_main;
  }
  float hard_negative_ratio(int iteration) const {
    return iteration < hard_ratio_switch_iter ? hard_ratio_start : hard_ratio_end;
  }
};

/// Pixels participating in L_cls after class balancing and mining.
struct ActiveSet {
  Tensor mask;  // [m,m] in {0,1}
  int positives = 0;
};

/// All care positives are active. Care negatives get a budget of
/// ratio * positives (zero_positive_floor when the tile has no positives),
/// filled with the top-loss fraction hard_ratio and uniform random picks from
/// the remainder. Deterministic given the generator state.
ActiveSet select_active_pixels(const Tensor& pred_cls, const LabelMaps& labels, float hard_ratio,
                               float neg_pos_ratio, int zero_positive_floor, Rng& rng);

struct HingeResult {
  double loss = 0.0;
  Tensor grad;  // [m,m], already includes the 1/S^2 normalizer
};
/// Squared hinge on the active pixels: (max(0, 1-yhat))^2 for positives,
/// (max(0, yhat))^2 for negatives, summed and scaled by 1/S^2 with S the
/// input tile side (the literal normalizer, not the map pixel count).
HingeResult hinge_cls_loss_frozen(const Tensor& pred_cls, const LabelMaps& labels,
                                  const ActiveSet& active);

struct HingeMined {
  double loss = 0.0;
  Tensor grad;
  ActiveSet active;
};
HingeMined hinge_cls_loss(const Tensor& pred_cls, const LabelMaps& labels, float hard_ratio,
                          float neg_pos_ratio, int zero_positive_floor, Rng& rng);

struct LocLossResult {
  double loss = 0.0;
  Tensor grad;  // [8,m,m] w.r.t. the post-Scale&Shift offsets
};
/// Smooth L1 over the 8 offset channels of positive pixels, optionally
/// normalized by (positives * 8).
LocLossResult smooth_l1_loc_loss(const Tensor& pred_offsets, const LabelMaps& labels,
                                 bool normalize);

struct LossOutput {
  double total = 0.0;
  double cls_part = 0.0;
  double loc_part = 0.0;      // total = cls_part + lambda_loc * loc_part
  Tensor cls_gradient;        // [m,m]   d total / d pred_cls
  Tensor loc_gradient;        // [8,m,m] d total / d pred_loc_raw (sigmoid outputs)
  Tensor active_mask;         // [m,m]
  int positives = 0;
};

/// pred_cls [m,m] and pred_loc_raw [8,m,m] are the network's sigmoid outputs;
/// Scale&Shift is applied internally and its constant-800 jacobian chained
/// into loc_gradient.
LossOutput combined_loss_frozen(const Tensor& pred_cls, const Tensor& pred_loc_raw,
                                const LabelMaps& labels, float lambda_loc, const ActiveSet& active,
                                bool normalize_loc);

LossOutput combined_loss(const Tensor& pred_cls, const Tensor& pred_loc_raw,
                         const LabelMaps& labels, const LossConfig& cfg, Rng& rng, int iteration);

}  // namespace textdet
