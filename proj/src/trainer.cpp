#include "textdet/trainer.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "textdet/errors.hpp"
#include "textdet/kernels.hpp"

namespace textdet {

TrainResult train(NetworkModel& model, const SampleSource& source, const TrainSchedule& sched,
                  const LossConfig& loss_cfg, const std::function<void(const TrainLogRow&)>& on_log) {
  const int S = model.config().input_size;
  const int m = S / 4;
  const int B = sched.batch_size;
  if (B < 1) throw ConfigError("batch size must be >= 1");
  std::vector<ParamBlock*> params = model.params();
  Rng base(sched.seed);

  TrainResult result;
  result.min_loss = std::numeric_limits<double>::infinity();
  double initial = 0.0;
  int high_streak = 0;
  int64_t plane = static_cast<int64_t>(m) * m;

  for (int it = 0; it < sched.iterations; ++it) {
    Rng rng = base.fork(static_cast<uint64_t>(it));

    Tensor batch({B, 3, S, S});
    std::vector<LabelMaps> labels(static_cast<size_t>(B));
    for (int s = 0; s < B; ++s) {
      TrainingSample sample = source(it, s, rng);
      if (sample.tile.numel() != 3 * static_cast<int64_t>(S) * S) {
        throw ShapeMismatch("training tile must be [3,S,S]");
      }
      std::copy(sample.tile.data(), sample.tile.data() + sample.tile.numel(),
                batch.data() + static_cast<int64_t>(s) * 3 * S * S);
      labels[static_cast<size_t>(s)] = std::move(sample.labels);
    }

    NetworkOutput out = model.forward(batch, true);

    Tensor grad_cls({B, 1, m, m});
    Tensor grad_loc({B, 8, m, m});
    double total = 0.0, cls_part = 0.0, loc_part = 0.0;
    float inv_b = 1.0f / static_cast<float>(B);
    for (int s = 0; s < B; ++s) {
      Tensor pred_cls({m, m});
      std::copy(out.cls.data() + static_cast<int64_t>(s) * plane,
                out.cls.data() + static_cast<int64_t>(s + 1) * plane, pred_cls.data());
      Tensor pred_loc({8, m, m});
      std::copy(out.loc_raw.data() + static_cast<int64_t>(s) * 8 * plane,
                out.loc_raw.data() + static_cast<int64_t>(s + 1) * 8 * plane, pred_loc.data());
      LossOutput lo =
          combined_loss(pred_cls, pred_loc, labels[static_cast<size_t>(s)], loss_cfg, rng, it);
      total += lo.total;
      cls_part += lo.cls_part;
      loc_part += lo.loc_part;
      float* gc = grad_cls.data() + static_cast<int64_t>(s) * plane;
      for (int64_t i = 0; i < plane; ++i) gc[i] = lo.cls_gradient[i] * inv_b;
      float* gl = grad_loc.data() + static_cast<int64_t>(s) * 8 * plane;
      for (int64_t i = 0; i < 8 * plane; ++i) gl[i] = lo.loc_gradient[i] * inv_b;
    }
    total /= B;
    cls_part /= B;
    loc_part /= B;

    if (!std::isfinite(total)) {
      throw DivergenceDetected("loss is not finite at iteration " + std::to_string(it));
    }
    if (it == 0) initial = std::max(total, 1e-12);
    if (total > 10.0 * initial) {
      if (++high_streak >= 100) {
        throw DivergenceDetected("loss exceeded 10x its initial value for 100 iterations");
      }
    } else {
      high_streak = 0;
    }

    model.backward(grad_cls, grad_loc);
    float lr = sched.lr_at(it);
    sgd_step(params, lr, sched.momentum, sched.weight_decay);

    result.final_loss = total;
    result.min_loss = std::min(result.min_loss, total);
    if (it % sched.log_every == 0 || it + 1 == sched.iterations) {
      TrainLogRow row{it, total, cls_part, loc_part, lr};
      result.log.push_back(row);
      if (on_log) on_log(row);
    }
    if (sched.checkpoint_every > 0 && !sched.checkpoint_stem.empty() &&
        (it + 1) % sched.checkpoint_every == 0) {
      model.save(sched.checkpoint_stem);
    }
  }
  return result;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os << "iteration,total,cls,loc\n";
  for (const TrainLogRow& r : log) {
    os << r.iteration << "," << r.total << "," << r.cls << "," << r.loc << "\n";
  }
  return os.str();
}

}  // namespace textdet
