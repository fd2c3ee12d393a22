#pragma once

#include <functional>
#include <string>
#include <vector>

#include "textdet/labelgen.hpp"
#include "textdet/loss.hpp"
#include "textdet/network.hpp"

namespace textdet {

/// SGD schedule with the multistep shape: the base rate decays by lr_decay at
/// each step fraction of the run.
struct TrainSchedule {
  int iterations = 10000;
  int batch_size = 4;
  float base_lr = 0.01f;
  std::vector<float> lr_step_fractions{0.3f, 0.7f};
  float lr_decay = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 4e-4f;
  uint64_t seed = 7;
  int log_every = 50;
  int checkpoint_every = 0;      // 0 = no periodic checkpoints
  std::string checkpoint_stem;

  float lr_at(int iteration) const {
    float lr = base_lr;
    for (float f : lr_step_fractions) {
      if (static_cast<float>(iteration) >= f * static_cast<float>(iterations)) lr *= lr_decay;
    }
    return lr;
  }
};

struct TrainingSample {
  Tensor tile;  // [3,S,S]
  LabelMaps labels;
};

/// Yields the sample for (iteration, batch slot). The generator is the
/// iteration-seeded stream, so sampling and mining are reproducible.
using SampleSource = std::function<TrainingSample(int iteration, int slot, Rng& rng)>;

struct TrainLogRow {
  int iteration;
  double total, cls, loc;
  float lr;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double final_loss = 0.0;
  double min_loss = 0.0;
};

/// Runs sample -> forward -> combined_loss -> backward -> sgd_step for the
/// whole schedule. Throws DivergenceDetected on NaN loss or on 100 consecutive
/// iterations above 10x the initial loss.
TrainResult train(NetworkModel& model, const SampleSource& source, const TrainSchedule& sched,
                  const LossConfig& loss_cfg,
                  const std::function<void(const TrainLogRow&)>& on_log = {});

std::string train_log_csv(const std::vector<TrainLogRow>& log);

}  // namespace textdet
