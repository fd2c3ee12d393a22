#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "textdet/rng.hpp"
#include "textdet/tensor.hpp"

namespace textdet {

/// Fig-4-style contract, parameterized: four down-sampling stages (two
/// ConvUnits each, 2x max-pool after every stage), a dilated receptive-field
/// block on top, four streams fused at quarter resolution, and the two heads.
struct NetworkConfig {
  int input_size = 320;
  std::array<int, 4> stage_channels{16, 32, 64, 128};
  int fusion_channels = 64;
  int head_channels = 32;
  int kernel_size = 3;
  int deep_dilation = 4;  // dilation of the deepest stream's ConvUnits
  float bn_eps = 1e-5f;
  float bn_momentum = 0.99f;
};

struct NetworkOutput {
  Tensor cls;      // [B,1,S/4,S/4], sigmoid scores in (0,1)
  Tensor loc;      // [B,8,S/4,S/4], offsets in (-400,400)
  Tensor loc_raw;  // [B,8,S/4,S/4], the sigmoid outputs feeding Scale&Shift
};

class NetworkModel {
 public:
  NetworkModel(NetworkModel&&) noexcept;
  NetworkModel& operator=(NetworkModel&&) noexcept;
  ~NetworkModel();

  /// Xavier-uniform init everywhere except the regression head's final
  /// convolution, which starts at zero so the first forward emits loc == 0.
  /// Throws ConfigError on an invalid size or an insufficient receptive field.
  static NetworkModel build(const NetworkConfig& cfg, Rng& rng);

  /// Receptive field of the deepest stream; must exceed input_size.
  static int receptive_field(const NetworkConfig& cfg);

  /// batch must be [B,3,S,S]. Training mode uses batch statistics in the
  /// batchnorm layers and caches activations for backward.
  NetworkOutput forward(const Tensor& batch, bool training);

  /// Gradients w.r.t. the cls sigmoid output [B,1,S/4,S/4] and the raw loc
  /// sigmoid output [B,8,S/4,S/4]; accumulates into the parameter gradients.
  void backward(const Tensor& grad_cls, const Tensor& grad_loc_raw);

  std::vector<ParamBlock*> params();
  /// Learnable parameters plus batchnorm running statistics, in a fixed order
  /// that doubles as the weight-file manifest order.
  std::vector<std::pair<std::string, Tensor*>> state_entries();
  std::vector<std::pair<std::string, const Tensor*>> state_entries() const;
  int64_t parameter_count() const;
  const NetworkConfig& config() const;

  /// Checkpoint = <stem>.json (config) + <stem>.manifest + <stem>.bin.
  void save(const std::string& stem) const;
  static NetworkModel load(const std::string& stem);

 private:
  NetworkModel();
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace textdet
