#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace textdet {

/// Dense row-major float tensor. Small fixed layer set, no autograd; backward
/// kernels live in kernels.hpp and layer state in the network module.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, float fill);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// Checked multi-index access; convenience for tests and label maps, not for
  /// inner loops.
  float& at(std::initializer_list<int> idx);
  float at(std::initializer_list<int> idx) const;

  void fill(float v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

/// Learnable tensor with its gradient and SGD momentum buffer.
struct ParamBlock {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor momentum;

  ParamBlock() = default;
  ParamBlock(std::string n, std::vector<int> shape)
      : name(std::move(n)), value(shape), grad(shape), momentum(shape) {}

  void zero_grad() { grad.fill(0.0f); }
};

}  // namespace textdet
