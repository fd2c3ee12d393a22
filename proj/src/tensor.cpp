#include "textdet/tensor.hpp"

#include <cmath>
#include <sstream>

#include "textdet/errors.hpp"

namespace textdet {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeMismatch("negative dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

namespace {

int64_t flat_offset(const std::vector<int>& shape, std::initializer_list<int> idx,
                    const std::string& shape_str) {
  if (idx.size() != shape.size()) {
    throw ShapeMismatch("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                        std::to_string(shape.size()));
  }
  int64_t off = 0;
  int i = 0;
  for (int v : idx) {
    if (v < 0 || v >= shape[static_cast<size_t>(i)]) {
      throw ShapeMismatch("index out of bounds in " + shape_str);
    }
    off = off * shape[static_cast<size_t>(i)] + v;
    ++i;
  }
  return off;
}

}  // namespace

float& Tensor::at(std::initializer_list<int> idx) {
  return data_[static_cast<size_t>(flat_offset(shape_, idx, shape_str()))];
}

float Tensor::at(std::initializer_list<int> idx) const {
  return data_[static_cast<size_t>(flat_offset(shape_, idx, shape_str()))];
}

void Tensor::fill(float v) { data_.assign(data_.size(), v); }

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

}  // namespace textdet
