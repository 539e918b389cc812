#include "reid/tensor.hpp"

#include <cmath>
#include <sstream>

namespace reid {

int shape_size(const std::vector<int>& shape) {
  long long n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  if (n > (1LL << 31)) throw ShapeError("shape too large: " + shape_to_string(shape));
  return static_cast<int>(n);
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != static_cast<int>(data_.size()))
    throw ShapeError("data size " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.size(); ++i) t[i] = v;
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(size()));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

}  // namespace reid
