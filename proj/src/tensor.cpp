#include "dyslab/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "dyslab/error.hpp"

namespace dyslab {

std::size_t shape_size(const Shape& shape) noexcept {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, real fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw Error(ErrorCode::ShapeMismatch, "tensor data size " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorCode::ShapeMismatch, "ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

real Tensor::min() const {
  if (data_.empty()) throw Error(ErrorCode::Empty, "min of empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

real Tensor::max() const {
  if (data_.empty()) throw Error(ErrorCode::Empty, "max of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(context) + ": " + shape_to_string(a.shape()) +
                                              " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace dyslab
