#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dyslab {

#ifdef DYSLAB_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of `real`. The last dimension is contiguous.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = 0.0f);
  Tensor(Shape shape, std::vector<real> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<real>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  real* data() noexcept { return data_.data(); }
  const real* data() const noexcept { return data_.data(); }
  std::span<real> values() noexcept { return data_; }
  std::span<const real> values() const noexcept { return data_; }
  std::vector<real>& storage() noexcept { return data_; }
  const std::vector<real>& storage() const noexcept { return data_; }

  real& operator[](std::size_t i) noexcept { return data_[i]; }
  real operator[](std::size_t i) const noexcept { return data_[i]; }

  // rank-2 and rank-3 accessors; no bounds checking beyond the vector's own.
  real& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  real at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  real& at(std::size_t ch, std::size_t r, std::size_t c) {
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }
  real at(std::size_t ch, std::size_t r, std::size_t c) const {
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(real v);
  real min() const;
  real max() const;
  double sum() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<real> data_;
};

/// Throws ShapeMismatch with `context` if shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

}  // namespace dyslab
