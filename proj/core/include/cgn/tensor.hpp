#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace cgn {

/// Dense row-major double tensor of rank up to 4.
///
/// Shapes follow the (N, C, H, W) layout where a leading batch axis is
/// present; rank-1 vectors and rank-0 scalars (shape {}) are also used.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& other);
  static Tensor full(std::vector<int> shape, double v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  void fill(double v);
  void zero() { fill(0.0); }
  Tensor reshaped(std::vector<int> shape) const;

  double sum() const;
  double min() const;
  double max() const;
  bool all_finite() const;

  std::string shape_str() const;

private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

/// True when shapes are equal and every element differs by at most `tol`.
bool allclose(const Tensor& a, const Tensor& b, double tol);

}  // namespace cgn
