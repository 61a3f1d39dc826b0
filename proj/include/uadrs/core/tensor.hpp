#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <string>
#include <vector>

#include "uadrs/core/error.hpp"

namespace uadrs {

/// Keeps every tensor buffer on the same 64-byte boundary so Eigen's
/// alignment-dependent kernel dispatch (and therefore the exact floating
/// point reduction order) is identical across runs.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  T* allocate(std::size_t n) {
    const std::size_t bytes = ((n * sizeof(T) + Align - 1) / Align) * Align;
    void* p = std::aligned_alloc(Align, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

/// Dense row-major float tensor. Rank-4 [N,C,H,W] for images, rank-2 for
/// feature matrices, rank-1 for per-step schedules.
class Tensor {
 public:
  using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;
  using VecMap = Eigen::Map<Eigen::VectorXf>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXf>;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}
  Tensor(std::initializer_list<int> shape, float fill = 0.0f)
      : Tensor(std::vector<int>(shape), fill) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
  static Tensor full_like(const Tensor& t, float v) { return Tensor(t.shape_, v); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// View as a rows x cols matrix; total size must match.
  MatMap as_matrix(int64_t rows, int64_t cols) {
    check_view(rows, cols);
    return MatMap(data_.data(), rows, cols);
  }
  ConstMatMap as_matrix(int64_t rows, int64_t cols) const {
    check_view(rows, cols);
    return ConstMatMap(data_.data(), rows, cols);
  }
  VecMap as_vector() { return VecMap(data_.data(), size()); }
  ConstVecMap as_vector() const { return ConstVecMap(data_.data(), size()); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (float v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  float min() const { return data_.empty() ? 0.0f : as_vector().minCoeff(); }
  float max() const { return data_.empty() ? 0.0f : as_vector().maxCoeff(); }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static size_t checked_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= d;
    }
    return static_cast<size_t>(n);
  }
  void check_view(int64_t rows, int64_t cols) const {
    if (rows * cols != size())
      throw ShapeError("matrix view " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " does not cover tensor " +
                       shape_str());
  }

  std::vector<int> shape_;
  std::vector<float, AlignedAllocator<float>> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

}  // namespace uadrs
