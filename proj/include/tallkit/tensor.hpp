#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <vector>

namespace tallkit {

// Byte accounting for tensor storage. current/peak are process-wide and
// drive the profiler's allocator statistics.
struct ArenaStats {
  static std::size_t current_bytes();
  static std::size_t peak_bytes();
  static void reset_peak();
};

// Dense row-major float32 tensor. Value-semantic handle over shared
// storage; shapes up to rank 5 are used in practice.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-initialized

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, float v);
  static Tensor scalar(float v);
  static Tensor from(std::vector<int> shape, std::initializer_list<float> vals);

  float* data();
  const float* data() const;
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return size_; }
  bool defined() const { return storage_ != nullptr; }

  float item() const;  // requires size() == 1

  Tensor clone() const;
  // Same storage, new shape (element count must match).
  Tensor reshaped(std::vector<int> shape) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(float v);

 private:
  struct Storage;
  std::shared_ptr<Storage> storage_;
  std::vector<int> shape_;
  std::size_t size_ = 0;
};

}  // namespace tallkit
