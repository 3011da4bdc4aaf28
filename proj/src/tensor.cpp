#include "tallkit/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace tallkit {

namespace {
std::atomic<std::size_t> g_current_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};

void track_alloc(std::size_t bytes) {
  const std::size_t cur = g_current_bytes.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak_bytes.load();
  while (cur > peak && !g_peak_bytes.compare_exchange_weak(peak, cur)) {
  }
}

void track_free(std::size_t bytes) { g_current_bytes.fetch_sub(bytes); }
}  // namespace

std::size_t ArenaStats::current_bytes() { return g_current_bytes.load(); }
std::size_t ArenaStats::peak_bytes() { return g_peak_bytes.load(); }
void ArenaStats::reset_peak() { g_peak_bytes.store(g_current_bytes.load()); }

struct Tensor::Storage {
  explicit Storage(std::size_t n) : n_bytes(n * sizeof(float)) {
    data = new float[n];
    track_alloc(n_bytes);
  }
  ~Storage() {
    delete[] data;
    track_free(n_bytes);
  }
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;
  float* data;
  std::size_t n_bytes;
};

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  size_ = 1;
  for (int d : shape_) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    size_ *= static_cast<std::size_t>(d);
  }
  storage_ = std::make_shared<Storage>(size_);
  std::memset(storage_->data, 0, size_ * sizeof(float));
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, float v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(float v) { return full({1}, v); }

Tensor Tensor::from(std::vector<int> shape, std::initializer_list<float> vals) {
  Tensor t(std::move(shape));
  if (t.size() != vals.size())
    throw std::invalid_argument("initializer size does not match shape");
  std::copy(vals.begin(), vals.end(), t.data());
  return t;
}

float* Tensor::data() { return storage_->data; }
const float* Tensor::data() const { return storage_->data; }

float Tensor::item() const {
  if (size_ != 1) throw std::logic_error("item() on non-scalar tensor");
  return storage_->data[0];
}

Tensor Tensor::clone() const {
  Tensor t(shape_);
  std::memcpy(t.data(), data(), size_ * sizeof(float));
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  if (n != size_) throw std::invalid_argument("reshape changes element count");
  Tensor t;
  t.storage_ = storage_;
  t.shape_ = std::move(shape);
  t.size_ = size_;
  return t;
}

bool Tensor::all_finite() const {
  const float* p = data();
  for (std::size_t i = 0; i < size_; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

void Tensor::fill(float v) { std::fill(data(), data() + size_, v); }

}  // namespace tallkit
