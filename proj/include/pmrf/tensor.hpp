#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pmrf/error.hpp"

namespace pmrf {

// ---------------------------------------------------------------------------
// Tensor: a dense row-major array of doubles with an explicit shape.
// Rank 1..3 covers everything in this project (vectors, matrices, H*W*C
// images).  All extents must be positive; the flat size is the product.
// ---------------------------------------------------------------------------

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw ShapeError("Tensor",
                       "data size " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Multi-index accessors for the common ranks; bounds are the caller's
  // responsibility (hot paths), shape/rank are checked.
  double& at(std::size_t i, std::size_t j) {
    check_rank(2, "at(i,j)");
    return data_[i * shape_[1] + j];
  }
  double at(std::size_t i, std::size_t j) const {
    check_rank(2, "at(i,j)");
    return data_[i * shape_[1] + j];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    check_rank(3, "at(i,j,k)");
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    check_rank(3, "at(i,j,k)");
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Tensor reshaped(std::vector<std::size_t> new_shape) const {
    if (checked_size(new_shape) != data_.size()) {
      throw ShapeError("Tensor::reshaped",
                       "new shape " + shape_string(new_shape) +
                           " does not preserve size " +
                           std::to_string(data_.size()));
    }
    return Tensor(std::move(new_shape), data_);
  }

  Tensor& operator+=(const Tensor& other) {
    check_same_shape(other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& other) {
    check_same_shape(other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  static std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << ", ";
      os << shape[i];
    }
    os << "]";
    return os.str();
  }

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shape) {
    if (shape.empty()) {
      throw ShapeError("Tensor", "shape must have at least one extent");
    }
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) {
        throw ShapeError("Tensor",
                         "extents must be positive, got " + shape_string(shape));
      }
      n *= e;
    }
    return n;
  }

  void check_rank(std::size_t r, const char* what) const {
    if (shape_.size() != r) {
      throw ShapeError(std::string("Tensor::") + what,
                       "requires rank " + std::to_string(r) + ", tensor is " +
                           shape_string(shape_));
    }
  }

  void check_same_shape(const Tensor& other, const char* what) const {
    if (!same_shape(other)) {
      throw ShapeError(std::string("Tensor::") + what,
                       "shape " + shape_string(shape_) + " vs " +
                           shape_string(other.shape_));
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Counter-based randomness.
//
// Every random quantity is produced by a pure function of (seed, stream,
// counter), so any part of a run can be replayed independently of the order
// in which other parts consume randomness.  Streams are derived from a root
// key by child() calls; distinct paths give statistically independent
// sequences.  The generator is the splitmix64 finalizer applied to an
// affine counter walk, which passes standard statistical batteries.
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  // Derive an independent child stream by index or by label.  The +1 offsets
  // keep child(0) distinct from the parent itself.
  RngKey child(std::uint64_t index) const {
    return {seed, detail::mix64(stream + (index + 1) * detail::kGolden)};
  }
  RngKey child(std::string_view label) const {
    return {seed, detail::mix64(stream ^ detail::fnv1a64(label))};
  }

  bool operator==(const RngKey&) const = default;
};

// Sequential view over one key's counter axis.  next_* calls advance the
// counter; two streams built from the same key replay identically.
class RandomStream {
 public:
  explicit RandomStream(RngKey key)
      : base_(detail::mix64(key.seed ^ detail::mix64(key.stream + detail::kGolden))) {}

  std::uint64_t next_u64() {
    return detail::mix64(base_ + (++counter_) * detail::kGolden);
  }

  // Uniform on [0,1) with 53 random bits.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0,1]; used where log() must not see zero.
  double next_uniform_positive() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_uniform_positive();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer on [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw ValueError("RandomStream::next_below", "n must be > 0");
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t v = next_u64();
    while (v > limit) v = next_u64();
    return v % n;
  }

 private:
  std::uint64_t base_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Tensor sample_standard_normal(const RngKey& key,
                                     std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  RandomStream rng(key);
  for (double& v : t.data()) v = rng.next_normal();
  return t;
}

// Deterministic Fisher-Yates permutation of 0..n-1 under the given key.
inline std::vector<std::size_t> random_permutation(std::size_t n,
                                                   const RngKey& key) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  RandomStream rng(key);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace pmrf
