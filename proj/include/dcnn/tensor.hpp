#pragma once

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"

namespace dcnn {

using Extents = std::vector<std::int64_t>;

inline std::string extents_to_string(const Extents& e) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < e.size(); ++i) os << (i ? "," : "") << e[i];
  os << ']';
  return os.str();
}

/// Dense N-d array of doubles, row-major (last axis fastest).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Extents shape, double fill = 0.0) : shape_(std::move(shape)) {
    if (shape_.empty()) throw ShapeError("tensor rank must be >= 1");
    std::int64_t n = 1;
    for (std::int64_t e : shape_) {
      if (e < 1) throw ShapeError("tensor extent must be >= 1, got " + extents_to_string(shape_));
      n *= e;
    }
    data_.assign(static_cast<std::size_t>(n), fill);
  }

  Tensor(std::initializer_list<std::int64_t> shape, double fill = 0.0)
      : Tensor(Extents(shape), fill) {}

  const Extents& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t extent(std::size_t axis) const { return shape_[axis]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // unchecked flat access
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // bounds-checked multi-index access
  double& at(const Extents& coords) { return data_[static_cast<std::size_t>(offset(coords))]; }
  double at(const Extents& coords) const { return data_[static_cast<std::size_t>(offset(coords))]; }

  std::int64_t offset(const Extents& coords) const {
    if (coords.size() != shape_.size())
      throw IndexError("coordinate rank " + std::to_string(coords.size()) +
                       " != tensor rank " + std::to_string(shape_.size()));
    std::int64_t off = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) {
      if (coords[a] < 0 || coords[a] >= shape_[a])
        throw IndexError("coordinate " + extents_to_string(coords) + " out of range for shape " +
                         extents_to_string(shape_));
      off = off * shape_[a] + coords[a];
    }
    return off;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(double v) { data_.assign(data_.size(), v); }

  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

 private:
  Extents shape_;
  std::vector<double> data_;
};

namespace detail {
template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F op, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + extents_to_string(a.shape()) +
                     " vs " + extents_to_string(b.shape()));
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
  return out;
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, [](double x, double y) { return x + y; }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, [](double x, double y) { return x - y; }, "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, [](double x, double y) { return x * y; }, "mul");
}

inline double reduce_sum(const Tensor& t) {
  double s = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) s += t[i];
  return s;
}

/// Batch/channel/rows/cols extents of one network stage.
struct Shape4 {
  std::int64_t batch = 1;
  std::int64_t channels = 1;
  std::int64_t rows = 1;  // variates M
  std::int64_t cols = 1;  // time steps K

  Extents extents() const { return {batch, channels, rows, cols}; }

  bool operator==(const Shape4&) const = default;
};

inline Shape4 shape4_of(const Tensor& t) {
  if (t.rank() != 4) throw ShapeError("expected rank-4 tensor, got " + extents_to_string(t.shape()));
  return Shape4{t.extent(0), t.extent(1), t.extent(2), t.extent(3)};
}

}  // namespace dcnn
