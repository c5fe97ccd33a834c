#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "flowguide/core/errors.hpp"

namespace flowguide {

using Index = Eigen::Index;
using Dims = std::vector<Index>;

inline std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor of arbitrary rank, stored in an Eigen array so that
/// element-wise math can be written as Eigen expressions on `array()`.
///
/// Sequences use the layout [N, C, H, W]; single frames and flow fields use
/// [C, H, W]. The last two axes of any tensor can be viewed as a row-major
/// Eigen plane through `plane(...)`.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<Plane>;
  using ConstPlaneMap = Eigen::Map<const Plane>;

  Tensor() = default;

  explicit Tensor(Dims dims, Scalar fill = Scalar(0)) : dims_(std::move(dims)) {
    data_ = Array::Constant(checked_size(dims_), fill);
  }

  Tensor(Dims dims, Array data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (checked_size(dims_) != data_.size()) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match dims " + dims_to_string(dims_));
    }
  }

  const Dims& dims() const { return dims_; }
  Index dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const { return dims_.size(); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  template <typename... Idx>
  Scalar& operator()(Idx... idx) {
    return data_[offset(idx...)];
  }
  template <typename... Idx>
  Scalar operator()(Idx... idx) const {
    return data_[offset(idx...)];
  }

  /// Row-major offset of the given leading indices (trailing axes zero).
  template <typename... Idx>
  Index offset(Idx... idx) const {
    const std::array<Index, sizeof...(Idx)> ids{static_cast<Index>(idx)...};
    Index off = 0;
    for (std::size_t a = 0; a < dims_.size(); ++a) {
      off = off * dims_[a] + (a < sizeof...(Idx) ? ids[a] : 0);
    }
    return off;
  }

  /// View of the trailing two axes at the given leading indices.
  template <typename... Idx>
  PlaneMap plane(Idx... leading) {
    return PlaneMap(data_.data() + offset(leading...), rows(), cols());
  }
  template <typename... Idx>
  ConstPlaneMap plane(Idx... leading) const {
    return ConstPlaneMap(data_.data() + offset(leading...), rows(), cols());
  }

  Index rows() const { return dims_.size() >= 2 ? dims_[dims_.size() - 2] : 1; }
  Index cols() const { return dims_.empty() ? 0 : dims_.back(); }

  /// Copy of entry `i` along the first axis.
  Tensor slice(Index i) const {
    Dims sub(dims_.begin() + 1, dims_.end());
    const Index n = stride0();
    return Tensor(sub, Array(data_.segment(i * n, n)));
  }

  void set_slice(Index i, const Tensor& t) {
    const Index n = stride0();
    if (t.size() != n) throw ShapeError("set_slice: size mismatch");
    data_.segment(i * n, n) = t.array();
  }

  Index stride0() const { return dims_.empty() ? 0 : data_.size() / dims_[0]; }

  Tensor reshaped(Dims dims) const { return Tensor(std::move(dims), data_); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(dims_, data_.template cast<Other>().eval());
  }

  template <typename Other>
  bool same_shape(const Tensor<Other>& other) const {
    return dims_ == other.dims();
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  static Index checked_size(const Dims& dims) {
    if (dims.empty()) throw ShapeError("tensor dims must be non-empty");
    Index n = 1;
    for (Index d : dims) {
      if (d <= 0) throw ShapeError("tensor dims must be positive, got " + dims_to_string(dims));
      n *= d;
    }
    return n;
  }

  Dims dims_;
  Array data_;
};

template <typename A, typename B>
void require_same_shape(const Tensor<A>& a, const Tensor<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + dims_to_string(a.dims()) +
                     " vs " + dims_to_string(b.dims()));
  }
}

inline void require_rank(std::size_t rank, std::size_t expected, const char* what) {
  if (rank != expected) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(expected) +
                     ", got " + std::to_string(rank));
  }
}

/// Sum of |a_i - b_i|, accumulated in double.
template <typename Scalar>
double l1_total(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "l1_total");
  return (a.array().template cast<double>() - b.array().template cast<double>()).abs().sum();
}

/// Stack rank-(r) tensors of identical shape into a rank-(r+1) tensor.
template <typename Scalar>
Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& items) {
  if (items.empty()) throw ShapeError("stack: no items");
  Dims dims = items.front().dims();
  dims.insert(dims.begin(), static_cast<Index>(items.size()));
  Tensor<Scalar> out(dims);
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_same_shape(items[i], items.front(), "stack");
    out.set_slice(static_cast<Index>(i), items[i]);
  }
  return out;
}

}  // namespace flowguide
