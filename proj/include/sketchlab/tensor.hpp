#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <ostream>
#include <vector>

#include "sketchlab/common.hpp"

namespace sketchlab {

using Shape = std::vector<int>;

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (int d : s) {
    SK_CHECK(d >= 0, "negative dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

using EMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMatrix>;
using ECMap = Eigen::Map<const EMatrix>;
using EVecMap = Eigen::Map<Eigen::VectorXd>;
using ECVecMap = Eigen::Map<const Eigen::VectorXd>;

// Allocator that hands out 64-byte-aligned blocks.  Eigen's vectorized
// reductions choose their scalar-prologue/SIMD split from the address of the
// data, so buffers at allocator-dependent alignments make reduction rounding
// vary between otherwise identical runs.  Pinning every tensor buffer to one
// alignment keeps those reductions bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  using is_always_equal = std::true_type;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t(kAlign));
  }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using DVec = std::vector<double, AlignedAllocator<double>>;

// Dense row-major double tensor.  Deliberately minimal: shape + flat storage
// plus Eigen views for the operations that dominate runtime (GEMM).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}
  Tensor(Shape shape, DVec values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    SK_CHECK(static_cast<long>(data_.size()) == shape_numel(shape_),
             "value count " << data_.size() << " does not match shape "
                            << shape_str(shape_));
  }
  Tensor(Shape shape, const std::vector<double>& values)
      : Tensor(std::move(shape), DVec(values.begin(), values.end())) {}
  Tensor(Shape shape, std::initializer_list<double> values)
      : Tensor(std::move(shape), DVec(values.begin(), values.end())) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const {
    SK_CHECK(i >= 0 && i < rank(), "dim index " << i << " out of range for "
                                                << shape_str(shape_));
    return shape_[static_cast<size_t>(i)];
  }
  long size() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  DVec& raw() { return data_; }
  const DVec& raw() const { return data_; }

  double& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  double operator[](long i) const { return data_[static_cast<size_t>(i)]; }

  // Value at flat index with bounds check (tests / slow paths).
  double at(long i) const {
    SK_CHECK(i >= 0 && i < size(), "flat index out of range");
    return data_[static_cast<size_t>(i)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // View as a rows x cols Eigen matrix (row-major).  Requires exact size.
  EMap mat(long rows, long cols) {
    SK_CHECK(rows * cols == size(), "matrix view " << rows << "x" << cols
                                                   << " does not cover "
                                                   << shape_str(shape_));
    return EMap(data(), rows, cols);
  }
  ECMap mat(long rows, long cols) const { return cmat(rows, cols); }
  ECMap cmat(long rows, long cols) const {
    SK_CHECK(rows * cols == size(), "matrix view " << rows << "x" << cols
                                                   << " does not cover "
                                                   << shape_str(shape_));
    return ECMap(data(), rows, cols);
  }
  EVecMap vec() { return EVecMap(data(), size()); }
  ECVecMap vec() const { return ECVecMap(data(), size()); }

  Tensor reshaped(Shape s) const {
    SK_CHECK(shape_numel(s) == size(), "reshape " << shape_str(shape_)
                                                  << " -> " << shape_str(s));
    return Tensor(std::move(s), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  Tensor& operator+=(const Tensor& o) {
    SK_CHECK(same_shape(o), "+= shape mismatch " << shape_str(shape_) << " vs "
                                                 << shape_str(o.shape_));
    vec() += o.vec();
    return *this;
  }
  Tensor& operator*=(double s) {
    vec() *= s;
    return *this;
  }

  double sum() const { return vec().sum(); }
  double min() const { return size() ? vec().minCoeff() : 0.0; }
  double max() const { return size() ? vec().maxCoeff() : 0.0; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  Shape shape_;
  DVec data_;
};

// ---------------------------------------------------------------------------
// Broadcasting (numpy rules: align trailing dims; size-1 dims stretch).

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
  out.resize(r);
  for (size_t i = 0; i < r; ++i) {
    int da = i < ra ? a[ra - 1 - i] : 1;
    int db = i < rb ? b[rb - 1 - i] : 1;
    SK_CHECK(da == db || da == 1 || db == 1,
             "shapes not broadcastable: " << shape_str(a) << " vs "
                                          << shape_str(b));
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

// Strides (in elements) for iterating a tensor of shape `s` as if it had the
// broadcast shape `out`; broadcast dimensions get stride 0.
inline std::vector<long> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<long> strides(out.size(), 0);
  long acc = 1;
  for (size_t i = 0; i < s.size(); ++i) {
    size_t si = s.size() - 1 - i;
    size_t oi = out.size() - 1 - i;
    strides[oi] = (s[si] == 1 && out[oi] != 1) ? 0 : acc;
    acc *= s[si];
  }
  return strides;
}

// Apply f(a_elem, b_elem) elementwise with broadcasting.
inline Tensor broadcast_binary(const Tensor& a, const Tensor& b,
                               const std::function<double(double, double)>& f) {
  if (a.same_shape(b)) {
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (long i = 0; i < a.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor out(os);
  auto sa = broadcast_strides(a.shape(), os);
  auto sb = broadcast_strides(b.shape(), os);
  size_t r = os.size();
  std::vector<long> idx(r, 0);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  long n = out.size();
  long ia = 0, ib = 0;
  for (long i = 0; i < n; ++i) {
    po[i] = f(pa[ia], pb[ib]);
    // Increment the multi-index (odometer), updating both offsets.
    for (size_t d = r; d-- > 0;) {
      idx[d]++;
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < os[d]) break;
      ia -= sa[d] * os[d];
      ib -= sb[d] * os[d];
      idx[d] = 0;
    }
  }
  return out;
}

// Sum `t` down to `target` shape (reverse of broadcasting).  Used by autodiff
// to reduce an output gradient back onto a broadcast input.
inline Tensor reduce_to(const Tensor& t, const Shape& target) {
  if (t.shape() == target) return t;
  Shape os = t.shape();
  Tensor out(target);
  auto st = broadcast_strides(target, os);
  size_t r = os.size();
  std::vector<long> idx(r, 0);
  const double* pt = t.data();
  double* po = out.data();
  long n = t.size();
  long io = 0;
  for (long i = 0; i < n; ++i) {
    po[io] += pt[i];
    for (size_t d = r; d-- > 0;) {
      idx[d]++;
      io += st[d];
      if (idx[d] < os[d]) break;
      io -= st[d] * os[d];
      idx[d] = 0;
    }
  }
  return out;
}

inline std::ostream& operator<<(std::ostream& os, const Tensor& t) {
  os << "Tensor" << shape_str(t.shape()) << "{";
  long n = std::min<long>(t.size(), 8);
  for (long i = 0; i < n; ++i) {
    if (i) os << ", ";
    os << t[i];
  }
  if (t.size() > n) os << ", ...";
  return os << "}";
}

}  // namespace sketchlab
