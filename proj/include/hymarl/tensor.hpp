#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hymarl {

/// Thrown when tensor extents do not conform for an operation.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major array of real values. The 2-D case (rows x cols) is the
/// workhorse; 1-D data is stored as a single row.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != numel())
      throw ShapeError("tensor data length does not match shape");
  }

  static Tensor zeros(std::vector<int> s) {
    std::int64_t n = 1;
    for (int e : s) {
      if (e < 0) throw ShapeError("negative extent");
      n *= e;
    }
    return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0)));
  }

  static Tensor full(std::vector<int> s, T v) {
    Tensor t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor row(std::vector<T> v) {
    int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
  }

  static Tensor matrix(int r, int c, std::vector<T> v) { return Tensor({r, c}, std::move(v)); }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
  }

  int rows() const { return shape.size() == 2 ? shape[0] : (shape.empty() ? 0 : 1); }
  int cols() const { return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : 0); }

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }
};

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* ctx) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(ctx) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace hymarl
