#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapfuse {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major n-d array. Plain value type: no gradient machinery here,
// that lives on the tape.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(numel(shape)), T(0)) {}
  Tensor(Shape s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<int64_t>(v.size()) != numel(shape))
      throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape));
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int64_t extent(int axis) const { return shape[static_cast<size_t>(axis)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  // 2-d / 3-d accessors for the common cases
  T& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * shape[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * shape[1] + j)]; }
  T& at(int64_t i, int64_t j, int64_t k) {
    return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  const T& at(int64_t i, int64_t j, int64_t k) const {
    return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T x) {
    Tensor t(std::move(s));
    t.fill(x);
    return t;
  }
  static Tensor scalar(T x) { return Tensor({1}, {x}); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <class T>
inline void check_shape(const Tensor<T>& t, const Shape& want, const char* what) {
  if (t.shape != want)
    throw std::invalid_argument(std::string(what) + ": expected shape " + shape_str(want) +
                                ", got " + shape_str(t.shape));
}

}  // namespace mapfuse
