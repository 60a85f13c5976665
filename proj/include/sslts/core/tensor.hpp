#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sslts/common.hpp"

namespace sslts {

// Dense row-major tensor. Shape logic lives here; math lives in kernels and
// autograd ops, which work on raw pointers.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape, T fill = T(0)) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(compute_numel(shape_)), fill);
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, T v) { return Tensor(std::move(shape), v); }

  static Tensor from_vector(std::vector<int64_t> shape, std::vector<T> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (static_cast<int64_t>(values.size()) != compute_numel(t.shape_))
      throw std::invalid_argument("Tensor::from_vector: size mismatch");
    t.data_ = std::move(values);
    return t;
  }

  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
  const T& at(std::initializer_list<int64_t> idx) const {
    return data_[static_cast<size_t>(offset(idx))];
  }

  Tensor reshaped(std::vector<int64_t> new_shape) const {
    if (compute_numel(new_shape) != numel())
      throw std::invalid_argument("Tensor::reshaped: numel mismatch " + shape_str() + " -> " +
                                  shape_to_str(new_shape));
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const { return shape_to_str(shape_); }

  static std::string shape_to_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }

  static int64_t compute_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  int64_t offset(std::initializer_list<int64_t> idx) const {
    int64_t off = 0;
    int i = 0;
    for (int64_t v : idx) {
      off = off * shape_[static_cast<size_t>(i)] + v;
      ++i;
    }
    return off;
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace sslts
