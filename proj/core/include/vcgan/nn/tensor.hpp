#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vcgan/error.hpp"

namespace vcgan::nn {

// NCHW. Vectors and logits are stored as [N, K, 1, 1].
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(s), data(s.numel(), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(s), data(std::move(values)) {
    if (data.size() != s.numel()) {
      throw Error(ErrorCode::kShapeMismatch, "tensor data size " + std::to_string(data.size()) +
                                                 " does not match " + s.str());
    }
  }

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T& at(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w];
  }
  const T& at(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w];
  }

  std::span<T> sample(int n) {
    return {data.data() + static_cast<std::size_t>(n) * shape.sample_size(), shape.sample_size()};
  }
  std::span<const T> sample(int n) const {
    return {data.data() + static_cast<std::size_t>(n) * shape.sample_size(), shape.sample_size()};
  }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  Tensor<To> out;
  out.shape = src.shape;
  out.data.assign(src.data.begin(), src.data.end());
  return out;
}

}  // namespace vcgan::nn
