#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vcgan/nn/autograd.hpp"

namespace vcgan::nn {

// Named parameter arrays. std::map keeps a stable (lexicographic) order, which
// the checkpoint layout and checksums rely on.
template <typename T>
struct ParamStore {
  std::map<std::string, Tensor<T>> tensors;

  Tensor<T>& add(const std::string& name, Shape shape);
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  std::size_t parameter_count() const;
  bool all_finite() const;
};

// Hands out one leaf Var per parameter name for a forward pass and collects
// their gradients afterwards.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(const ParamStore<T>& store, bool trainable) : store_(&store), trainable_(trainable) {}

  Var<T> operator()(const std::string& name);

  bool trainable() const { return trainable_; }

  // Gradient for every bound parameter; parameters that never received a
  // gradient get zeros.
  std::map<std::string, Tensor<T>> gradients() const;

 private:
  const ParamStore<T>* store_;
  bool trainable_;
  std::map<std::string, Var<T>> leaves_;
};

// FNV-1a over names, shapes and the float32 bit patterns of the values.
template <typename T>
std::uint64_t checksum(const ParamStore<T>& store);

template <typename To, typename From>
ParamStore<To> store_cast(const ParamStore<From>& src) {
  ParamStore<To> out;
  for (const auto& [name, t] : src.tensors) out.tensors.emplace(name, tensor_cast<To>(t));
  return out;
}

extern template struct ParamStore<float>;
extern template struct ParamStore<double>;
extern template class ParamBinder<float>;
extern template class ParamBinder<double>;

}  // namespace vcgan::nn
