#include "vcgan/nn/params.hpp"

#include <cmath>
#include <cstring>

#include "vcgan/nn/adam.hpp"

namespace vcgan::nn {

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Shape shape) {
  auto [it, inserted] = tensors.emplace(name, Tensor<T>(shape));
  if (!inserted) throw Error(ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
  return it->second;
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorCode::kInvalidArgument, "unknown parameter " + name);
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorCode::kInvalidArgument, "unknown parameter " + name);
  return it->second;
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors) n += t.numel();
  return n;
}

template <typename T>
bool ParamStore<T>::all_finite() const {
  for (const auto& [_, t] : tensors)
    for (T v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
Var<T> ParamBinder<T>::operator()(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  Var<T> leaf(store_->at(name), trainable_);
  leaves_.emplace(name, leaf);
  return leaf;
}

template <typename T>
std::map<std::string, Tensor<T>> ParamBinder<T>::gradients() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, leaf] : leaves_) {
    if (leaf.grad().shape == leaf.value().shape && !leaf.grad().empty()) {
      out.emplace(name, leaf.grad());
    } else {
      out.emplace(name, Tensor<T>(leaf.value().shape));
    }
  }
  return out;
}

template <typename T>
std::uint64_t checksum(const ParamStore<T>& store) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : store.tensors) {
    mix(name.data(), name.size());
    const int dims[4] = {t.shape.n, t.shape.c, t.shape.h, t.shape.w};
    mix(dims, sizeof(dims));
    for (T v : t.data) {
      const float f = static_cast<float>(v);
      mix(&f, sizeof(f));
    }
  }
  return h;
}

template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state,
               const std::map<std::string, Tensor<T>>& grads, const AdamConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  for (const auto& [name, g] : grads) {
    Tensor<T>& p = params.at(name);
    auto& m = state.m.try_emplace(name, Tensor<T>(p.shape)).first->second;
    auto& v = state.v.try_emplace(name, Tensor<T>(p.shape)).first->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m.data[i] = b1 * m.data[i] + (T(1) - b1) * g.data[i];
      v.data[i] = b2 * v.data[i] + (T(1) - b2) * g.data[i] * g.data[i];
      p.data[i] -= step_size * m.data[i] / (std::sqrt(v.data[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

template struct ParamStore<float>;
template struct ParamStore<double>;
template class ParamBinder<float>;
template class ParamBinder<double>;
template std::uint64_t checksum<float>(const ParamStore<float>&);
template std::uint64_t checksum<double>(const ParamStore<double>&);
template void adam_step<float>(ParamStore<float>&, AdamState<float>&,
                               const std::map<std::string, Tensor<float>>&, const AdamConfig&);
template void adam_step<double>(ParamStore<double>&, AdamState<double>&,
                                const std::map<std::string, Tensor<double>>&, const AdamConfig&);

}  // namespace vcgan::nn
