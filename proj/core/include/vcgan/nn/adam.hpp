#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vcgan/nn/params.hpp"

namespace vcgan::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam step over every parameter that has a gradient.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state,
               const std::map<std::string, Tensor<T>>& grads, const AdamConfig& cfg);

extern template void adam_step<float>(ParamStore<float>&, AdamState<float>&,
                                      const std::map<std::string, Tensor<float>>&, const AdamConfig&);
extern template void adam_step<double>(ParamStore<double>&, AdamState<double>&,
                                       const std::map<std::string, Tensor<double>>&, const AdamConfig&);

}  // namespace vcgan::nn
