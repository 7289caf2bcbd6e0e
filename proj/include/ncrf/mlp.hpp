#pragma once

#include <string>
#include <vector>

#include "ncrf/params.hpp"
#include "ncrf/rng.hpp"

namespace ncrf {

enum class Activation { kSilu, kRelu, kNone };

// Fully connected stack registered under `prefix` in the store. Hidden layers
// use the given activation; the output layer is linear. An optional skip
// connection re-appends the input at one hidden layer (NeRF style).
struct Mlp {
  std::vector<ad::Tensor> weights;
  std::vector<ad::Tensor> biases;
  Activation activation = Activation::kSilu;
  int skip_layer = -1;  // index of hidden layer that also sees the input

  static Mlp create(ParamStore& store, const std::string& prefix,
                    const std::vector<int>& layer_dims, uint64_t seed,
                    Activation act = Activation::kSilu, bool zero_init_output = false,
                    int skip_layer = -1);

  ad::Tensor forward(const ad::Tensor& input) const;
};

}  // namespace ncrf
