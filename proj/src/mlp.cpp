#include "ncrf/mlp.hpp"

#include <cmath>

namespace ncrf {

Mlp Mlp::create(ParamStore& store, const std::string& prefix, const std::vector<int>& dims,
                uint64_t seed, Activation act, bool zero_init_output, int skip_layer) {
  Mlp mlp;
  mlp.activation = act;
  mlp.skip_layer = skip_layer;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    int fan_in = dims[l];
    if (int(l) == skip_layer) fan_in += dims[0];
    int fan_out = dims[l + 1];
    Mat w(fan_in, fan_out);
    double s = std::sqrt(2.0 / fan_in);  // He-style
    bool last = l + 2 == dims.size();
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = (last && zero_init_output) ? 0.0 : s * rng.normal();
    mlp.weights.push_back(store.add(prefix + ".w" + std::to_string(l), std::move(w)));
    mlp.biases.push_back(store.add(prefix + ".b" + std::to_string(l), Mat::Zero(1, fan_out)));
  }
  return mlp;
}

ad::Tensor Mlp::forward(const ad::Tensor& input) const {
  ad::Tensor h = input;
  for (size_t l = 0; l < weights.size(); ++l) {
    if (int(l) == skip_layer) h = ad::hcat({h, input});
    h = ad::add_rowvec(ad::matmul(h, weights[l]), biases[l]);
    if (l + 1 < weights.size()) {
      switch (activation) {
        case Activation::kSilu: h = ad::silu(h); break;
        case Activation::kRelu: h = ad::relu(h); break;
        case Activation::kNone: break;
      }
    }
  }
  return h;
}

}  // namespace ncrf
