#pragma once

#include "qac/nn/tape.hpp"

#include <span>
#include <type_traits>
#include <vector>

namespace qac::nn {

/// Affine map y = x W + b with W stored in_dim x out_dim and b as a 1 x out_dim row.
struct Linear {
  Matrix weight;
  Matrix bias;

  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }
};

/// Fully connected net. Hidden layers use the rectifier; the output layer is
/// linear unless relu_output is set (used for feature trunks).
struct MlpParams {
  std::vector<Linear> layers;
  bool relu_output = false;

  Index in_dim() const { return layers.front().in_dim(); }
  Index out_dim() const { return layers.back().out_dim(); }
};

template <typename T>
concept LinearLike = std::same_as<std::remove_const_t<T>, Linear>;
template <typename T>
concept MlpLike = std::same_as<std::remove_const_t<T>, MlpParams>;

template <LinearLike L, typename F>
void visit_tensors(L& layer, F&& f) {
  f(layer.weight);
  f(layer.bias);
}

template <MlpLike M, typename F>
void visit_tensors(M& mlp, F&& f) {
  for (auto& layer : mlp.layers) visit_tensors(layer, f);
}

/// Uniform(-1/sqrt(in), 1/sqrt(in)) initialisation; `scale` multiplies the result.
Linear make_linear(Index in_dim, Index out_dim, Rng& rng, double scale = 1.0);

/// dims = {in, hidden..., out}. `output_scale` shrinks the last layer.
MlpParams make_mlp(std::span<const Index> dims, Rng& rng, double output_scale = 1.0,
                   bool relu_output = false);
MlpParams make_mlp(std::initializer_list<Index> dims, Rng& rng, double output_scale = 1.0,
                   bool relu_output = false);

/// Walks a flat list of bound parameter Vars in visit_tensors order.
class ParamCursor {
 public:
  explicit ParamCursor(std::span<const Var> vars) : vars_(vars) {}
  Var next() {
    require(pos_ < vars_.size(), "ParamCursor: ran out of bound parameters");
    return vars_[pos_++];
  }
  bool done() const { return pos_ == vars_.size(); }

 private:
  std::span<const Var> vars_;
  std::size_t pos_ = 0;
};

Var linear_forward(const Linear& layer, ParamCursor& params, Var input);
Var mlp_forward(const MlpParams& mlp, ParamCursor& params, Var input);

/// Gradient-free forward pass; rows of `input` are batch elements.
Matrix mlp_forward(const MlpParams& mlp, const Matrix& input);

}  // namespace qac::nn
