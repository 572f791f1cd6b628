#include "qac/nn/mlp.hpp"

#include <cmath>

namespace qac::nn {

Linear make_linear(Index in_dim, Index out_dim, Rng& rng, double scale) {
  require(in_dim >= 1 && out_dim >= 1, "make_linear: dimensions must be >= 1");
  const double bound = scale / std::sqrt(static_cast<double>(in_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Linear layer{Matrix(in_dim, out_dim), Matrix(1, out_dim)};
  for (Index r = 0; r < in_dim; ++r)
    for (Index c = 0; c < out_dim; ++c) layer.weight(r, c) = dist(rng);
  for (Index c = 0; c < out_dim; ++c) layer.bias(0, c) = dist(rng);
  return layer;
}

MlpParams make_mlp(std::span<const Index> dims, Rng& rng, double output_scale, bool relu_output) {
  require(dims.size() >= 2, "make_mlp: need at least input and output dimensions");
  MlpParams mlp;
  mlp.relu_output = relu_output;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    mlp.layers.push_back(make_linear(dims[i], dims[i + 1], rng, last ? output_scale : 1.0));
  }
  return mlp;
}

MlpParams make_mlp(std::initializer_list<Index> dims, Rng& rng, double output_scale, bool relu_output) {
  return make_mlp(std::span<const Index>(dims.begin(), dims.size()), rng, output_scale, relu_output);
}

Var linear_forward(const Linear& layer, ParamCursor& params, Var input) {
  require_shape(input.cols() == layer.in_dim(),
                "linear: input has " + std::to_string(input.cols()) + " columns, layer expects " +
                    std::to_string(layer.in_dim()));
  Var w = params.next();
  Var b = params.next();
  return add_row(matmul(input, w), b);
}

Var mlp_forward(const MlpParams& mlp, ParamCursor& params, Var input) {
  Var x = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    x = linear_forward(mlp.layers[i], params, x);
    if (i + 1 < mlp.layers.size() || mlp.relu_output) x = relu(x);
  }
  return x;
}

Matrix mlp_forward(const MlpParams& mlp, const Matrix& input) {
  require_shape(input.cols() == mlp.in_dim(), "mlp_forward: input dimension mismatch");
  Matrix x = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const Linear& l = mlp.layers[i];
    Matrix y = (x * l.weight).rowwise() + l.bias.row(0);
    if (i + 1 < mlp.layers.size() || mlp.relu_output) y = y.cwiseMax(0.0);
    x = std::move(y);
  }
  return x;
}

}  // namespace qac::nn
