#include "qac/znet.hpp"

#include <numbers>

namespace qac {

ZNetworkParams make_znet(const ZNetConfig& cfg, Rng& rng) {
  require(cfg.state_dim >= 1 && cfg.action_dim >= 1 && cfg.hidden >= 1 && cfg.n_cos >= 1,
          "make_znet: all dimensions must be >= 1");
  ZNetworkParams z;
  z.state_dim = cfg.state_dim;
  z.action_dim = cfg.action_dim;
  z.trunk = nn::make_mlp({cfg.state_dim + cfg.action_dim, cfg.hidden, cfg.hidden}, rng, 1.0, true);
  z.tau_embed = nn::make_linear(cfg.n_cos, cfg.hidden, rng);
  z.head = nn::make_mlp({cfg.hidden, cfg.hidden, 1}, rng);
  return z;
}

Matrix cosine_features(const Matrix& taus, Index n_cos) {
  const Index rows = taus.rows(), cols = taus.cols();
  Matrix out(rows * cols, n_cos);
  if (n_cos == 0) return out;
  Vector angle(rows * cols);
  for (Index r = 0; r < rows; ++r)
    for (Index i = 0; i < cols; ++i) angle(r * cols + i) = std::numbers::pi * taus(r, i);
  out.col(0).setOnes();
  if (n_cos > 1) out.col(1) = angle.array().cos().matrix();
  // cos(k x) = 2 cos(x) cos((k-1) x) - cos((k-2) x)
  for (Index k = 2; k < n_cos; ++k)
    out.col(k) = (2.0 * out.col(1).array() * out.col(k - 1).array() - out.col(k - 2).array()).matrix();
  return out;
}

nn::Var z_forward(const ZNetworkParams& z, nn::ParamCursor& params, nn::Var states, nn::Var actions,
                  const Matrix& taus) {
  require_shape(states.cols() == z.state_dim, "z_forward: state dimension mismatch");
  require_shape(actions.cols() == z.action_dim, "z_forward: action dimension mismatch");
  require_shape(states.rows() == actions.rows() && taus.rows() == states.rows(),
                "z_forward: states, actions and taus must share the batch size");
  const Index batch = states.rows(), n = taus.cols();
  nn::Tape& tape = *states.tape;
  nn::Var features = nn::mlp_forward(z.trunk, params, nn::concat_cols(states, actions));
  nn::Var embedding = nn::relu(nn::linear_forward(z.tau_embed, params, tape.constant(cosine_features(taus, z.n_cos()))));
  nn::Var fused = nn::repeat_rows(features, n) * embedding;
  nn::Var out = nn::mlp_forward(z.head, params, fused);
  return nn::unflatten_rows(out, batch, n);
}

Matrix z_values(const ZNetworkParams& z, const Matrix& states, const Matrix& actions, const Matrix& taus) {
  nn::Tape tape;
  auto vars = nn::bind(tape, z, false);
  nn::ParamCursor cursor(vars);
  return z_forward(z, cursor, tape.constant(states), tape.constant(actions), taus).value();
}

std::vector<double> z_value(const ZNetworkParams& z, const Vector& s, const Vector& a,
                            const QuantileFractions& taus) {
  taus.validate();
  require(taus.size() >= 1, "z_value: no fractions");
  Matrix t = Eigen::Map<const RowVector>(taus.taus.data(), static_cast<Index>(taus.size()));
  Matrix out = z_values(z, s.transpose(), a.transpose(), t);
  return {out.data(), out.data() + out.size()};
}

TwinZ make_twin_z(const ZNetConfig& cfg, Rng& rng) {
  TwinZ twin;
  twin.online1 = make_znet(cfg, rng);
  twin.online2 = make_znet(cfg, rng);
  twin.target1 = twin.online1;
  twin.target2 = twin.online2;
  return twin;
}

Matrix twin_min(const TwinZ& twin, const Matrix& states, const Matrix& actions, const Matrix& taus) {
  return z_values(twin.online1, states, actions, taus).cwiseMin(z_values(twin.online2, states, actions, taus));
}

std::vector<double> twin_min(const TwinZ& twin, const Vector& s, const Vector& a, const QuantileFractions& taus) {
  auto z1 = z_value(twin.online1, s, a, taus);
  auto z2 = z_value(twin.online2, s, a, taus);
  for (std::size_t i = 0; i < z1.size(); ++i) z1[i] = std::min(z1[i], z2[i]);
  return z1;
}

QuantileCritic online_min_critic(const TwinZ& twin) {
  return [&twin](const Matrix& s, const Matrix& a, const Matrix& taus) { return twin_min(twin, s, a, taus); };
}

QuantileCritic target_min_critic(const TwinZ& twin) {
  return [&twin](const Matrix& s, const Matrix& a, const Matrix& taus) -> Matrix {
    return z_values(twin.target1, s, a, taus).cwiseMin(z_values(twin.target2, s, a, taus));
  };
}

double mean_q(const ZNetworkParams& z, const Vector& s, const Vector& a, std::size_t n_taus, Rng& rng) {
  require(n_taus >= 1, "mean_q: n_taus must be >= 1");
  auto values = z_value(z, s, a, sample_fractions(n_taus, rng));
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

}  // namespace qac
