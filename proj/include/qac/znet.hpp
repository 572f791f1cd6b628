#pragma once

// Quantile critic Z(s, a; tau).
//
// A rectified trunk embeds the concatenated (state, action); each fraction tau
// is embedded as relu(sum_i cos(pi * i * tau) w_ij + b_j), i = 0..n_cos-1, and
// fused with the trunk feature by elementwise product before a scalar head.

#include "qac/distmath.hpp"
#include "qac/nn/params.hpp"

#include <functional>

namespace qac {

struct ZNetConfig {
  Index state_dim = 1;
  Index action_dim = 1;
  Index hidden = 64;
  Index n_cos = 64;
};

struct ZNetworkParams {
  nn::MlpParams trunk;     // (state ++ action) -> hidden, rectified output
  nn::Linear tau_embed;    // n_cos -> hidden
  nn::MlpParams head;      // hidden -> hidden -> 1

  Index state_dim = 0;
  Index action_dim = 0;

  Index hidden() const { return tau_embed.out_dim(); }
  Index n_cos() const { return tau_embed.in_dim(); }
};

template <typename Z>
  requires std::same_as<std::remove_const_t<Z>, ZNetworkParams>
void visit_tensors(Z& z, auto&& f) {
  visit_tensors(z.trunk, f);
  visit_tensors(z.tau_embed, f);
  visit_tensors(z.head, f);
}

ZNetworkParams make_znet(const ZNetConfig& cfg, Rng& rng);

/// (rows*cols) x n_cos matrix; row r*cols + i holds cos(pi * k * taus(r, i)), k = 0..n_cos-1.
Matrix cosine_features(const Matrix& taus, Index n_cos);

/// Differentiable forward. states R x ds, actions R x da, taus R x N -> R x N.
nn::Var z_forward(const ZNetworkParams& z, nn::ParamCursor& params, nn::Var states, nn::Var actions,
                  const Matrix& taus);

/// Gradient-free batch forward, same shapes as z_forward.
Matrix z_values(const ZNetworkParams& z, const Matrix& states, const Matrix& actions, const Matrix& taus);

/// One quantile value per fraction for a single (s, a).
std::vector<double> z_value(const ZNetworkParams& z, const Vector& s, const Vector& a,
                            const QuantileFractions& taus);

/// Two online critics and their slowly tracking targets.
template <typename P>
struct Twin {
  P online1;
  P online2;
  P target1;
  P target2;
};

template <typename T, typename F>
  requires requires(T& t) { t.online1; t.target2; }
void visit_tensors(T& twin, F&& f) {
  visit_tensors(twin.online1, f);
  visit_tensors(twin.online2, f);
  visit_tensors(twin.target1, f);
  visit_tensors(twin.target2, f);
}

using TwinZ = Twin<ZNetworkParams>;

/// Independently initialised online critics; targets start as exact copies.
TwinZ make_twin_z(const ZNetConfig& cfg, Rng& rng);

/// target <- target + rate * (online - target), for both pairs. 0 < rate < 1.
template <typename P>
void ema_update(Twin<P>& twin, double rate) {
  require(rate > 0.0 && rate < 1.0, "ema_update: rate must lie in (0, 1)");
  auto blend = [rate](const P& online, P& target) {
    auto src = nn::tensor_refs(online);
    auto dst = nn::tensor_refs(target);
    require(src.size() == dst.size(), "ema_update: online and target differ in structure");
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] += rate * (*src[i] - *dst[i]);
  };
  blend(twin.online1, twin.target1);
  blend(twin.online2, twin.target2);
}

/// Batch quantile function: (states R x ds, actions R x da, taus R x N) -> R x N.
using QuantileCritic = std::function<Matrix(const Matrix&, const Matrix&, const Matrix&)>;

/// Elementwise min of the two online critics. Holds a reference to `twin`.
QuantileCritic online_min_critic(const TwinZ& twin);
/// Elementwise min of the two target critics. Holds a reference to `twin`.
QuantileCritic target_min_critic(const TwinZ& twin);

Matrix twin_min(const TwinZ& twin, const Matrix& states, const Matrix& actions, const Matrix& taus);
std::vector<double> twin_min(const TwinZ& twin, const Vector& s, const Vector& a, const QuantileFractions& taus);

/// Mean of Z over n_taus fresh fractions: the Q estimate.
double mean_q(const ZNetworkParams& z, const Vector& s, const Vector& a, std::size_t n_taus, Rng& rng);

}  // namespace qac
