#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsdpg/params.hpp"
#include "dsdpg/rng.hpp"
#include "dsdpg/tape.hpp"

namespace dsdpg::nets {

// elementwise x * sigmoid(x)
Tensor swish(const Tensor& x);

// sup_x d/dx swish(x), fixed once from a numeric maximization
inline constexpr double kSwishLipschitz = 1.09984;

enum class Activation { None, Swish, Tanh };

double activation_lipschitz(Activation a);

// How a net's parameters enter a tape: as differentiable leaves (training)
// or as constants (target networks, imagination).
using ParamLookup = std::function<int(const std::string&)>;
ParamLookup bind_lookup(ParamBinding& b);
ParamLookup const_lookup(ad::Tape& t, const ParamStore& ps);

struct MlpConfig {
  std::size_t in_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t out_dim = 1;
  Activation hidden_act = Activation::Swish;
  Activation out_act = Activation::None;
  bool skip_from_input = false;  // input concatenated to every hidden layer past the first
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpConfig cfg, std::string prefix);

  void init(ParamStore& ps, Rng& rng) const;  // orthogonal weights, zero biases
  int forward(ad::Tape& t, const ParamLookup& p, int x) const;

  // K such that ||f(x1)-f(x2)|| <= K ||x1-x2||, from the layerwise composition
  // rule: K_1 = L_s ||W_1||; with skip connections each later hidden layer
  // multiplies [h; x], so K_l = L_s (||W_h|| K_{l-1} + ||W_x||); the linear
  // output contributes ||W_out|| (times the output activation constant).
  double lipschitz_bound(const ParamStore& ps) const;

  const MlpConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

 private:
  std::string wname(std::size_t l) const;
  std::string bname(std::size_t l) const;
  MlpConfig cfg_;
  std::string prefix_;
};

// Noise-conditioned distributional critic Z(s, a, xi): xi runs through a
// private pre-MLP, is concatenated with [s; a] and fed to the trunk; scalar
// output with no output nonlinearity. noise_dim = 0 degenerates to a
// deterministic critic Q(s, a).
struct CriticConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t noise_dim = 64;
  std::vector<std::size_t> noise_hidden = {64};  // plus a width-64 output layer
  std::size_t noise_out = 64;
  std::vector<std::size_t> trunk_hidden = {400, 400};
  bool skip_from_input = true;
};

class CriticNet {
 public:
  CriticNet() = default;
  CriticNet(CriticConfig cfg, Rng& rng);

  // s: [m, ds], a: [m, da], xi: [m, noise_dim] (ignored when noise_dim == 0)
  int forward(ad::Tape& t, const ParamLookup& p, int s, int a, int xi) const;

  bool distributional() const { return cfg_.noise_dim > 0; }
  const CriticConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  double lipschitz_bound() const;

 private:
  CriticConfig cfg_;
  Mlp noise_mlp_, trunk_;
  ParamStore params_;
};

// (z, grad_a z) as tape nodes; the gradient re-enters the tape, so losses
// built from it stay differentiable w.r.t. the critic parameters. Batched
// rows are independent, so one sweep yields per-row action gradients.
struct SobolevNodes {
  int ret;    // [m,1]
  int agrad;  // [m,da]
};
SobolevNodes critic_sobolev_sample(ad::Tape& t, const ParamLookup& p,
                                   const CriticNet& critic, int s, int a_leaf,
                                   int xi);

// tanh-bounded deterministic policy, outputs in (-scale, scale) per component
struct PolicyConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<std::size_t> hidden = {400, 400};
  double action_scale = 1.0;
  bool skip_from_input = false;
};

class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(PolicyConfig cfg, Rng& rng);

  int forward(ad::Tape& t, const ParamLookup& p, int s) const;
  Tensor act(const Tensor& s) const;  // convenience, no caller tape

  const PolicyConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  double lipschitz_bound() const;

 private:
  PolicyConfig cfg_;
  Mlp mlp_;
  ParamStore params_;
};

// power-iteration estimate of the largest singular value
double spectral_norm(const Tensor& w, int iters);

// orthogonal weight init (Gram-Schmidt on a Gaussian draw), zero biases
Tensor orthogonal_init(std::size_t in, std::size_t out, Rng& rng);

}  // namespace dsdpg::nets
