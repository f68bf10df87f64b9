#include "dsdpg/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace dsdpg::nets {

Tensor swish(const Tensor& x) {
  Tensor r = x;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-std::fabs(x[i])));
    const double sig = x[i] >= 0.0 ? s : 1.0 - s;
    r[i] = x[i] * sig;
  }
  return r;
}

double activation_lipschitz(Activation a) {
  switch (a) {
    case Activation::None:
      return 1.0;
    case Activation::Swish:
      return kSwishLipschitz;
    case Activation::Tanh:
      return 1.0;
  }
  return 1.0;
}

ParamLookup bind_lookup(ParamBinding& b) {
  return [&b](const std::string& name) { return b.leaf(name); };
}

ParamLookup const_lookup(ad::Tape& t, const ParamStore& ps) {
  return [&t, &ps](const std::string& name) { return t.constant(ps.get(name)); };
}

Tensor orthogonal_init(std::size_t in, std::size_t out, Rng& rng) {
  // orthonormalize the shorter side of a Gaussian draw (modified Gram-Schmidt)
  const bool tall = in >= out;
  const std::size_t n = tall ? in : out;   // vector length
  const std::size_t m = tall ? out : in;   // number of vectors
  std::vector<std::vector<double>> q(m, std::vector<double>(n));
  for (auto& v : q)
    for (auto& x : v) x = rng.normal();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < n; ++k) d += q[i][k] * q[j][k];
      for (std::size_t k = 0; k < n; ++k) q[i][k] -= d * q[j][k];
    }
    double nrm = 0;
    for (std::size_t k = 0; k < n; ++k) nrm += q[i][k] * q[i][k];
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) nrm = 1.0;
    for (std::size_t k = 0; k < n; ++k) q[i][k] /= nrm;
  }
  Tensor w(in, out);
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j) w(i, j) = tall ? q[j][i] : q[i][j];
  return w;
}

// ------------------------------------------------------------------ Mlp

Mlp::Mlp(MlpConfig cfg, std::string prefix) : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {
  if (cfg_.in_dim == 0 || cfg_.out_dim == 0)
    throw std::invalid_argument("Mlp: zero-sized layer");
  for (std::size_t h : cfg_.hidden)
    if (h == 0) throw std::invalid_argument("Mlp: zero-width hidden layer");
}

std::string Mlp::wname(std::size_t l) const { return prefix_ + ".w" + std::to_string(l); }
std::string Mlp::bname(std::size_t l) const { return prefix_ + ".b" + std::to_string(l); }

void Mlp::init(ParamStore& ps, Rng& rng) const {
  std::size_t in = cfg_.in_dim;
  for (std::size_t l = 0; l < cfg_.hidden.size(); ++l) {
    const std::size_t width = cfg_.hidden[l];
    const std::size_t d_in = (cfg_.skip_from_input && l > 0) ? in + cfg_.in_dim : in;
    ps.add(wname(l), orthogonal_init(d_in, width, rng));
    ps.add(bname(l), Tensor(1, width));
    in = width;
  }
  const std::size_t l = cfg_.hidden.size();
  ps.add(wname(l), orthogonal_init(in, cfg_.out_dim, rng));
  ps.add(bname(l), Tensor(1, cfg_.out_dim));
}

namespace {
int apply_activation(ad::Tape& t, Activation a, int x) {
  switch (a) {
    case Activation::None:
      return x;
    case Activation::Swish:
      return t.swish(x);
    case Activation::Tanh:
      return t.tanh(x);
  }
  return x;
}
}  // namespace

int Mlp::forward(ad::Tape& t, const ParamLookup& p, int x) const {
  const std::size_t m = t.val(x).rows();
  if (t.val(x).cols() != cfg_.in_dim)
    throw ad::TapeError("Mlp " + prefix_ + ": input width " +
                        std::to_string(t.val(x).cols()) + " != " +
                        std::to_string(cfg_.in_dim));
  int h = x;
  for (std::size_t l = 0; l < cfg_.hidden.size(); ++l) {
    int in = (cfg_.skip_from_input && l > 0) ? t.concat_cols(h, x) : h;
    int z = t.add(t.matmul(in, p(wname(l))), t.broadcast_rows(p(bname(l)), m));
    h = apply_activation(t, cfg_.hidden_act, z);
  }
  const std::size_t l = cfg_.hidden.size();
  int z = t.add(t.matmul(h, p(wname(l))), t.broadcast_rows(p(bname(l)), m));
  return apply_activation(t, cfg_.out_act, z);
}

double Mlp::lipschitz_bound(const ParamStore& ps) const {
  const double ls = activation_lipschitz(cfg_.hidden_act);
  double k = 0.0;
  for (std::size_t l = 0; l < cfg_.hidden.size(); ++l) {
    const Tensor& w = ps.get(wname(l));
    if (l == 0) {
      k = ls * spectral_norm(w, 100);
    } else if (cfg_.skip_from_input) {
      // w multiplies [h; x]: split rows into the h-block and the x-block
      const std::size_t hrows = w.rows() - cfg_.in_dim;
      Tensor wh(hrows, w.cols()), wx(cfg_.in_dim, w.cols());
      for (std::size_t i = 0; i < hrows; ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) wh(i, j) = w(i, j);
      for (std::size_t i = 0; i < cfg_.in_dim; ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) wx(i, j) = w(hrows + i, j);
      k = ls * (spectral_norm(wh, 100) * k + spectral_norm(wx, 100));
    } else {
      k = ls * spectral_norm(w, 100) * k;
    }
  }
  const std::size_t l = cfg_.hidden.size();
  const double wout = spectral_norm(ps.get(wname(l)), 100);
  const double lout = activation_lipschitz(cfg_.out_act);
  return cfg_.hidden.empty() ? lout * wout : lout * wout * k;
}

// ------------------------------------------------------------------ CriticNet

CriticNet::CriticNet(CriticConfig cfg, Rng& rng) : cfg_(cfg) {
  std::size_t trunk_in = cfg_.state_dim + cfg_.action_dim;
  if (cfg_.noise_dim > 0) {
    MlpConfig nc;
    nc.in_dim = cfg_.noise_dim;
    nc.hidden = cfg_.noise_hidden;
    nc.out_dim = cfg_.noise_out;
    nc.hidden_act = Activation::Swish;
    nc.out_act = Activation::Swish;
    noise_mlp_ = Mlp(nc, "noise");
    noise_mlp_.init(params_, rng);
    trunk_in += cfg_.noise_out;
  }
  MlpConfig tc;
  tc.in_dim = trunk_in;
  tc.hidden = cfg_.trunk_hidden;
  tc.out_dim = 1;
  tc.hidden_act = Activation::Swish;
  tc.out_act = Activation::None;  // critics end in a bare linear layer
  tc.skip_from_input = cfg_.skip_from_input;
  trunk_ = Mlp(tc, "trunk");
  trunk_.init(params_, rng);
}

int CriticNet::forward(ad::Tape& t, const ParamLookup& p, int s, int a, int xi) const {
  int in = t.concat_cols(s, a);
  if (cfg_.noise_dim > 0) {
    int phi = noise_mlp_.forward(t, p, xi);
    in = t.concat_cols(in, phi);
  }
  return trunk_.forward(t, p, in);
}

double CriticNet::lipschitz_bound() const {
  const double kt = trunk_.lipschitz_bound(params_);
  if (cfg_.noise_dim == 0) return kt;
  // trunk input stacks [s; a] (identity) with the noise features, so the
  // joint input map is max(1, K_noise)-Lipschitz
  const double kn = noise_mlp_.lipschitz_bound(params_);
  return kt * std::max(1.0, kn);
}

SobolevNodes critic_sobolev_sample(ad::Tape& t, const ParamLookup& p,
                                   const CriticNet& critic, int s, int a_leaf,
                                   int xi) {
  int z = critic.forward(t, p, s, a_leaf, xi);
  int zsum = t.val(z).size() == 1 ? z : t.sum_all(z);
  int g = t.gradients(zsum, {a_leaf})[0];
  return {z, g};
}

// ------------------------------------------------------------------ PolicyNet

PolicyNet::PolicyNet(PolicyConfig cfg, Rng& rng) : cfg_(cfg) {
  MlpConfig mc;
  mc.in_dim = cfg_.state_dim;
  mc.hidden = cfg_.hidden;
  mc.out_dim = cfg_.action_dim;
  mc.hidden_act = Activation::Swish;
  mc.out_act = Activation::Tanh;
  mc.skip_from_input = cfg_.skip_from_input;
  mlp_ = Mlp(mc, "policy");
  mlp_.init(params_, rng);
}

int PolicyNet::forward(ad::Tape& t, const ParamLookup& p, int s) const {
  int a = mlp_.forward(t, p, s);
  return cfg_.action_scale == 1.0 ? a : t.scale(a, cfg_.action_scale);
}

Tensor PolicyNet::act(const Tensor& s) const {
  ad::Tape t;
  auto p = const_lookup(t, params_);
  return t.val(forward(t, p, t.constant(s)));
}

double PolicyNet::lipschitz_bound() const {
  return std::fabs(cfg_.action_scale) * mlp_.lipschitz_bound(params_);
}

// ------------------------------------------------------------------ spectral norm

double spectral_norm(const Tensor& w, int iters) {
  if (iters < 1) throw std::invalid_argument("spectral_norm: iters must be >= 1");
  const std::size_t m = w.rows(), n = w.cols();
  bool all_zero = true;
  for (std::size_t i = 0; i < w.size() && all_zero; ++i)
    if (w[i] != 0.0) all_zero = false;
  if (all_zero) return 0.0;

  Rng rng(0x5eed5ull ^ (static_cast<std::uint64_t>(m) << 20) ^ n);
  std::vector<double> v(n), u(m);
  for (auto& x : v) x = rng.normal();
  double nv = 0;
  for (double x : v) nv += x * x;
  for (auto& x : v) x /= std::sqrt(nv);

  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    // u = W v
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += w(i, j) * v[j];
      u[i] = s;
    }
    double nu = 0;
    for (double x : u) nu += x * x;
    sigma = std::sqrt(nu);
    if (sigma == 0.0) {  // v landed in the nullspace; restart once
      for (auto& x : v) x = rng.normal();
      nv = 0;
      for (double x : v) nv += x * x;
      for (auto& x : v) x /= std::sqrt(nv);
      continue;
    }
    // v = W^T u, normalized
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < m; ++i) s += w(i, j) * u[i];
      v[j] = s;
    }
    nv = 0;
    for (double x : v) nv += x * x;
    if (nv == 0.0) break;
    for (auto& x : v) x /= std::sqrt(nv);
  }
  return sigma;
}

}  // namespace dsdpg::nets
