#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dsdpg/nets.hpp"

#ifdef DSDPG_HAVE_EIGEN
#include <Eigen/Dense>
#include <Eigen/SVD>
#endif

using namespace dsdpg;
using nets::Activation;

TEST_CASE("swish values") {
  CHECK(nets::swish(Tensor::scalar(0.0)).item() == 0.0);
  // x sigmoid(x) at 10
  CHECK(nets::swish(Tensor::scalar(10.0)).item() == doctest::Approx(9.999546).epsilon(1e-5));
}

TEST_CASE("swish derivative supremum ~ 1.0998") {
  // numeric maximization of d/dx swish over a fine grid
  double best = 0.0;
  for (double x = -6.0; x <= 6.0; x += 1e-4) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    const double d = s + x * s * (1.0 - s);
    best = std::max(best, d);
  }
  CHECK(best == doctest::Approx(1.0998).epsilon(1e-3));
  CHECK(best <= nets::kSwishLipschitz + 1e-6);
}

TEST_CASE("spectral_norm examples") {
  Tensor d(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  CHECK(nets::spectral_norm(d, 100) == doctest::Approx(3.0).epsilon(1e-9));

  Tensor eye(4, 4);
  for (int i = 0; i < 4; ++i) eye(i, i) = 1.0;
  CHECK(nets::spectral_norm(eye, 50) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(nets::spectral_norm(Tensor(3, 5), 10) == 0.0);
  CHECK_THROWS(nets::spectral_norm(eye, 0));
}

TEST_CASE("spectral_norm estimates are non-decreasing in iters") {
  Rng rng(31);
  Tensor w = rng.normal_tensor(6, 4);
  double prev = 0.0;
  for (int it = 1; it <= 20; ++it) {
    const double s = nets::spectral_norm(w, it);
    CHECK(s >= prev - 1e-12);
    prev = s;
  }
}

#ifdef DSDPG_HAVE_EIGEN
TEST_CASE("spectral_norm matches a Jacobi-SVD oracle (rel 1e-6 at 200 iters)") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor w = rng.normal_tensor(5, 5);
    Eigen::MatrixXd m(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) m(i, j) = w(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const double want = svd.singularValues()(0);
    const double got = nets::spectral_norm(w, 200);
    CHECK(std::fabs(got - want) / want <= 1e-6);
  }
}
#endif

namespace {

nets::CriticConfig small_critic_cfg(std::size_t ds = 3, std::size_t da = 2,
                                    std::size_t noise = 4) {
  nets::CriticConfig c;
  c.state_dim = ds;
  c.action_dim = da;
  c.noise_dim = noise;
  c.noise_hidden = {8};
  c.noise_out = 8;
  c.trunk_hidden = {16, 16};
  return c;
}

}  // namespace

TEST_CASE("critic_sobolev_sample: linear critic has constant action-gradient") {
  // zero hidden layers degenerate the trunk to a single linear map
  Rng rng(5);
  nets::CriticConfig cfg;
  cfg.state_dim = 2;
  cfg.action_dim = 2;
  cfg.noise_dim = 0;
  cfg.trunk_hidden = {};
  nets::CriticNet critic(cfg, rng);
  Tensor w(4, 1);
  w(0, 0) = 0.3;
  w(1, 0) = -0.1;
  w(2, 0) = 2.0;  // w_a
  w(3, 0) = -1.5;
  critic.params().get("trunk.w0") = w;

  for (int trial = 0; trial < 3; ++trial) {
    ad::Tape t;
    auto p = nets::const_lookup(t, critic.params());
    int s = t.constant(rng.normal_tensor(1, 2));
    int a = t.leaf(rng.normal_tensor(1, 2));
    auto sob = nets::critic_sobolev_sample(t, p, critic, s, a, -1);
    CHECK(t.val(sob.agrad)(0, 0) == doctest::Approx(2.0));
    CHECK(t.val(sob.agrad)(0, 1) == doctest::Approx(-1.5));
  }
}

TEST_CASE("distributionality: different noise draws give different z at fixed (s,a)") {
  Rng rng(6);
  nets::CriticNet critic(small_critic_cfg(), rng);
  Tensor s = rng.normal_tensor(1, 3), a = rng.normal_tensor(1, 2);
  std::vector<double> zs;
  Rng noise_rng(9);
  for (int k = 0; k < 16; ++k) {
    ad::Tape t;
    auto p = nets::const_lookup(t, critic.params());
    int z = critic.forward(t, p, t.constant(s), t.constant(a),
                           t.constant(noise_rng.normal_tensor(1, 4)));
    zs.push_back(t.val(z).item());
  }
  double mean = 0, var = 0;
  for (double z : zs) mean += z;
  mean /= zs.size();
  for (double z : zs) var += (z - mean) * (z - mean);
  var /= zs.size();
  CHECK(var > 0.0);
}

TEST_CASE("critic action-gradient matches finite differences (rel 1e-4)") {
  Rng rng(8);
  nets::CriticNet critic(small_critic_cfg(), rng);
  Tensor s = rng.normal_tensor(1, 3);
  Tensor xi = rng.normal_tensor(1, 4);
  Tensor a0 = rng.normal_tensor(1, 2);
  auto build = [&](ad::Tape& t, int a) {
    auto p = nets::const_lookup(t, critic.params());
    return critic.forward(t, p, t.constant(s), a, t.constant(xi));
  };
  CHECK(ad::finite_diff_check(build, a0, 1e-5) <= 1e-4);
}

TEST_CASE("policy: zero weights give zero action; outputs always in bounds") {
  Rng rng(10);
  nets::PolicyConfig cfg;
  cfg.state_dim = 4;
  cfg.action_dim = 2;
  cfg.hidden = {16, 16};
  nets::PolicyNet policy(cfg, rng);

  // zero every parameter -> tanh(0) = 0
  for (std::size_t i = 0; i < policy.params().count(); ++i) {
    Tensor& p = policy.params().tensor_at(i);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = 0.0;
  }
  Tensor a = policy.act(rng.normal_tensor(1, 4));
  CHECK(a(0, 0) == 0.0);
  CHECK(a(0, 1) == 0.0);

  // extreme weights never push the action past the bounds (tanh saturates to
  // exactly +-1 in f64 for huge pre-activations)
  nets::PolicyNet wild(cfg, rng);
  for (std::size_t i = 0; i < wild.params().count(); ++i) {
    Tensor& p = wild.params().tensor_at(i);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] *= 50.0;
  }
  Rng probe(11);
  bool in_bounds = true;
  for (int k = 0; k < 10000; ++k) {
    Tensor act = wild.act(probe.normal_tensor(1, 4, 3.0));
    for (std::size_t j = 0; j < act.size(); ++j)
      in_bounds = in_bounds && act[j] <= 1.0 && act[j] >= -1.0;
  }
  CHECK(in_bounds);

  // moderate weights stay strictly inside the open interval
  nets::PolicyNet mild(cfg, rng);
  bool strictly_inside = true;
  for (int k = 0; k < 1000; ++k) {
    Tensor act = mild.act(probe.normal_tensor(1, 4));
    for (std::size_t j = 0; j < act.size(); ++j)
      strictly_inside = strictly_inside && act[j] < 1.0 && act[j] > -1.0;
  }
  CHECK(strictly_inside);
}

TEST_CASE("policy jacobian w.r.t. state matches finite differences") {
  Rng rng(12);
  nets::PolicyConfig cfg;
  cfg.state_dim = 3;
  cfg.action_dim = 2;
  cfg.hidden = {12};
  nets::PolicyNet policy(cfg, rng);
  Tensor s0 = rng.normal_tensor(1, 3);
  for (std::size_t c = 0; c < 2; ++c) {
    auto build = [&](ad::Tape& t, int s) {
      auto p = nets::const_lookup(t, policy.params());
      return t.slice_cols(policy.forward(t, p, s), c, c + 1);
    };
    CHECK(ad::finite_diff_check(build, s0, 1e-5) <= 1e-4);
  }
}

TEST_CASE("lipschitz_bound examples") {
  Rng rng(13);
  // single linear layer with spectral norm 3
  nets::MlpConfig mc;
  mc.in_dim = 2;
  mc.hidden = {};
  mc.out_dim = 2;
  nets::Mlp lin(mc, "m");
  ParamStore ps;
  lin.init(ps, rng);
  Tensor w(2, 2);
  w(0, 0) = 3.0;
  w(1, 1) = 1.0;
  ps.get("m.w0") = w;
  CHECK(lin.lipschitz_bound(ps) == doctest::Approx(3.0).epsilon(1e-9));

  // two layers, norms 2 and 3, swish between: 2 * 1.0998 * 3
  nets::MlpConfig mc2;
  mc2.in_dim = 2;
  mc2.hidden = {2};
  mc2.out_dim = 2;
  mc2.hidden_act = Activation::Swish;
  nets::Mlp two(mc2, "m");
  ParamStore ps2;
  two.init(ps2, rng);
  Tensor w1(2, 2), w2(2, 2);
  w1(0, 0) = 2.0;
  w1(1, 1) = 2.0;
  w2(0, 0) = 3.0;
  w2(1, 1) = 3.0;
  ps2.get("m.w0") = w1;
  ps2.get("m.w1") = w2;
  CHECK(two.lipschitz_bound(ps2) == doctest::Approx(2.0 * nets::kSwishLipschitz * 3.0).epsilon(1e-6));
}

TEST_CASE("property: lipschitz_bound dominates empirical slopes") {
  Rng rng(14);
  for (int trial = 0; trial < 4; ++trial) {
    nets::CriticNet critic(small_critic_cfg(), rng);
    const double k = critic.lipschitz_bound();
    Rng probe(100 + trial);
    double max_slope = 0.0;
    for (int pair = 0; pair < 500; ++pair) {
      Tensor x1 = probe.normal_tensor(1, 9), x2 = probe.normal_tensor(1, 9);
      auto eval = [&](const Tensor& x) {
        ad::Tape t;
        auto p = nets::const_lookup(t, critic.params());
        int s = t.constant(Tensor::row({x[0], x[1], x[2]}));
        int a = t.constant(Tensor::row({x[3], x[4]}));
        int xi = t.constant(Tensor::row({x[5], x[6], x[7], x[8]}));
        return t.val(critic.forward(t, p, s, a, xi)).item();
      };
      double dist = 0.0;
      for (std::size_t j = 0; j < 9; ++j) {
        const double d = x1[j] - x2[j];
        dist += d * d;
      }
      dist = std::sqrt(dist);
      if (dist < 1e-9) continue;
      max_slope = std::max(max_slope, std::fabs(eval(x1) - eval(x2)) / dist);
    }
    CHECK(k >= max_slope);
  }
}

TEST_CASE("skip connections change the forward pass and stay differentiable") {
  Rng rng(15);
  nets::MlpConfig mc;
  mc.in_dim = 3;
  mc.hidden = {8, 8};
  mc.out_dim = 1;
  mc.skip_from_input = true;
  nets::Mlp mlp(mc, "m");
  ParamStore ps;
  mlp.init(ps, rng);
  CHECK(ps.get("m.w1").rows() == 8 + 3);  // [h; x] input to layer 2

  Tensor x0 = rng.normal_tensor(1, 3);
  auto build = [&](ad::Tape& t, int x) {
    auto p = nets::const_lookup(t, ps);
    return mlp.forward(t, p, x);
  };
  CHECK(ad::finite_diff_check(build, x0, 1e-5) <= 1e-4);
}
