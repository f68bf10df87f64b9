#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dsdpg/metrics.hpp"

using namespace dsdpg;
using namespace dsdpg::metrics;

namespace {
EmpiricalDistribution dirac(double x) {
  return EmpiricalDistribution::uniform(Tensor::scalar(x));
}

EmpiricalDistribution random_discrete(Rng& rng, std::size_t n, std::size_t d,
                                      double spread = 1.0) {
  EmpiricalDistribution e;
  e.atoms = rng.normal_tensor(n, d, spread);
  e.weights.resize(n);
  double s = 0;
  for (auto& w : e.weights) {
    w = rng.uniform(0.05, 1.0);
    s += w;
  }
  for (auto& w : e.weights) w /= s;
  // renormalize exactly
  double s2 = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) s2 += e.weights[i];
  e.weights[n - 1] = 1.0 - s2;
  return e;
}
}  // namespace

TEST_CASE("kernel_eval examples") {
  auto mq = KernelSpec::multiquadric(1.0);
  Tensor x = Tensor::row({0.3, -0.7});
  CHECK(kernel_eval(mq, x, x) == doctest::Approx(-1.0));
  CHECK(kernel_eval(mq, Tensor::scalar(0.0), Tensor::scalar(1.0)) ==
        doctest::Approx(-std::sqrt(2.0)));

  auto mix = KernelSpec::rbf_mixture({0.01, 0.05, 0.1, 0.5, 1, 10, 100});
  CHECK(kernel_eval(mix, x, x) == doctest::Approx(7.0));

  CHECK_THROWS(kernel_eval(mq, Tensor::scalar(0.0), Tensor::row({1.0, 2.0})));
  CHECK_THROWS(KernelSpec::multiquadric(0.0));
  CHECK_THROWS(KernelSpec::rbf_mixture({1.0, -2.0}));
}

TEST_CASE("mmd2_biased examples") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(3);
  Tensor x = rng.normal_tensor(6, 2);
  CHECK(mmd2_biased(x, x, mq) == doctest::Approx(0.0).epsilon(1e-12));

  // X={0}, Y={1}: -1 - 1 + 2 sqrt(2)
  CHECK(mmd2_biased(Tensor::scalar(0.0), Tensor::scalar(1.0), mq) ==
        doctest::Approx(2.0 * std::sqrt(2.0) - 2.0));

  // equals the exact oracle on uniform-weight samples
  Tensor y = rng.normal_tensor(4, 2);
  const double est = mmd2_biased(x, y, mq);
  const double oracle = mmd2_exact_discrete(EmpiricalDistribution::uniform(x),
                                            EmpiricalDistribution::uniform(y), mq);
  CHECK(std::fabs(est - oracle) <= 1e-12);
}

TEST_CASE("mmd2_unbiased: hand expansion, degenerate set, statistical center") {
  auto mq = KernelSpec::multiquadric(1.0);
  // X = Y = {0, 1}: within = k(0,1); cross = (k00 + k01 + k10 + k11)/4
  Tensor xy(2, 1);
  xy(1, 0) = 1.0;
  const double k01 = -std::sqrt(2.0), k00 = -1.0;
  const double want = 2.0 * k01 - 2.0 * (2.0 * k00 + 2.0 * k01) / 4.0;
  CHECK(mmd2_unbiased(xy, xy, mq) == doctest::Approx(want).epsilon(1e-12));

  Tensor zz(2, 1);  // X = Y = {0,0}
  CHECK(mmd2_unbiased(zz, zz, mq) == doctest::Approx(0.0));

  CHECK_THROWS(mmd2_unbiased(Tensor::scalar(0.0), xy, mq));

  // mean over trials of the unbiased estimator on equal distributions ~ 0
  Rng rng(11);
  double mean = 0.0;
  std::vector<double> vals;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = rng.normal_tensor(40, 1);
    Tensor b = rng.normal_tensor(40, 1);
    vals.push_back(mmd2_unbiased(a, b, mq));
    mean += vals.back();
  }
  mean /= vals.size();
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= (vals.size() - 1);
  const double se = std::sqrt(var / vals.size());
  CHECK(std::fabs(mean) <= 3.0 * se);
}

TEST_CASE("mmd2_exact_discrete examples") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(5);
  auto mu = random_discrete(rng, 5, 2);
  CHECK(mmd2_exact_discrete(mu, mu, mq) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mmd2_exact_discrete(dirac(0.0), dirac(1.0), mq) ==
        doctest::Approx(2.0 * std::sqrt(2.0) - 2.0));

  EmpiricalDistribution bad = mu;
  bad.weights[0] += 0.5;
  CHECK_THROWS(mmd2_exact_discrete(bad, mu, mq));
}

TEST_CASE("property: symmetry and identity for estimators and oracle") {
  auto mq = KernelSpec::multiquadric(2.0);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rng.normal_tensor(5, 3), y = rng.normal_tensor(7, 3);
    CHECK(mmd2_biased(x, y, mq) == doctest::Approx(mmd2_biased(y, x, mq)).epsilon(1e-12));
    auto mu = random_discrete(rng, 4, 3), nu = random_discrete(rng, 6, 3);
    CHECK(mmd2_exact_discrete(mu, nu, mq) ==
          doctest::Approx(mmd2_exact_discrete(nu, mu, mq)).epsilon(1e-12));
    CHECK(mmd2_exact_discrete(mu, mu, mq) == doctest::Approx(0.0).epsilon(1e-11));
  }
}

TEST_CASE("property: biased estimator is nonnegative up to rounding") {
  auto mq = KernelSpec::multiquadric(100.0);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = rng.normal_tensor(6, 2), y = rng.normal_tensor(6, 2);
    CHECK(mmd2_biased(x, y, mq) >= -1e-9);
  }
}

TEST_CASE("property: scale contraction of MQ-MMD^2 (200 random cases)") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.index(4);
    auto mu = random_discrete(rng, 2 + rng.index(5), d, 2.0);
    auto nu = random_discrete(rng, 2 + rng.index(5), d, 2.0);
    const double s = rng.uniform(0.0, 1.0);
    auto mus = mu, nus = nu;
    for (std::size_t i = 0; i < mus.atoms.size(); ++i) mus.atoms[i] *= s;
    for (std::size_t i = 0; i < nus.atoms.size(); ++i) nus.atoms[i] *= s;
    CHECK(mmd2_exact_discrete(mus, nus, mq) <=
          s * mmd2_exact_discrete(mu, nu, mq) + 1e-9);
  }
}

TEST_CASE("property: translation invariance of MQ-MMD (1e-10)") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.index(3);
    auto mu = random_discrete(rng, 3, d);
    auto nu = random_discrete(rng, 4, d);
    const double base = mmd2_exact_discrete(mu, nu, mq);
    Tensor shift = rng.normal_tensor(1, d, 2.0);
    auto mut = mu, nut = nu;
    for (std::size_t i = 0; i < mut.atoms.rows(); ++i)
      for (std::size_t c = 0; c < d; ++c) mut.atoms(i, c) += shift[c];
    for (std::size_t i = 0; i < nut.atoms.rows(); ++i)
      for (std::size_t c = 0; c < d; ++c) nut.atoms(i, c) += shift[c];
    CHECK(std::fabs(mmd2_exact_discrete(mut, nut, mq) - base) <= 1e-10);
  }
}

TEST_CASE("property: mixture convexity (p = 1) of MQ-MMD") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.index(2);
    const std::size_t comps = 2 + rng.index(2);
    std::vector<EmpiricalDistribution> mus, nus;
    std::vector<double> rho(comps);
    double s = 0;
    for (auto& r : rho) {
      r = rng.uniform(0.1, 1.0);
      s += r;
    }
    for (auto& r : rho) r /= s;
    double rhs = 0.0;
    EmpiricalDistribution mixm, mixn;
    std::vector<double> wm, wn;
    std::vector<std::vector<double>> am, an;
    for (std::size_t c = 0; c < comps; ++c) {
      auto mu = random_discrete(rng, 3, d);
      auto nu = random_discrete(rng, 3, d);
      rhs += rho[c] * std::sqrt(std::max(0.0, mmd2_exact_discrete(mu, nu, mq)));
      for (std::size_t i = 0; i < mu.atoms.rows(); ++i) {
        wm.push_back(rho[c] * mu.weights[i]);
        am.push_back(std::vector<double>(mu.atoms.data() + i * d, mu.atoms.data() + (i + 1) * d));
      }
      for (std::size_t i = 0; i < nu.atoms.rows(); ++i) {
        wn.push_back(rho[c] * nu.weights[i]);
        an.push_back(std::vector<double>(nu.atoms.data() + i * d, nu.atoms.data() + (i + 1) * d));
      }
    }
    mixm.atoms = Tensor(am.size(), d);
    mixm.weights = wm;
    for (std::size_t i = 0; i < am.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) mixm.atoms(i, c) = am[i][c];
    mixn.atoms = Tensor(an.size(), d);
    mixn.weights = wn;
    for (std::size_t i = 0; i < an.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) mixn.atoms(i, c) = an[i][c];
    const double lhs = std::sqrt(std::max(0.0, mmd2_exact_discrete(mixm, mixn, mq)));
    CHECK(lhs <= rhs + 1e-9);
  }
}

TEST_CASE("w1_1d examples") {
  CHECK(w1_1d({0.0}, {1.0}) == doctest::Approx(1.0));
  CHECK(w1_1d({0.5, -2.0, 3.0}, {0.5, -2.0, 3.0}) == doctest::Approx(0.0));
  CHECK(w1_1d({0.0, 2.0}, {1.0, 3.0}) == doctest::Approx(1.0));
  CHECK_THROWS(w1_1d({0.0}, {1.0, 2.0}));
}

TEST_CASE("block_mmd2: forward equals per-block biased estimator, gradients pass FD") {
  auto mq = KernelSpec::multiquadric(1.5);
  Rng rng(23);
  const std::size_t B = 3, m = 4, n = 5, d = 2;
  Tensor x = rng.normal_tensor(B * m, d), y = rng.normal_tensor(B * n, d);
  ad::Tape t;
  int xn = t.leaf(x);
  int yn = t.constant(y);
  int out = block_mmd2(t, xn, yn, B, mq);
  for (std::size_t b = 0; b < B; ++b) {
    Tensor xb(m, d), yb(n, d);
    for (std::size_t i = 0; i < m * d; ++i) xb[i] = x[b * m * d + i];
    for (std::size_t i = 0; i < n * d; ++i) yb[i] = y[b * n * d + i];
    CHECK(t.val(out)(b, 0) == doctest::Approx(mmd2_biased(xb, yb, mq)).epsilon(1e-12));
  }

  auto build = [&](ad::Tape& s, int xl) {
    return s.sum_all(block_mmd2(s, xl, s.constant(y), B, mq));
  };
  CHECK(ad::finite_diff_check(build, x, 1e-6) <= 1e-5);

  // gradient w.r.t. y as well, when y is a leaf
  auto build_y = [&](ad::Tape& s, int yl) {
    return s.sum_all(block_mmd2(s, s.constant(x), yl, B, mq));
  };
  CHECK(ad::finite_diff_check(build_y, y, 1e-6) <= 1e-5);
}

TEST_CASE("msmmd: 1-D equals plain MMD") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(29);
  Tensor x = rng.normal_tensor(8, 1), y = rng.normal_tensor(8, 1, 2.0);
  MsmmdOptions opt;
  opt.steps = 5;
  Rng seed(1);
  auto r = msmmd(x, y, mq, opt, seed);
  CHECK(r.value == doctest::Approx(std::sqrt(std::max(0.0, mmd2_biased(x, y, mq)))).epsilon(1e-10));
}

TEST_CASE("msmmd: identical samples give zero") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(31);
  Tensor x = rng.normal_tensor(6, 3);
  MsmmdOptions opt;
  opt.steps = 10;
  Rng seed(2);
  CHECK(msmmd(x, x, mq, opt, seed).value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("msmmd: 2-D axis-aligned difference found by ascent (vs 360-direction grid)") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(37);
  // distributions differing only along e1
  const std::size_t n = 24;
  Tensor x(n, 2), y(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double shared = rng.normal();
    x(i, 0) = rng.normal() * 0.4;
    y(i, 0) = 2.0 + rng.normal() * 0.4;
    x(i, 1) = shared;
    y(i, 1) = shared;
  }
  MsmmdOptions opt;
  opt.steps = 300;
  opt.lr = 5e-3;
  Rng seed(3);
  auto r = msmmd(x, y, mq, opt, seed);

  const double oracle =
      msmmd_grid(EmpiricalDistribution::uniform(x), EmpiricalDistribution::uniform(y), mq, 360);
  CHECK(std::fabs(r.value - oracle) / oracle <= 0.02);
  const double angle = std::acos(std::min(1.0, std::fabs(r.theta(0, 0))));
  CHECK(angle <= 0.1);
}

TEST_CASE("msmmd: ascent never returns less than the initial direction's value") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = rng.normal_tensor(10, 3), y = rng.normal_tensor(10, 3, 1.5);
    MsmmdOptions opt;
    opt.steps = 50;
    opt.lr = 1e-2;
    Rng seed(100 + trial);
    // initial-direction value with zero steps, same seed
    MsmmdOptions zero = opt;
    zero.steps = 0;
    Rng seed2(100 + trial);
    const double init = msmmd(x, y, mq, zero, seed2).value;
    const double fin = msmmd(x, y, mq, opt, seed).value;
    CHECK(fin >= init - 1e-12);
  }
}

TEST_CASE("block_msmmd2: gradients flow into samples at the stopped directions") {
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(43);
  const std::size_t B = 2, m = 4, n = 4, d = 2;
  Tensor x = rng.normal_tensor(B * m, d), y = rng.normal_tensor(B * n, d);

  // with zero ascent steps the stopped direction is data-independent, so the
  // loss is an exact function of the samples and finite differences apply
  MsmmdOptions frozen;
  frozen.steps = 0;
  auto build = [&](ad::Tape& s, int xl) {
    Rng seed(7);
    return s.sum_all(block_msmmd2(s, xl, s.constant(y), B, mq, frozen, seed));
  };
  CHECK(ad::finite_diff_check(build, x, 1e-6) <= 1e-5);

  // with ascent, the node's value matches mmd2 of the projections along the
  // per-block best directions found by the standalone estimator
  MsmmdOptions opt;
  opt.steps = 40;
  opt.lr = 1e-2;
  ad::Tape t;
  Rng seed_a(7);
  int node = block_msmmd2(t, t.leaf(x), t.constant(y), B, mq, opt, seed_a);
  Rng seed_b(7);
  for (std::size_t b = 0; b < B; ++b) {
    Tensor xb(m, d), yb(n, d);
    for (std::size_t i = 0; i < m * d; ++i) xb[i] = x[b * m * d + i];
    for (std::size_t i = 0; i < n * d; ++i) yb[i] = y[b * n * d + i];
    auto r = msmmd(xb, yb, mq, opt, seed_b);
    CHECK(t.val(node)(b, 0) == doctest::Approx(r.value * r.value).epsilon(1e-9));
  }
}
