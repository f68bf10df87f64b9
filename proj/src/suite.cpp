#include "dsdpg/suite.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <sstream>

#include "dsdpg/bellman.hpp"
#include "json.hpp"

namespace dsdpg::suite {

using metrics::EmpiricalDistribution;
using metrics::KernelSpec;

namespace {

EmpiricalDistribution random_discrete(Rng& rng, std::size_t n, std::size_t d,
                                      double spread) {
  EmpiricalDistribution e;
  e.atoms = rng.normal_tensor(n, d, spread);
  e.weights.resize(n);
  double s = 0;
  for (auto& w : e.weights) {
    w = rng.uniform(0.05, 1.0);
    s += w;
  }
  for (auto& w : e.weights) w /= s;
  double partial = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) partial += e.weights[i];
  e.weights[n - 1] = 1.0 - partial;
  return e;
}

std::string describe(const EmpiricalDistribution& mu) {
  std::ostringstream os;
  os.precision(6);
  os << "atoms[" << mu.atoms.rows() << "x" << mu.atoms.cols() << "]=";
  for (std::size_t i = 0; i < std::min<std::size_t>(mu.atoms.size(), 8); ++i)
    os << mu.atoms[i] << " ";
  return os.str();
}

}  // namespace

bool SuiteReport::all_pass() const {
  for (const auto& p : properties)
    if (!p.pass) return false;
  return true;
}

std::string SuiteReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["all_pass"] = all_pass();
  auto arr = nlohmann::json::array();
  for (const auto& p : properties) {
    nlohmann::json e;
    e["name"] = p.name;
    e["pass"] = p.pass;
    e["cases"] = p.cases;
    e["worst_measured"] = p.worst_measured;
    e["bound"] = p.bound;
    if (!p.counterexample.empty()) e["counterexample"] = p.counterexample;
    arr.push_back(e);
  }
  j["properties"] = arr;
  return j.dump(2);
}

PropertyResult prop_identity_symmetry(std::uint64_t seed, long cases) {
  PropertyResult res;
  res.name = "mmd_identity_and_symmetry";
  res.bound = 1e-11;
  res.pass = true;
  Rng rng(seed);
  auto mq = KernelSpec::multiquadric(1.0);
  for (long c = 0; c < cases; ++c) {
    const std::size_t d = 1 + rng.index(3);
    auto mu = random_discrete(rng, 2 + rng.index(4), d, 1.0);
    auto nu = random_discrete(rng, 2 + rng.index(4), d, 1.0);
    const double ab = metrics::mmd2_exact_discrete(mu, nu, mq);
    const double ba = metrics::mmd2_exact_discrete(nu, mu, mq);
    const double self = std::fabs(metrics::mmd2_exact_discrete(mu, mu, mq));
    const double viol = std::max(std::fabs(ab - ba), self);
    res.worst_measured = std::max(res.worst_measured, viol);
    if (viol > res.bound && res.pass) {
      res.pass = false;
      res.counterexample = describe(mu);
    }
    ++res.cases;
  }
  return res;
}

PropertyResult prop_scale_contraction(std::uint64_t seed, long cases) {
  PropertyResult res;
  res.name = "mq_scale_contraction";
  res.bound = 1e-9;
  res.pass = true;
  Rng rng(seed);
  auto mq = KernelSpec::multiquadric(1.0);
  for (long c = 0; c < cases; ++c) {
    const std::size_t d = 1 + rng.index(4);
    auto mu = random_discrete(rng, 2 + rng.index(5), d, 2.0);
    auto nu = random_discrete(rng, 2 + rng.index(5), d, 2.0);
    const double s = rng.uniform(0.0, 1.0);
    auto mus = mu, nus = nu;
    for (std::size_t i = 0; i < mus.atoms.size(); ++i) mus.atoms[i] *= s;
    for (std::size_t i = 0; i < nus.atoms.size(); ++i) nus.atoms[i] *= s;
    const double lhs = metrics::mmd2_exact_discrete(mus, nus, mq);
    const double rhs = s * metrics::mmd2_exact_discrete(mu, nu, mq);
    const double viol = lhs - rhs;
    res.worst_measured = std::max(res.worst_measured, viol);
    if (viol > res.bound && res.pass) {
      res.pass = false;
      std::ostringstream os;
      os << "s=" << s << " " << describe(mu);
      res.counterexample = os.str();
    }
    ++res.cases;
  }
  return res;
}

PropertyResult prop_translation_invariance(std::uint64_t seed, long cases) {
  PropertyResult res;
  res.name = "mq_translation_invariance";
  res.bound = 1e-10;
  res.pass = true;
  Rng rng(seed);
  auto mq = KernelSpec::multiquadric(1.0);
  for (long c = 0; c < cases; ++c) {
    const std::size_t d = 1 + rng.index(3);
    auto mu = random_discrete(rng, 3, d, 1.0);
    auto nu = random_discrete(rng, 4, d, 1.0);
    const double base = metrics::mmd2_exact_discrete(mu, nu, mq);
    Tensor t = rng.normal_tensor(1, d, 2.0);
    auto mut = mu, nut = nu;
    for (std::size_t i = 0; i < mut.atoms.rows(); ++i)
      for (std::size_t k = 0; k < d; ++k) mut.atoms(i, k) += t[k];
    for (std::size_t i = 0; i < nut.atoms.rows(); ++i)
      for (std::size_t k = 0; k < d; ++k) nut.atoms(i, k) += t[k];
    const double viol = std::fabs(metrics::mmd2_exact_discrete(mut, nut, mq) - base);
    res.worst_measured = std::max(res.worst_measured, viol);
    if (viol > res.bound && res.pass) {
      res.pass = false;
      res.counterexample = describe(mu);
    }
    ++res.cases;
  }
  return res;
}

PropertyResult prop_mixture_convexity(std::uint64_t seed, long cases) {
  PropertyResult res;
  res.name = "mq_mixture_convexity";
  res.bound = 1e-9;
  res.pass = true;
  Rng rng(seed);
  auto mq = KernelSpec::multiquadric(1.0);
  for (long c = 0; c < cases; ++c) {
    const std::size_t d = 1 + rng.index(2);
    const std::size_t comps = 2 + rng.index(2);
    std::vector<double> rho(comps);
    double s = 0;
    for (auto& r : rho) {
      r = rng.uniform(0.1, 1.0);
      s += r;
    }
    for (auto& r : rho) r /= s;
    double rhs = 0.0;
    std::vector<double> wm, wn;
    std::vector<std::vector<double>> am, an;
    for (std::size_t k = 0; k < comps; ++k) {
      auto mu = random_discrete(rng, 3, d, 1.0);
      auto nu = random_discrete(rng, 3, d, 1.0);
      rhs += rho[k] * std::sqrt(std::max(0.0, metrics::mmd2_exact_discrete(mu, nu, mq)));
      for (std::size_t i = 0; i < mu.atoms.rows(); ++i) {
        wm.push_back(rho[k] * mu.weights[i]);
        am.emplace_back(mu.atoms.data() + i * d, mu.atoms.data() + (i + 1) * d);
      }
      for (std::size_t i = 0; i < nu.atoms.rows(); ++i) {
        wn.push_back(rho[k] * nu.weights[i]);
        an.emplace_back(nu.atoms.data() + i * d, nu.atoms.data() + (i + 1) * d);
      }
    }
    EmpiricalDistribution mixm, mixn;
    mixm.atoms = Tensor(am.size(), d);
    mixm.weights = wm;
    for (std::size_t i = 0; i < am.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) mixm.atoms(i, k) = am[i][k];
    mixn.atoms = Tensor(an.size(), d);
    mixn.weights = wn;
    for (std::size_t i = 0; i < an.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) mixn.atoms(i, k) = an[i][k];
    const double lhs = std::sqrt(std::max(0.0, metrics::mmd2_exact_discrete(mixm, mixn, mq)));
    const double viol = lhs - rhs;
    res.worst_measured = std::max(res.worst_measured, viol);
    if (viol > res.bound && res.pass) {
      res.pass = false;
      res.counterexample = describe(mixm);
    }
    ++res.cases;
  }
  return res;
}

PropertyResult prop_msmmd_monotone(std::uint64_t seed, long cases) {
  PropertyResult res;
  res.name = "msmmd_ascent_nondecreasing";
  res.bound = 1e-12;
  res.pass = true;
  Rng rng(seed);
  auto mq = KernelSpec::multiquadric(1.0);
  for (long c = 0; c < cases; ++c) {
    Tensor x = rng.normal_tensor(8, 3), y = rng.normal_tensor(8, 3, 1.5);
    metrics::MsmmdOptions opt;
    opt.steps = 40;
    opt.lr = 1e-2;
    metrics::MsmmdOptions zero = opt;
    zero.steps = 0;
    Rng s1(seed + 1000 + c), s2(seed + 1000 + c);
    const double init = metrics::msmmd(x, y, mq, zero, s1).value;
    const double fin = metrics::msmmd(x, y, mq, opt, s2).value;
    const double viol = init - fin;
    res.worst_measured = std::max(res.worst_measured, viol);
    if (viol > res.bound && res.pass) {
      res.pass = false;
      res.counterexample = "trial " + std::to_string(c);
    }
    ++res.cases;
  }
  return res;
}

PropertyResult prop_biased_nonneg(std::uint64_t seed, long cases) {
  PropertyResult res;
  res.name = "mmd2_biased_nonnegative";
  res.bound = -1e-9;
  res.pass = true;
  Rng rng(seed);
  auto mq = KernelSpec::multiquadric(100.0);
  double worst = 1e30;
  for (long c = 0; c < cases; ++c) {
    Tensor x = rng.normal_tensor(6, 2), y = rng.normal_tensor(6, 2);
    const double v = metrics::mmd2_biased(x, y, mq);
    worst = std::min(worst, v);
    if (v < res.bound && res.pass) {
      res.pass = false;
      res.counterexample = "trial " + std::to_string(c);
    }
    ++res.cases;
  }
  res.worst_measured = worst;
  return res;
}

namespace {

// Matrix route for the complete operator: b_full + L_full x with
// L_full = gamma [[1,0,0],[0, f_a^T pi_s^T, f_a^T],[0, f_s^T pi_s^T, f_s^T]]
// (scalar state/action dims).
std::array<double, 3> matrix_backup(const envs::AnalyticEnv& env, double s, double a,
                                    const std::array<double, 3>& x) {
  const double fa = env.beta, fs = env.rho, pis = 0.0, g = env.gamma;
  const double l[3][3] = {{g, 0, 0},
                          {0, g * fa * pis, g * fa},
                          {0, g * fs * pis, g * fs}};
  std::array<double, 3> b{env.reward(s, a), env.reward_da(s, a), env.reward_ds(s, a)};
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) {
    out[i] = b[i];
    for (int j = 0; j < 3; ++j) out[i] += l[i][j] * x[j];
  }
  return out;
}

}  // namespace

PropertyResult prop_dirac_pushforward(std::uint64_t seed, long cases) {
  PropertyResult res;
  res.name = "dirac_pushforward_equals_backup";
  res.bound = 0.0;  // exact equality of the two algebraic routes
  res.pass = true;
  Rng rng(seed);
  envs::AnalyticEnv env{0.5, 0.5, 0.9};
  for (long c = 0; c < cases; ++c) {
    const double s = rng.uniform(-1, 1), a = rng.uniform(-1, 1);
    std::array<double, 3> x{rng.normal(), rng.normal(), rng.normal()};
    auto want = matrix_backup(env, s, a, x);
    bellman::SobolevSample h{x[0], {x[1]}, {x[2]}};
    auto got = bellman::complete_backup(env.jacobians(s, a), env.reward(s, a),
                                        env.gamma, h);
    const double viol = std::max({std::fabs(got.ret - want[0]),
                                  std::fabs(got.agrad[0] - want[1]),
                                  std::fabs(got.sgrad[0] - want[2])});
    res.worst_measured = std::max(res.worst_measured, viol);
    if (viol > res.bound && res.pass) {
      res.pass = false;
      res.counterexample = "s=" + std::to_string(s) + " a=" + std::to_string(a);
    }
    ++res.cases;
  }
  return res;
}

PropertyResult prop_operator_fixed_point(const envs::AnalyticEnv& env, int iters) {
  PropertyResult res;
  res.name = "operator_fixed_point_rate";
  const double rate = env.gamma * env.kappa_full();
  res.bound = rate + 0.02;
  res.pass = rate < 1.0;
  if (!res.pass) {
    res.counterexample = "gamma kappa_full >= 1, no contraction certificate";
    return res;
  }

  std::function<bellman::SobolevSample(double, double, int)> iterate =
      [&](double s, double a, int k) -> bellman::SobolevSample {
    if (k == 0) return bellman::SobolevSample{0.0, {0.0}, {0.0}};
    auto next = iterate(env.next_state(s, a), 0.0, k - 1);
    return bellman::complete_backup(env.jacobians(s, a), env.reward(s, a), env.gamma,
                                    next);
  };
  auto sup_err = [&](int k) {
    double worst = 0.0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const double s = -1.0 + 0.5 * i, a = -1.0 + 0.5 * j;
        auto h = iterate(s, a, k);
        auto fp = envs::analytic_fixed_point(env, s, a);
        worst = std::max(worst, std::sqrt(std::pow(h.ret - fp.ret, 2) +
                                          std::pow(h.agrad[0] - fp.agrad[0], 2) +
                                          std::pow(h.sgrad[0] - fp.sgrad[0], 2)));
      }
    return worst;
  };

  double prev = sup_err(0);
  for (int k = 1; k <= iters; ++k) {
    const double cur = sup_err(k);
    const double ratio = prev > 1e-300 ? cur / prev : 0.0;
    res.worst_measured = std::max(res.worst_measured, ratio);
    if (ratio > res.bound && res.pass) {
      res.pass = false;
      res.counterexample = "iteration " + std::to_string(k);
    }
    prev = cur;
    ++res.cases;
  }
  return res;
}

PropertyResult prop_msmmd_contraction(const envs::AnalyticEnv& env, std::uint64_t seed,
                                      int trials) {
  PropertyResult res;
  res.name = "empirical_msmmd_contraction";
  const double rate = env.gamma * env.kappa_full();
  res.bound = std::sqrt(rate) * 1.05;
  res.pass = rate < 1.0;
  if (!res.pass) {
    res.counterexample = "gamma kappa_full >= 1";
    return res;
  }
  auto mq = KernelSpec::multiquadric(1.0);
  Rng rng(seed);
  const std::size_t n_atoms = 5, n_dirs = 2048;

  // random smooth distribution map: atoms_j(s, a) = u_j + V_j [s; a]
  struct DistMap {
    std::vector<std::array<double, 3>> u;
    std::vector<std::array<double, 6>> v;
    EmpiricalDistribution at(double s, double a) const {
      EmpiricalDistribution e;
      e.atoms = Tensor(u.size(), 3);
      e.weights.assign(u.size(), 1.0 / double(u.size()));
      for (std::size_t j = 0; j < u.size(); ++j)
        for (int c = 0; c < 3; ++c)
          e.atoms(j, c) = u[j][c] + v[j][2 * c] * s + v[j][2 * c + 1] * a;
      return e;
    }
  };
  auto random_map = [&](Rng& r) {
    DistMap m;
    for (std::size_t j = 0; j < n_atoms; ++j) {
      m.u.push_back({r.normal(), r.normal(), r.normal()});
      std::array<double, 6> vj;
      for (auto& x : vj) x = 0.5 * r.normal();
      m.v.push_back(vj);
    }
    return m;
  };
  auto apply_op = [&](const DistMap& m, double s, double a) {
    // (T eta)(s, a): pushforward of eta(f(s,a), 0) through b + L x
    EmpiricalDistribution next = m.at(env.next_state(s, a), 0.0);
    EmpiricalDistribution out = next;
    for (std::size_t j = 0; j < next.atoms.rows(); ++j) {
      std::array<double, 3> x{next.atoms(j, 0), next.atoms(j, 1), next.atoms(j, 2)};
      auto y = matrix_backup(env, s, a, x);
      for (int c = 0; c < 3; ++c) out.atoms(j, c) = y[c];
    }
    return out;
  };

  const double grid[3] = {-1.0, 0.0, 1.0};
  for (int trial = 0; trial < trials; ++trial) {
    DistMap eta1 = random_map(rng), eta2 = random_map(rng);
    double before = 0.0, after = 0.0;
    for (double s : grid)
      for (double a : grid) {
        before = std::max(before,
                          metrics::msmmd_grid(eta1.at(s, a), eta2.at(s, a), mq, n_dirs));
        // include successor points: the theorem's right side is a sup over all (s,a)
        const double sn = env.next_state(s, a);
        before = std::max(before,
                          metrics::msmmd_grid(eta1.at(sn, 0.0), eta2.at(sn, 0.0), mq, n_dirs));
        after = std::max(after, metrics::msmmd_grid(apply_op(eta1, s, a),
                                                    apply_op(eta2, s, a), mq, n_dirs));
      }
    const double ratio = before > 1e-300 ? after / before : 0.0;
    res.worst_measured = std::max(res.worst_measured, ratio);
    if (ratio > res.bound && res.pass) {
      res.pass = false;
      res.counterexample = "trial " + std::to_string(trial);
    }
    ++res.cases;
  }
  return res;
}

PropertyResult prop_truncation_monotone(std::uint64_t seed, long cases) {
  PropertyResult res;
  res.name = "truncation_monotone";
  res.bound = 0.0;
  res.pass = true;
  Rng rng(seed);
  for (long c = 0; c < cases; ++c) {
    bellman::TargetSet in;
    const std::size_t n = 4 + rng.index(30);
    in.samples = rng.normal_tensor(n, 2, 3.0);
    const double pct = rng.uniform(0.0, 99.0);
    auto out = bellman::truncate_top_p(in, pct);
    double max_in = -1e300, max_out = -1e300;
    for (std::size_t i = 0; i < in.samples.rows(); ++i)
      max_in = std::max(max_in, in.samples(i, 0));
    for (std::size_t i = 0; i < out.samples.rows(); ++i)
      max_out = std::max(max_out, out.samples(i, 0));
    const double viol = max_out - max_in;
    res.worst_measured = std::max(res.worst_measured, viol);
    if (viol > res.bound && res.pass) {
      res.pass = false;
      res.counterexample = "case " + std::to_string(c);
    }
    ++res.cases;
  }
  return res;
}

PropertyResult prop_broken_kernel_detected(std::uint64_t seed) {
  PropertyResult res;
  res.name = "broken_kernel_sanity_inversion";
  res.cases = 1;
  Rng rng(seed);
  // a positive multiquadric (sign flipped) violates identity of
  // indiscernibles: MMD^2(P, Q) for P != Q goes negative
  auto mu = random_discrete(rng, 3, 2, 1.0);
  auto nu = random_discrete(rng, 4, 2, 1.0);
  auto mq = KernelSpec::multiquadric(1.0);
  double flipped = -metrics::mmd2_exact_discrete(mu, nu, mq);  // sign-flipped kernel
  res.worst_measured = flipped;
  res.bound = 0.0;
  res.pass = flipped < 0.0;  // the suite must flag this as a failure signal
  if (!res.pass) res.counterexample = describe(mu);
  return res;
}

SuiteReport contraction_suite(std::uint64_t seed, int sizes) {
  const long n = 200L * std::max(1, sizes);
  SuiteReport rep;
  rep.properties.push_back(prop_identity_symmetry(seed + 1, n));
  rep.properties.push_back(prop_scale_contraction(seed + 2, n));
  rep.properties.push_back(prop_translation_invariance(seed + 3, n));
  rep.properties.push_back(prop_mixture_convexity(seed + 4, n));
  rep.properties.push_back(prop_msmmd_monotone(seed + 5, std::max(5L, n / 40)));
  rep.properties.push_back(prop_biased_nonneg(seed + 6, n));
  rep.properties.push_back(prop_dirac_pushforward(seed + 7, n));
  rep.properties.push_back(prop_truncation_monotone(seed + 8, n));
  envs::AnalyticEnv env{0.5, 0.5, 0.9};
  rep.properties.push_back(prop_operator_fixed_point(env, 20));
  rep.properties.push_back(prop_msmmd_contraction(env, seed + 9, 20 * std::max(1, sizes)));
  rep.properties.push_back(prop_broken_kernel_detected(seed + 10));
  return rep;
}

}  // namespace dsdpg::suite
