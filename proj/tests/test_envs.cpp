#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "dsdpg/envs.hpp"

using namespace dsdpg;
using namespace dsdpg::envs;

namespace {

// PD controller toward a target point
Tensor drive_toward(const Tensor& obs, double tx, double ty) {
  const double px = obs[0], py = obs[1], vx = obs[2], vy = obs[3];
  Tensor a(1, 2);
  a(0, 0) = std::clamp(1.6 * (tx - px) - 1.1 * vx, -1.0, 1.0);
  a(0, 1) = std::clamp(1.6 * (ty - py) - 1.1 * vy, -1.0, 1.0);
  return a;
}

// visit sites 0..M-1 in order, switching targets once a site's flag is set
Tensor scripted_action(const ToyEnv& env, const Tensor& obs) {
  const int m = env.config().bonus_sites;
  int target = 0;
  while (target < m && obs[4 + target] > 0.5) ++target;
  if (target >= m) target = m - 1;
  auto [sx, sy] = env.site(target);
  return drive_toward(obs, sx, sy);
}

}  // namespace

TEST_CASE("toy_reset: observation layout and initial state") {
  ToyEnv env({.bonus_sites = 3}, Rng(1));
  Tensor obs = env.reset();
  CHECK(obs.size() == 7);  // 2 + 2 + M
  CHECK(env.obs_dim() == 7);
  for (int k = 0; k < 3; ++k) CHECK(obs[4 + k] == 0.0);
  CHECK(obs[2] == 0.0);
  CHECK(obs[3] == 0.0);
  CHECK_THROWS(ToyEnv({.bonus_sites = 0}, Rng(1)));
}

TEST_CASE("toy_reset: positions uniform over the init square (KS test)") {
  ToyEnv env({.bonus_sites = 4}, Rng(7));
  const int n = 10000;
  std::vector<double> xs, ys;
  for (int i = 0; i < n; ++i) {
    Tensor obs = env.reset();
    xs.push_back(obs[0]);
    ys.push_back(obs[1]);
  }
  auto ks_uniform = [&](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      const double cdf = (v[i] + 1.0) / 2.0;  // U[-1, 1]
      d = std::max(d, std::fabs(cdf - double(i + 1) / n));
      d = std::max(d, std::fabs(cdf - double(i) / n));
    }
    return d;
  };
  const double crit = 1.63 / std::sqrt(double(n));  // alpha = 0.01
  CHECK(ks_uniform(xs) < crit);
  CHECK(ks_uniform(ys) < crit);
}

TEST_CASE("toy_step: reaching the active bonus pays 10 and terminates") {
  ToyEnv env({.bonus_sites = 3}, Rng(3));
  env.reset();
  auto [sx, sy] = env.site(env.active_site());
  env.teleport(sx, sy);  // stepping keeps it within the capture radius
  Tensor zero(1, 2);
  auto res = env.step(zero);
  CHECK(res.reward == 10.0);
  CHECK(res.terminal);
  CHECK(res.episode_over);
}

TEST_CASE("toy_step: leaving the box ends the episode with zero reward") {
  ToyEnv env({.bonus_sites = 3}, Rng(4));
  env.reset();
  env.teleport(2.8, 0.0, 2.0, 0.0);  // p' = 2.8 + 0.5*1.9 = 3.75 > 3
  Tensor zero(1, 2);
  auto res = env.step(zero);
  CHECK(res.reward == 0.0);
  CHECK(res.terminal);
  CHECK(res.obs[0] == doctest::Approx(3.75));
}

TEST_CASE("toy_step: Euler integration with friction") {
  ToyEnv env({.bonus_sites = 3}, Rng(5));
  env.reset();
  env.teleport(0.0, 0.0, 1.0, 0.0);
  Tensor zero(1, 2);
  auto res = env.step(zero);
  CHECK(res.obs[2] == doctest::Approx(0.95));   // v' = 1 - 0.5*0.1*1
  CHECK(res.obs[0] == doctest::Approx(0.475));  // p' = 0 + 0.5*0.95
  CHECK_FALSE(res.episode_over);

  Tensor bad(1, 2);
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(env.step(bad));
}

TEST_CASE("episodes never exceed 25 steps; flags are monotone") {
  Rng action_rng(9);
  ToyEnv env({.bonus_sites = 5}, Rng(10));
  for (int ep = 0; ep < 50; ++ep) {
    Tensor obs = env.reset();
    std::vector<double> flags(5, 0.0);
    int steps = 0;
    while (true) {
      auto res = env.step(action_rng.uniform_tensor(1, 2, -1.0, 1.0));
      ++steps;
      for (int k = 0; k < 5; ++k) {
        CHECK(res.obs[4 + k] >= flags[k]);  // never unset
        flags[k] = res.obs[4 + k];
      }
      if (res.episode_over) break;
    }
    CHECK(steps <= 25);
  }
}

TEST_CASE("scripted visit-all policy: return distribution has exactly M levels") {
  // fixed start makes capture times deterministic per active-site outcome
  const int m = 3;
  ToyConfig cfg;
  cfg.bonus_sites = m;
  cfg.init_half_width = 0.0;
  ToyEnv env(cfg, Rng(11));
  const double gamma = 0.9;
  std::set<long long> levels;
  std::set<int> actives;
  int captures = 0;
  for (int ep = 0; ep < 10000; ++ep) {
    Tensor obs = env.reset();
    actives.insert(env.active_site());
    double ret = 0.0, disc = 1.0;
    while (true) {
      auto res = env.step(scripted_action(env, obs));
      ret += disc * res.reward;
      disc *= gamma;
      obs = res.obs;
      if (res.episode_over) {
        if (res.reward > 0) ++captures;
        break;
      }
    }
    levels.insert(llround(ret * 1e9));
  }
  CHECK(captures == 10000);      // the script reaches the active site every time
  CHECK(actives.size() == m);    // all outcomes drawn
  CHECK(levels.size() == m);     // one discounted-return level per outcome
}

TEST_CASE("analytic_fixed_point examples") {
  AnalyticEnv env{0.5, 1.0, 0.9};
  auto z0 = analytic_fixed_point(env, 0.0, 0.0);
  CHECK(z0.ret == 0.0);
  CHECK(z0.agrad[0] == 0.0);
  CHECK(z0.sgrad[0] == 0.0);

  AnalyticEnv nobeta{0.5, 0.0, 0.9};
  auto h = analytic_fixed_point(nobeta, 0.7, 0.3);
  CHECK(h.agrad[0] == doctest::Approx(-2.0 * 0.3));

  auto fp = analytic_fixed_point(env, 1.0, 0.0);
  CHECK(fp.ret == doctest::Approx(-0.9 * 0.25 / (1.0 - 0.225)));

  // brute-force rollout oracle
  auto roll = analytic_rollout(env, 1.0, 0.0, 200);
  CHECK(fp.ret == doctest::Approx(roll.ret).epsilon(1e-10));
  CHECK(fp.agrad[0] == doctest::Approx(roll.agrad[0]).epsilon(1e-10));
  CHECK(fp.sgrad[0] == doctest::Approx(roll.sgrad[0]).epsilon(1e-10));

  AnalyticEnv divergent{1.2, 1.0, 0.9};
  CHECK_THROWS(analytic_fixed_point(divergent, 0.0, 0.0));
}

TEST_CASE("fixed point satisfies complete-backup self-consistency on a grid") {
  AnalyticEnv env{0.5, 1.0, 0.9};
  for (double s = -1.0; s <= 1.0; s += 0.5) {
    for (double a = -1.0; a <= 1.0; a += 0.5) {
      auto next = analytic_fixed_point(env, env.next_state(s, a), 0.0);
      auto back = bellman::complete_backup(env.jacobians(s, a), env.reward(s, a),
                                           env.gamma, next);
      auto want = analytic_fixed_point(env, s, a);
      CHECK(std::fabs(back.ret - want.ret) <= 1e-10);
      CHECK(std::fabs(back.agrad[0] - want.agrad[0]) <= 1e-10);
      CHECK(std::fabs(back.sgrad[0] - want.sgrad[0]) <= 1e-10);
    }
  }
}

TEST_CASE("rollout oracle matches finite differences of the rollout return") {
  AnalyticEnv env{0.6, 0.8, 0.85};
  const double s = 0.4, a = -0.7, eps = 1e-6;
  auto mid = analytic_rollout(env, s, a, 150);
  auto up = analytic_rollout(env, s, a + eps, 150);
  auto dn = analytic_rollout(env, s, a - eps, 150);
  CHECK(mid.agrad[0] == doctest::Approx((up.ret - dn.ret) / (2 * eps)).epsilon(1e-6));
  auto us = analytic_rollout(env, s + eps, a, 150);
  auto ds = analytic_rollout(env, s - eps, a, 150);
  CHECK(mid.sgrad[0] == doctest::Approx((us.ret - ds.ret) / (2 * eps)).epsilon(1e-6));
}
