#include "dsdpg/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace dsdpg::envs {

ToyEnv::ToyEnv(ToyConfig cfg, Rng rng) : cfg_(cfg), rng_(rng) {
  if (cfg_.bonus_sites < 1) throw std::invalid_argument("ToyEnv: M must be >= 1");
  flags_.assign(cfg_.bonus_sites, 0);
}

std::pair<double, double> ToyEnv::site(int k) const {
  const double ang = 2.0 * M_PI * double(k) / double(cfg_.bonus_sites);
  return {cfg_.site_circle_radius * std::cos(ang), cfg_.site_circle_radius * std::sin(ang)};
}

Tensor ToyEnv::observe() const {
  Tensor obs(1, obs_dim());
  obs(0, 0) = px_;
  obs(0, 1) = py_;
  obs(0, 2) = vx_;
  obs(0, 3) = vy_;
  for (int k = 0; k < cfg_.bonus_sites; ++k) obs(0, 4 + k) = flags_[k] ? 1.0 : 0.0;
  return obs;
}

Tensor ToyEnv::reset() {
  px_ = rng_.uniform(-cfg_.init_half_width, cfg_.init_half_width);
  py_ = rng_.uniform(-cfg_.init_half_width, cfg_.init_half_width);
  vx_ = vy_ = 0.0;
  std::fill(flags_.begin(), flags_.end(), 0);
  active_ = static_cast<int>(rng_.index(cfg_.bonus_sites));
  steps_ = 0;
  return observe();
}

StepResult ToyEnv::step(const Tensor& action) {
  if (action.size() != 2) throw std::invalid_argument("ToyEnv: action must be 2-D");
  double ax = action[0], ay = action[1];
  if (!std::isfinite(ax) || !std::isfinite(ay))
    throw std::invalid_argument("ToyEnv: non-finite action");
  ax = std::clamp(ax, -1.0, 1.0);
  ay = std::clamp(ay, -1.0, 1.0);

  // Euler with friction, then position advances by the new velocity
  vx_ += cfg_.dt * (ax - cfg_.friction * vx_) / cfg_.mass;
  vy_ += cfg_.dt * (ay - cfg_.friction * vy_) / cfg_.mass;
  px_ += cfg_.dt * vx_;
  py_ += cfg_.dt * vy_;
  ++steps_;

  StepResult res;
  res.reward = 0.0;

  const double capture = cfg_.agent_radius + cfg_.bonus_radius;
  bool captured_active = false;
  for (int k = 0; k < cfg_.bonus_sites; ++k) {
    auto [sx, sy] = site(k);
    const double d = std::hypot(px_ - sx, py_ - sy);
    if (d <= capture) {
      flags_[k] = 1;
      if (k == active_) captured_active = true;
    }
  }
  if (captured_active) {
    res.reward = cfg_.bonus_reward;
    res.terminal = true;
    res.episode_over = true;
  } else if (std::max(std::fabs(px_), std::fabs(py_)) > cfg_.box_half_width) {
    res.reward = 0.0;
    res.terminal = true;
    res.episode_over = true;
  } else if (steps_ >= cfg_.max_steps) {
    res.episode_over = true;  // timeout, not a true terminal
  }
  res.obs = observe();
  return res;
}

double AnalyticEnv::reward(double s, double a) const {
  const double s1 = next_state(s, a);
  return -a * a - gamma * s1 * s1;
}

double AnalyticEnv::reward_da(double s, double a) const {
  return -2.0 * a - 2.0 * gamma * beta * next_state(s, a);
}

double AnalyticEnv::reward_ds(double s, double a) const {
  return -2.0 * gamma * rho * next_state(s, a);
}

bellman::JacobianBundle AnalyticEnv::jacobians(double s, double a) const {
  bellman::JacobianBundle j;
  j.f_a = Tensor::scalar(beta);
  j.f_s = Tensor::scalar(rho);
  j.pi_s = Tensor::scalar(0.0);
  j.r_a = {reward_da(s, a)};
  j.r_s = {reward_ds(s, a)};
  return j;
}

bellman::SobolevSample analytic_fixed_point(const AnalyticEnv& env, double s, double a) {
  const double q = env.gamma * env.rho * env.rho;
  if (q >= 1.0) throw std::invalid_argument("analytic_fixed_point: gamma rho^2 must be < 1");
  const double s1 = env.next_state(s, a);
  const double geo = 1.0 - q;
  bellman::SobolevSample h;
  h.ret = -a * a - env.gamma * s1 * s1 / geo;
  h.agrad = {-2.0 * a - 2.0 * env.gamma * env.beta * s1 / geo};
  h.sgrad = {-2.0 * env.gamma * env.rho * s1 / geo};
  return h;
}

bellman::SobolevSample analytic_rollout(const AnalyticEnv& env, double s, double a,
                                        int steps) {
  // forward accumulation of the return and its derivatives along the rollout
  double ret = 0.0, dret_da = 0.0, dret_ds = 0.0;
  double st = s, at = a;
  double dst_da = 0.0, dst_ds = 1.0;  // d s_t / d a0, d s_t / d s0
  double disc = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double dat_da = t == 0 ? 1.0 : 0.0;
    ret += disc * env.reward(st, at);
    dret_da += disc * (env.reward_ds(st, at) * dst_da + env.reward_da(st, at) * dat_da);
    dret_ds += disc * env.reward_ds(st, at) * dst_ds;
    const double snext = env.next_state(st, at);
    const double dnext_da = env.rho * dst_da + env.beta * dat_da;
    const double dnext_ds = env.rho * dst_ds;
    st = snext;
    dst_da = dnext_da;
    dst_ds = dnext_ds;
    at = 0.0;  // pi == 0 after the first step
    disc *= env.gamma;
  }
  bellman::SobolevSample h;
  h.ret = ret;
  h.agrad = {dret_da};
  h.sgrad = {dret_ds};
  return h;
}

wm::Imagined AnalyticWorldModel::imagine_batch(const Tensor& s, const Tensor& a,
                                               Rng&, bool with_jacobians) const {
  const std::size_t B = s.rows();
  wm::Imagined out;
  out.next_state = Tensor(B, 1);
  out.reward = Tensor(B, 1);
  if (with_jacobians) {
    out.f_a.assign(B, Tensor(1, 1));
    out.r_a = Tensor(B, 1);
  }
  for (std::size_t b = 0; b < B; ++b) {
    out.next_state(b, 0) = env_.next_state(s(b, 0), a(b, 0));
    out.reward(b, 0) = env_.reward(s(b, 0), a(b, 0));
    if (with_jacobians) {
      out.f_a[b](0, 0) = env_.beta;
      out.r_a(b, 0) = env_.reward_da(s(b, 0), a(b, 0));
    }
  }
  return out;
}

}  // namespace dsdpg::envs
