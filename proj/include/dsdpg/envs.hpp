#pragma once

#include <cstdint>
#include <vector>

#include "dsdpg/bellman.hpp"
#include "dsdpg/rng.hpp"
#include "dsdpg/tensor.hpp"
#include "dsdpg/worldmodel.hpp"

namespace dsdpg::envs {

struct StepResult {
  Tensor obs;
  double reward = 0.0;
  bool episode_over = false;  // terminal event or timeout
  bool terminal = false;      // true env termination (bonus capture / box exit)
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual double action_bound() const = 0;
  virtual Tensor reset() = 0;
  virtual StepResult step(const Tensor& action) = 0;
};

// 2-D point mass in a box with M hidden bonus sites on a circle. Visiting a
// site sets its memory flag; visiting the episode's active site ends the
// episode with the terminal bonus. Observation: [position; velocity; flags].
struct ToyConfig {
  int bonus_sites = 3;  // M
  int max_steps = 25;
  double bonus_reward = 10.0;
  double box_half_width = 3.0;
  double init_half_width = 1.0;
  double friction = 0.1;
  double dt = 0.5;
  double mass = 1.0;
  double agent_radius = 0.5;
  double bonus_radius = 0.5;
  double site_circle_radius = 2.0;
};

class ToyEnv final : public Env {
 public:
  ToyEnv(ToyConfig cfg, Rng rng);

  std::size_t obs_dim() const override { return 4 + cfg_.bonus_sites; }
  std::size_t action_dim() const override { return 2; }
  double action_bound() const override { return 1.0; }
  Tensor reset() override;
  StepResult step(const Tensor& action) override;

  // site k sits at angle 2 pi k / M on the site circle
  std::pair<double, double> site(int k) const;
  int active_site() const { return active_; }  // hidden from the observation
  int steps_elapsed() const { return steps_; }
  const ToyConfig& config() const { return cfg_; }

  // diagnostics: place the mass directly (flags and step count untouched)
  void teleport(double px, double py, double vx = 0.0, double vy = 0.0) {
    px_ = px;
    py_ = py;
    vx_ = vx;
    vy_ = vy;
  }

 private:
  Tensor observe() const;
  ToyConfig cfg_;
  Rng rng_;
  double px_ = 0, py_ = 0, vx_ = 0, vy_ = 0;
  std::vector<std::uint8_t> flags_;
  int active_ = 0;
  int steps_ = 0;
};

// Scalar linear-quadratic diagnostic environment with a closed-form Sobolev
// fixed point: s' = rho s + beta a, pi == 0, r(s,a) = -a^2 - gamma (rho s + beta a)^2
// (the discounted regrouping of "-a^2 now, -s_t^2 afterwards").
struct AnalyticEnv {
  double rho = 0.5;
  double beta = 0.5;
  double gamma = 0.9;

  double next_state(double s, double a) const { return rho * s + beta * a; }
  double reward(double s, double a) const;
  double reward_da(double s, double a) const;
  double reward_ds(double s, double a) const;

  bellman::JacobianBundle jacobians(double s, double a) const;
  double kappa_full() const { return bellman::kappa_full(std::fabs(beta), std::fabs(rho), 0.0); }
};

// closed-form (Z, dZ/da, dZ/ds); requires gamma rho^2 < 1
bellman::SobolevSample analytic_fixed_point(const AnalyticEnv& env, double s, double a);

// brute-force oracle: discounted rollout sum truncated after `steps`
bellman::SobolevSample analytic_rollout(const AnalyticEnv& env, double s, double a,
                                        int steps);

// AnalyticEnv as an exact, deterministic world model (for target-builder
// tests and the contraction suite).
class AnalyticWorldModel final : public wm::WorldModel {
 public:
  explicit AnalyticWorldModel(AnalyticEnv env) : env_(env) {}
  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  wm::Imagined imagine_batch(const Tensor& s, const Tensor& a, Rng& rng,
                             bool with_jacobians) const override;

 private:
  AnalyticEnv env_;
};

}  // namespace dsdpg::envs
