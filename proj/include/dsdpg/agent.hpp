#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsdpg/bellman.hpp"
#include "dsdpg/envs.hpp"
#include "dsdpg/metrics.hpp"
#include "dsdpg/nets.hpp"
#include "dsdpg/optim.hpp"
#include "dsdpg/rng.hpp"
#include "dsdpg/worldmodel.hpp"

namespace dsdpg::agent {

struct Transition {
  Tensor s;
  Tensor a;
  double r = 0.0;
  Tensor s_next;
  bool done = false;  // true env termination; timeouts bootstrap as usual
};

// FIFO ring buffer; batches are drawn uniformly without replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}
  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;  // ring cursor once full
  std::vector<Transition> data_;
};

enum class Metric { Mmd, Msmmd, Huber, MmdSobolev, MsmmdSobolev, HuberSobolev };
Metric metric_from_string(const std::string& name);
std::string metric_to_string(Metric m);
bool metric_is_distributional(Metric m);
bool metric_uses_gradients(Metric m);

struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t batch_size = 256;
  double exploration_noise_std = 0.1;
  double critic_lr = 1e-4;
  double policy_lr = 1e-4;
  int n_samples = 10;  // N draws per critic
  double truncation_pct = 25.0;
  int updates_per_env_step = 10;  // UTD
  int policy_delay = 2;
  int m_policy = 10;
  Metric metric = Metric::MmdSobolev;
  metrics::KernelSpec kernel = metrics::KernelSpec::multiquadric(100.0);
  metrics::MsmmdOptions msmmd;
  double smoothing_std = 0.2;
  double smoothing_clip = 0.5;
  double huber_delta = 1.0;
  double sobolev_weight = 5.0;  // gradient-term weight for the Huber baseline
  std::size_t replay_capacity = 1000000;

  std::vector<std::size_t> critic_trunk = {400, 400};
  std::size_t critic_noise_dim = 64;
  std::vector<std::size_t> critic_noise_hidden = {64};
  std::size_t critic_noise_out = 64;
  std::vector<std::size_t> policy_hidden = {400, 400};
  std::vector<std::size_t> world_hidden = {1024, 1024, 1024};
  double world_lr = 1e-4;
  double world_weight_decay = 1e-4;
  double world_kl_weight = 0.1;

  long total_env_steps = 30000;
  long warmup_env_steps = 1000;
  long eval_interval_env_steps = 1000;
  int eval_episodes = 10;

  void validate() const;
};

struct MetricRow {
  long step = 0;
  double eval_median = 0.0;
  double eval_mean = 0.0;
  double critic_loss = 0.0;
  double wm_loss = 0.0;
  double q_mean = 0.0;
};

struct MetricLog {
  std::vector<MetricRow> rows;
  bool aborted = false;
  std::string abort_reason;
};

struct EvalStats {
  double mean = 0.0;
  double median = 0.0;
};

// Twin distributional critics with Sobolev-MMD/MSMMD losses (or the
// deterministic Huber baselines), cVAE world model, target networks with
// Polyak averaging, delayed policy updates.
class Agent {
 public:
  Agent(AgentConfig cfg, std::size_t obs_dim, std::size_t action_dim,
        double action_bound, std::uint64_t seed);

  Tensor act(const Tensor& obs, bool with_exploration_noise);
  double critic_update(int idx, const std::vector<std::size_t>& batch);
  double policy_update(const std::vector<std::size_t>& batch);
  static void polyak_update(ParamStore& target, const ParamStore& online, double tau);
  double world_model_update(const std::vector<std::size_t>& batch);

  MetricLog train(envs::Env& env, envs::Env& eval_env);
  static EvalStats evaluate(const nets::PolicyNet& policy, envs::Env& env,
                            int episodes);

  const AgentConfig& config() const { return cfg_; }
  nets::CriticNet& critic(int i) { return critics_[i]; }
  nets::CriticNet& critic_target(int i) { return critic_targets_[i]; }
  nets::PolicyNet& policy() { return policy_; }
  nets::PolicyNet& policy_target() { return policy_target_; }
  wm::CvaeModel& world() { return world_; }
  ReplayBuffer& replay() { return replay_; }

 private:
  bellman::TargetBuildConfig target_config() const;
  AgentConfig cfg_;
  std::size_t obs_dim_, action_dim_;
  double action_bound_;
  Rng rng_explore_, rng_sample_, rng_target_, rng_critic_, rng_world_, rng_msmmd_;
  nets::CriticNet critics_[2];
  nets::CriticNet critic_targets_[2];
  nets::PolicyNet policy_, policy_target_;
  wm::CvaeModel world_;
  RAdam critic_opt_[2], policy_opt_, world_opt_;
  ReplayBuffer replay_;
  long grad_steps_ = 0;
  double q_abs_accum_ = 0.0;
  long q_abs_count_ = 0;
};

}  // namespace dsdpg::agent
