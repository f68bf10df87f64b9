#include "dsdpg/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsdpg::agent {

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);  // FIFO eviction
    next_ = (next_ + 1) % capacity_;
  }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (n > data_.size())
    throw std::invalid_argument("ReplayBuffer: batch larger than contents");
  // partial Fisher-Yates: uniform without replacement within the batch
  std::vector<std::size_t> idx(data_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

Metric metric_from_string(const std::string& name) {
  if (name == "mmd") return Metric::Mmd;
  if (name == "msmmd") return Metric::Msmmd;
  if (name == "huber") return Metric::Huber;
  if (name == "mmd_sobolev") return Metric::MmdSobolev;
  if (name == "msmmd_sobolev") return Metric::MsmmdSobolev;
  if (name == "huber_sobolev") return Metric::HuberSobolev;
  throw std::invalid_argument("unknown metric: " + name);
}

std::string metric_to_string(Metric m) {
  switch (m) {
    case Metric::Mmd: return "mmd";
    case Metric::Msmmd: return "msmmd";
    case Metric::Huber: return "huber";
    case Metric::MmdSobolev: return "mmd_sobolev";
    case Metric::MsmmdSobolev: return "msmmd_sobolev";
    case Metric::HuberSobolev: return "huber_sobolev";
  }
  return "?";
}

bool metric_is_distributional(Metric m) {
  return m == Metric::Mmd || m == Metric::Msmmd || m == Metric::MmdSobolev ||
         m == Metric::MsmmdSobolev;
}

bool metric_uses_gradients(Metric m) {
  return m == Metric::MmdSobolev || m == Metric::MsmmdSobolev ||
         m == Metric::HuberSobolev;
}

void AgentConfig::validate() const {
  if (gamma < 0 || gamma >= 1) throw std::invalid_argument("config: gamma out of range");
  if (tau <= 0 || tau > 1) throw std::invalid_argument("config: tau out of range");
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
  if (critic_lr <= 0 || policy_lr <= 0 || world_lr <= 0)
    throw std::invalid_argument("config: learning rates must be positive");
  if (n_samples < 1) throw std::invalid_argument("config: n_samples must be >= 1");
  if (policy_delay < 1) throw std::invalid_argument("config: policy_delay must be >= 1");
  if (truncation_pct < 0 || truncation_pct >= 100)
    throw std::invalid_argument("config: truncation_pct out of range");
  if (exploration_noise_std < 0)
    throw std::invalid_argument("config: exploration noise must be nonnegative");
  kernel.validate();
}

Agent::Agent(AgentConfig cfg, std::size_t obs_dim, std::size_t action_dim,
             double action_bound, std::uint64_t seed)
    : cfg_(cfg),
      obs_dim_(obs_dim),
      action_dim_(action_dim),
      action_bound_(action_bound),
      rng_explore_(Rng(seed).stream(1)),
      rng_sample_(Rng(seed).stream(2)),
      rng_target_(Rng(seed).stream(3)),
      rng_critic_(Rng(seed).stream(4)),
      rng_world_(Rng(seed).stream(5)),
      rng_msmmd_(Rng(seed).stream(6)),
      replay_(cfg.replay_capacity) {
  cfg_.validate();
  Rng init = Rng(seed).stream(0);

  nets::CriticConfig cc;
  cc.state_dim = obs_dim;
  cc.action_dim = action_dim;
  cc.noise_dim = metric_is_distributional(cfg_.metric) ? cfg_.critic_noise_dim : 0;
  cc.noise_hidden = cfg_.critic_noise_hidden;
  cc.noise_out = cfg_.critic_noise_out;
  cc.trunk_hidden = cfg_.critic_trunk;
  for (int i = 0; i < 2; ++i) {
    critics_[i] = nets::CriticNet(cc, init);
    critic_targets_[i] = nets::CriticNet(cc, init);
    // targets start as copies of the online nets
    critic_targets_[i].params().set_flat(critics_[i].params().flat());
    critic_opt_[i] = RAdam(RAdam::Options{.lr = cfg_.critic_lr});
  }

  nets::PolicyConfig pc;
  pc.state_dim = obs_dim;
  pc.action_dim = action_dim;
  pc.hidden = cfg_.policy_hidden;
  pc.action_scale = action_bound;
  policy_ = nets::PolicyNet(pc, init);
  policy_target_ = nets::PolicyNet(pc, init);
  policy_target_.params().set_flat(policy_.params().flat());
  policy_opt_ = RAdam(RAdam::Options{.lr = cfg_.policy_lr});

  wm::CvaeConfig wc;
  wc.state_dim = obs_dim;
  wc.action_dim = action_dim;
  wc.hidden = cfg_.world_hidden;
  wc.kl_weight = cfg_.world_kl_weight;
  world_ = wm::CvaeModel(wc, init);
  world_opt_ = RAdam(RAdam::Options{.lr = cfg_.world_lr,
                                    .weight_decay = cfg_.world_weight_decay});
}

bellman::TargetBuildConfig Agent::target_config() const {
  bellman::TargetBuildConfig t;
  t.n_samples = cfg_.n_samples;
  t.gamma = cfg_.gamma;
  t.truncation_pct = cfg_.truncation_pct;
  t.use_action_gradient = metric_uses_gradients(cfg_.metric);
  t.smoothing_std = cfg_.smoothing_std;
  t.smoothing_clip = cfg_.smoothing_clip;
  t.action_bound = action_bound_;
  return t;
}

Tensor Agent::act(const Tensor& obs, bool with_exploration_noise) {
  Tensor a = policy_.act(obs);
  if (with_exploration_noise) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] += rng_explore_.normal(0.0, cfg_.exploration_noise_std);
      a[i] = std::clamp(a[i], -action_bound_, action_bound_);
    }
  }
  return a;
}

void Agent::polyak_update(ParamStore& target, const ParamStore& online, double tau) {
  if (target.count() != online.count())
    throw std::invalid_argument("polyak_update: schema mismatch");
  for (std::size_t i = 0; i < target.count(); ++i) {
    if (target.name_at(i) != online.name_at(i))
      throw std::invalid_argument("polyak_update: schema mismatch at " + target.name_at(i));
    Tensor& t = target.tensor_at(i);
    const Tensor& o = online.tensor_at(i);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = tau * o[j] + (1.0 - tau) * t[j];
  }
}

namespace {

struct BatchTensors {
  Tensor s, a, s_next, r;
  std::vector<std::uint8_t> done;
};

BatchTensors gather(const ReplayBuffer& replay, const std::vector<std::size_t>& batch,
                    std::size_t ds, std::size_t da) {
  BatchTensors b;
  const std::size_t n = batch.size();
  b.s = Tensor(n, ds);
  b.a = Tensor(n, da);
  b.s_next = Tensor(n, ds);
  b.r = Tensor(n, 1);
  b.done.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = replay.at(batch[i]);
    for (std::size_t j = 0; j < ds; ++j) {
      b.s(i, j) = t.s[j];
      b.s_next(i, j) = t.s_next[j];
    }
    for (std::size_t j = 0; j < da; ++j) b.a(i, j) = t.a[j];
    b.r(i, 0) = t.r;
    b.done[i] = t.done ? 1 : 0;
  }
  return b;
}

Tensor repeat_rows_tensor(const Tensor& x, std::size_t times) {
  Tensor r(x.rows() * times, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t j = 0; j < x.cols(); ++j) r(i * times + t, j) = x(i, j);
  return r;
}

}  // namespace

double Agent::critic_update(int idx, const std::vector<std::size_t>& batch) {
  const std::size_t B = batch.size();
  BatchTensors bt = gather(replay_, batch, obs_dim_, action_dim_);
  nets::CriticNet& critic = critics_[idx];

  if (cfg_.metric == Metric::Huber || cfg_.metric == Metric::HuberSobolev) {
    Tensor targets = bellman::build_deterministic_targets(
        critic_targets_[0], critic_targets_[1], world_, policy_target_, bt.s, bt.a,
        bt.done, target_config(), rng_target_);

    ad::Tape t;
    ParamBinding bind(t, critic.params());
    auto p = nets::bind_lookup(bind);
    int s = t.constant(bt.s);
    int a = t.leaf(bt.a);
    int z = critic.forward(t, p, s, a, -1);
    for (std::size_t i = 0; i < B; ++i) {
      q_abs_accum_ += std::fabs(t.val(z)(i, 0));
      ++q_abs_count_;
    }
    int pred = z;
    if (cfg_.metric == Metric::HuberSobolev) {
      int g = t.gradients(t.sum_all(z), {a})[0];
      pred = t.concat_cols(z, g);
    }
    int resid = t.sub(pred, t.constant(targets));
    int ret_h = t.huber(t.slice_cols(resid, 0, 1), cfg_.huber_delta);
    int loss;
    if (cfg_.metric == Metric::HuberSobolev) {
      int grad_h = t.huber(t.slice_cols(resid, 1, 1 + action_dim_), cfg_.huber_delta);
      loss = t.scale(
          t.add(t.sum_all(ret_h), t.scale(t.sum_all(grad_h), cfg_.sobolev_weight)),
          1.0 / double(B));
    } else {
      loss = t.scale(t.sum_all(ret_h), 1.0 / double(B));
    }
    const double value = t.val(loss).item();
    auto grads = backward(t, loss, bind);
    critic_opt_[idx].step(critic.params(), grads);
    return value;
  }

  // distributional branch
  const int n = cfg_.n_samples;
  bellman::TargetSetBatch targets =
      bellman::build_target_set(critic_targets_[0], critic_targets_[1], world_,
                                policy_target_, bt.s, bt.a, bt.done,
                                target_config(), rng_target_);

  ad::Tape t;
  ParamBinding bind(t, critic.params());
  auto p = nets::bind_lookup(bind);
  int srep = t.constant(repeat_rows_tensor(bt.s, n));
  int arep = t.leaf(repeat_rows_tensor(bt.a, n));
  int xi = t.constant(rng_critic_.normal_tensor(B * n, critic.config().noise_dim));
  int z = critic.forward(t, p, srep, arep, xi);
  for (std::size_t i = 0; i < B * std::size_t(n); ++i) {
    q_abs_accum_ += std::fabs(t.val(z)(i, 0));
    ++q_abs_count_;
  }
  int x = z;
  if (metric_uses_gradients(cfg_.metric)) {
    int g = t.gradients(t.sum_all(z), {arep})[0];
    x = t.concat_cols(z, g);
  }
  int y = t.constant(targets.samples);
  int per_block;
  if (cfg_.metric == Metric::Msmmd || cfg_.metric == Metric::MsmmdSobolev) {
    per_block = metrics::block_msmmd2(t, x, y, B, cfg_.kernel, cfg_.msmmd, rng_msmmd_);
  } else {
    per_block = metrics::block_mmd2(t, x, y, B, cfg_.kernel);
  }
  int loss = t.scale(t.sum_all(per_block), 1.0 / double(B));
  const double value = t.val(loss).item();
  auto grads = backward(t, loss, bind);
  critic_opt_[idx].step(critic.params(), grads);
  return value;
}

double Agent::policy_update(const std::vector<std::size_t>& batch) {
  const std::size_t B = batch.size();
  BatchTensors bt = gather(replay_, batch, obs_dim_, action_dim_);
  const int mp = critics_[0].distributional() ? cfg_.m_policy : 1;

  ad::Tape t;
  ParamBinding bind(t, policy_.params());
  auto pp = nets::bind_lookup(bind);
  auto pc = nets::const_lookup(t, critics_[0].params());
  int s = t.constant(bt.s);
  int a = policy_.forward(t, pp, s);
  int arep = t.repeat_rows(a, mp);
  int srep = t.constant(repeat_rows_tensor(bt.s, mp));
  int xi = critics_[0].distributional()
               ? t.constant(rng_critic_.normal_tensor(B * mp, critics_[0].config().noise_dim))
               : -1;
  int z = critics_[0].forward(t, pc, srep, arep, xi);
  int loss = t.scale(t.sum_all(z), -1.0 / double(B * mp));
  const double value = t.val(loss).item();
  auto grads = backward(t, loss, bind);
  policy_opt_.step(policy_.params(), grads);
  return value;
}

double Agent::world_model_update(const std::vector<std::size_t>& batch) {
  BatchTensors bt = gather(replay_, batch, obs_dim_, action_dim_);
  return world_.train_step(bt.s, bt.a, bt.s_next, bt.r, world_opt_, rng_world_);
}

EvalStats Agent::evaluate(const nets::PolicyNet& policy, envs::Env& env, int episodes) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  std::vector<double> returns;
  for (int ep = 0; ep < episodes; ++ep) {
    Tensor obs = env.reset();
    double ret = 0.0;
    while (true) {
      auto res = env.step(policy.act(obs));
      ret += res.reward;
      obs = res.obs;
      if (res.episode_over) break;
    }
    returns.push_back(ret);
  }
  EvalStats st;
  for (double r : returns) st.mean += r;
  st.mean /= returns.size();
  std::sort(returns.begin(), returns.end());
  const std::size_t n = returns.size();
  st.median = n % 2 ? returns[n / 2] : 0.5 * (returns[n / 2 - 1] + returns[n / 2]);
  return st;
}

MetricLog Agent::train(envs::Env& env, envs::Env& eval_env) {
  MetricLog log;
  double critic_loss_accum = 0.0, wm_loss_accum = 0.0;
  long critic_loss_count = 0, wm_loss_count = 0;

  Tensor obs = env.reset();
  for (long step = 1; step <= cfg_.total_env_steps; ++step) {
    Tensor action(1, action_dim_);
    if (step <= cfg_.warmup_env_steps) {
      for (std::size_t i = 0; i < action_dim_; ++i)
        action[i] = rng_explore_.uniform(-action_bound_, action_bound_);
    } else {
      action = act(obs, true);
    }
    auto res = env.step(action);
    replay_.push(Transition{obs, action, res.reward, res.obs, res.terminal});
    obs = res.episode_over ? env.reset() : res.obs;

    if (step > cfg_.warmup_env_steps && replay_.size() >= cfg_.batch_size) {
      try {
        wm_loss_accum += world_model_update(replay_.sample_indices(cfg_.batch_size, rng_sample_));
        ++wm_loss_count;
        for (int u = 0; u < cfg_.updates_per_env_step; ++u) {
          auto batch = replay_.sample_indices(cfg_.batch_size, rng_sample_);
          critic_loss_accum += critic_update(0, batch);
          critic_loss_accum += critic_update(1, batch);
          critic_loss_count += 2;
          ++grad_steps_;
          if (grad_steps_ % cfg_.policy_delay == 0) {
            policy_update(batch);
            for (int i = 0; i < 2; ++i)
              polyak_update(critic_targets_[i].params(), critics_[i].params(), cfg_.tau);
            polyak_update(policy_target_.params(), policy_.params(), cfg_.tau);
          }
        }
      } catch (const ad::TapeError& e) {
        log.aborted = true;
        log.abort_reason = std::string("step ") + std::to_string(step) + ": " + e.what();
        return log;
      }
    }

    if (step % cfg_.eval_interval_env_steps == 0) {
      EvalStats st = evaluate(policy_, eval_env, cfg_.eval_episodes);
      MetricRow row;
      row.step = step;
      row.eval_median = st.median;
      row.eval_mean = st.mean;
      row.critic_loss = critic_loss_count ? critic_loss_accum / critic_loss_count : 0.0;
      row.wm_loss = wm_loss_count ? wm_loss_accum / wm_loss_count : 0.0;
      row.q_mean = q_abs_count_ ? q_abs_accum_ / q_abs_count_ : 0.0;
      log.rows.push_back(row);
      critic_loss_accum = wm_loss_accum = 0.0;
      critic_loss_count = wm_loss_count = 0;
      q_abs_accum_ = 0.0;
      q_abs_count_ = 0;
    }
  }
  return log;
}

}  // namespace dsdpg::agent
