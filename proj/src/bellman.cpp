#include "dsdpg/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dsdpg::bellman {

double backup_return(double r, double gamma, double z_next) {
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::invalid_argument("backup_return: need 0 <= gamma < 1");
  return r + gamma * z_next;
}

int backup_return_node(ad::Tape& t, int r, double gamma, int z_next) {
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::invalid_argument("backup_return: need 0 <= gamma < 1");
  return t.add(r, t.scale(z_next, gamma));
}

namespace {
// v = pi_s^T agrad + sgrad, the bracket shared by both gradient backups
std::vector<double> bracket(const JacobianBundle& j,
                            const std::vector<double>& sgrad,
                            const std::vector<double>& agrad) {
  const std::size_t S = j.pi_s.cols(), A = j.pi_s.rows();
  if (agrad.size() != A) throw std::invalid_argument("backup: agrad size mismatch");
  if (sgrad.size() != S) throw std::invalid_argument("backup: sgrad size mismatch");
  std::vector<double> v(sgrad);
  for (std::size_t si = 0; si < S; ++si)
    for (std::size_t ai = 0; ai < A; ++ai) v[si] += j.pi_s(ai, si) * agrad[ai];
  return v;
}
}  // namespace

std::vector<double> backup_action_grad(const JacobianBundle& j, double gamma,
                                       const std::vector<double>& sgrad_next,
                                       const std::vector<double>& agrad_next) {
  const std::size_t S = j.f_a.rows(), A = j.f_a.cols();
  if (j.r_a.size() != A) throw std::invalid_argument("backup: r_a size mismatch");
  std::vector<double> v = bracket(j, sgrad_next, agrad_next);
  std::vector<double> out(j.r_a);
  for (std::size_t ai = 0; ai < A; ++ai)
    for (std::size_t si = 0; si < S; ++si) out[ai] += gamma * j.f_a(si, ai) * v[si];
  return out;
}

SobolevSample complete_backup(const JacobianBundle& j, double r, double gamma,
                              const SobolevSample& h_next) {
  if (!h_next.has_sgrad())
    throw std::invalid_argument("complete_backup: next sample lacks a state-gradient");
  const std::size_t S = j.f_s.rows(), A = j.f_a.cols();
  if (j.r_s.size() != S) throw std::invalid_argument("backup: r_s size mismatch");
  std::vector<double> v = bracket(j, h_next.sgrad, h_next.agrad);
  SobolevSample out;
  out.ret = r + gamma * h_next.ret;
  out.agrad.assign(j.r_a.begin(), j.r_a.end());
  for (std::size_t ai = 0; ai < A; ++ai)
    for (std::size_t si = 0; si < S; ++si)
      out.agrad[ai] += gamma * j.f_a(si, ai) * v[si];
  out.sgrad.assign(j.r_s.begin(), j.r_s.end());
  for (std::size_t so = 0; so < S; ++so)
    for (std::size_t si = 0; si < S; ++si)
      out.sgrad[so] += gamma * j.f_s(si, so) * v[si];
  return out;
}

double kappa_eff(double l_fa, double l_pi, double l_ds) {
  if (l_fa < 0 || l_pi < 0 || l_ds < 0)
    throw std::invalid_argument("kappa_eff: constants must be nonnegative");
  return std::max(1.0, l_fa * l_pi) + l_fa * l_ds;
}

double kappa_full(double l_fa, double l_fs, double l_pi) {
  if (l_fa < 0 || l_fs < 0 || l_pi < 0)
    throw std::invalid_argument("kappa_full: constants must be nonnegative");
  return std::max({1.0, l_fa * l_pi, l_fs}) + l_fs * l_pi;
}

TargetSet truncate_top_p(const TargetSet& in, double pct) {
  if (in.samples.rows() == 0) throw std::invalid_argument("truncate_top_p: empty input");
  if (pct < 0.0 || pct >= 100.0)
    throw std::invalid_argument("truncate_top_p: need 0 <= p < 100");
  const std::size_t n = in.samples.rows();
  const std::size_t drop = static_cast<std::size_t>(std::floor(pct * double(n) / 100.0));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return in.samples(a, 0) > in.samples(b, 0);
  });
  std::vector<bool> dropped(n, false);
  for (std::size_t k = 0; k < drop; ++k) dropped[idx[k]] = true;

  TargetSet out;
  out.samples = Tensor(n - drop, in.samples.cols());
  std::size_t w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (dropped[i]) continue;
    for (std::size_t j = 0; j < in.samples.cols(); ++j)
      out.samples(w, j) = in.samples(i, j);
    if (!in.provenance.empty()) out.provenance.push_back(in.provenance[i]);
    ++w;
  }
  return out;
}

namespace {

struct PolicyEval {
  Tensor actions;            // [B, A] smoothed + clipped
  std::vector<Tensor> pi_s;  // per row [A, S]
};

PolicyEval eval_target_policy(const nets::PolicyNet& policy, const Tensor& s_next,
                              const TargetBuildConfig& cfg, Rng& rng,
                              bool with_jacobian) {
  const std::size_t B = s_next.rows();
  const std::size_t A = policy.config().action_dim;
  const std::size_t S = policy.config().state_dim;

  ad::Tape t;
  auto p = nets::const_lookup(t, policy.params());
  int sn = t.leaf(s_next);
  int an = policy.forward(t, p, sn);
  Tensor a_pre = t.val(an);

  PolicyEval out;
  out.actions = a_pre;
  std::vector<std::vector<bool>> clipped(B, std::vector<bool>(A, false));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < A; ++c) {
      double eps = rng.normal(0.0, cfg.smoothing_std);
      eps = std::clamp(eps, -cfg.smoothing_clip, cfg.smoothing_clip);
      double v = a_pre(b, c) + eps;
      if (v > cfg.action_bound) {
        v = cfg.action_bound;
        clipped[b][c] = true;
      } else if (v < -cfg.action_bound) {
        v = -cfg.action_bound;
        clipped[b][c] = true;
      }
      out.actions(b, c) = v;
    }

  if (with_jacobian) {
    out.pi_s.assign(B, Tensor(A, S));
    const std::size_t mark = t.size();
    for (std::size_t c = 0; c < A; ++c) {
      int g = t.gradients(t.sum_all(t.slice_cols(an, c, c + 1)), {sn})[0];
      const Tensor& gv = t.val(g);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t si = 0; si < S; ++si)
          out.pi_s[b](c, si) = clipped[b][c] ? 0.0 : gv(b, si);
      t.rollback(mark);
    }
  }
  return out;
}

struct CriticDraws {
  Tensor z;   // [rows, 1]
  Tensor gs;  // [rows, S] (empty when gradients not requested)
  Tensor ga;  // [rows, A]
};

// N reparameterized samples per transition from one target critic, with
// per-sample input gradients; one batched sweep covers every row.
CriticDraws draw_target_samples(const nets::CriticNet& critic, const Tensor& s_next,
                                const Tensor& a_next, int n, Rng& rng,
                                bool with_gradients) {
  const std::size_t B = s_next.rows();
  const std::size_t S = s_next.cols(), A = a_next.cols();
  const std::size_t rows = B * static_cast<std::size_t>(n);
  Tensor srep(rows, S), arep(rows, A);
  for (std::size_t b = 0; b < B; ++b)
    for (int k = 0; k < n; ++k) {
      const std::size_t rr = b * n + k;
      for (std::size_t j = 0; j < S; ++j) srep(rr, j) = s_next(b, j);
      for (std::size_t j = 0; j < A; ++j) arep(rr, j) = a_next(b, j);
    }
  ad::Tape t;
  auto p = nets::const_lookup(t, critic.params());
  int sn = t.leaf(std::move(srep));
  int an = t.leaf(std::move(arep));
  int xi = -1;
  if (critic.distributional())
    xi = t.constant(rng.normal_tensor(rows, critic.config().noise_dim));
  int z = critic.forward(t, p, sn, an, xi);
  CriticDraws out;
  out.z = t.val(z);
  if (with_gradients) {
    auto g = t.gradients(t.sum_all(z), {sn, an});
    out.gs = t.val(g[0]);
    out.ga = t.val(g[1]);
  }
  return out;
}

JacobianBundle row_bundle(const wm::Imagined& img, const PolicyEval& pe,
                          std::size_t b, std::size_t S, std::size_t A) {
  JacobianBundle j;
  j.f_a = img.f_a.empty() ? Tensor(S, A) : img.f_a[b];
  j.f_s = Tensor(S, S);  // unused by the incomplete backup
  j.pi_s = pe.pi_s.empty() ? Tensor(A, S) : pe.pi_s[b];
  j.r_a.assign(A, 0.0);
  if (img.r_a.size() > 0)
    for (std::size_t c = 0; c < A; ++c) j.r_a[c] = img.r_a(b, c);
  j.r_s.assign(S, 0.0);
  return j;
}

}  // namespace

TargetSetBatch build_target_set(const nets::CriticNet& critic_tgt_1,
                                const nets::CriticNet& critic_tgt_2,
                                const wm::WorldModel& world,
                                const nets::PolicyNet& policy_tgt,
                                const Tensor& s, const Tensor& a,
                                const std::vector<std::uint8_t>& terminal,
                                const TargetBuildConfig& cfg, Rng& rng) {
  if (cfg.n_samples < 1) throw std::invalid_argument("build_target_set: N must be >= 1");
  const std::size_t B = s.rows();
  const std::size_t S = world.state_dim(), A = world.action_dim();
  const int n = cfg.n_samples;
  const std::size_t total = 2 * static_cast<std::size_t>(n);
  const std::size_t drop =
      static_cast<std::size_t>(std::floor(cfg.truncation_pct * double(total) / 100.0));
  if (drop >= total)
    throw std::invalid_argument("build_target_set: truncation leaves no targets");
  const std::size_t kept = total - drop;
  const std::size_t dim = cfg.use_action_gradient ? 1 + A : 1;

  Rng wm_rng = rng.stream(1);
  Rng pol_rng = rng.stream(2);
  Rng c1_rng = rng.stream(3);
  Rng c2_rng = rng.stream(4);

  wm::Imagined img = world.imagine_batch(s, a, wm_rng, cfg.use_action_gradient);
  PolicyEval pe = eval_target_policy(policy_tgt, img.next_state, cfg, pol_rng,
                                     cfg.use_action_gradient);
  CriticDraws d1 = draw_target_samples(critic_tgt_1, img.next_state, pe.actions, n,
                                       c1_rng, cfg.use_action_gradient);
  CriticDraws d2 = draw_target_samples(critic_tgt_2, img.next_state, pe.actions, n,
                                       c2_rng, cfg.use_action_gradient);

  TargetSetBatch out;
  out.kept = kept;
  out.dim = dim;
  out.samples = Tensor(B * kept, dim);
  out.provenance.reserve(B * kept);

  for (std::size_t b = 0; b < B; ++b) {
    const double mask = (!terminal.empty() && terminal[b]) ? 0.0 : 1.0;
    const double gm = cfg.gamma * mask;
    const double rhat = img.reward(b, 0);
    JacobianBundle j = cfg.use_action_gradient ? row_bundle(img, pe, b, S, A)
                                               : JacobianBundle{};
    TargetSet block;
    block.samples = Tensor(total, dim);
    block.provenance.resize(total);
    for (std::size_t k = 0; k < total; ++k) {
      const CriticDraws& d = k < static_cast<std::size_t>(n) ? d1 : d2;
      const std::size_t rr = b * n + (k % n);
      block.provenance[k] = k < static_cast<std::size_t>(n) ? 0 : 1;
      block.samples(k, 0) = rhat + gm * d.z(rr, 0);
      if (cfg.use_action_gradient) {
        std::vector<double> gs(S), ga(A);
        for (std::size_t si = 0; si < S; ++si) gs[si] = d.gs(rr, si);
        for (std::size_t ai = 0; ai < A; ++ai) ga[ai] = d.ga(rr, ai);
        std::vector<double> bg = backup_action_grad(j, gm, gs, ga);
        for (std::size_t ai = 0; ai < A; ++ai) block.samples(k, 1 + ai) = bg[ai];
      }
    }
    TargetSet trunc = truncate_top_p(block, cfg.truncation_pct);
    for (std::size_t k = 0; k < kept; ++k) {
      for (std::size_t jcol = 0; jcol < dim; ++jcol)
        out.samples(b * kept + k, jcol) = trunc.samples(k, jcol);
      out.provenance.push_back(trunc.provenance[k]);
    }
  }
  return out;
}

TargetSet build_target_set_single(const nets::CriticNet& critic_tgt_1,
                                  const nets::CriticNet& critic_tgt_2,
                                  const wm::WorldModel& world,
                                  const nets::PolicyNet& policy_tgt,
                                  const Tensor& s, const Tensor& a,
                                  const TargetBuildConfig& cfg, Rng& rng) {
  Tensor sm(1, s.size()), am(1, a.size());
  for (std::size_t i = 0; i < s.size(); ++i) sm(0, i) = s[i];
  for (std::size_t i = 0; i < a.size(); ++i) am(0, i) = a[i];
  TargetSetBatch batch = build_target_set(critic_tgt_1, critic_tgt_2, world,
                                          policy_tgt, sm, am, {}, cfg, rng);
  TargetSet out;
  out.samples = batch.samples;
  out.provenance = batch.provenance;
  return out;
}

Tensor build_deterministic_targets(const nets::CriticNet& critic_tgt_1,
                                   const nets::CriticNet& critic_tgt_2,
                                   const wm::WorldModel& world,
                                   const nets::PolicyNet& policy_tgt,
                                   const Tensor& s, const Tensor& a,
                                   const std::vector<std::uint8_t>& terminal,
                                   const TargetBuildConfig& cfg, Rng& rng) {
  const std::size_t B = s.rows();
  const std::size_t S = world.state_dim(), A = world.action_dim();
  const std::size_t dim = cfg.use_action_gradient ? 1 + A : 1;

  Rng wm_rng = rng.stream(1);
  Rng pol_rng = rng.stream(2);
  Rng c1_rng = rng.stream(3);
  Rng c2_rng = rng.stream(4);

  wm::Imagined img = world.imagine_batch(s, a, wm_rng, cfg.use_action_gradient);
  PolicyEval pe = eval_target_policy(policy_tgt, img.next_state, cfg, pol_rng,
                                     cfg.use_action_gradient);
  CriticDraws d1 = draw_target_samples(critic_tgt_1, img.next_state, pe.actions, 1,
                                       c1_rng, cfg.use_action_gradient);
  CriticDraws d2 = draw_target_samples(critic_tgt_2, img.next_state, pe.actions, 1,
                                       c2_rng, cfg.use_action_gradient);

  Tensor out(B, dim);
  for (std::size_t b = 0; b < B; ++b) {
    const double mask = (!terminal.empty() && terminal[b]) ? 0.0 : 1.0;
    const double gm = cfg.gamma * mask;
    const bool first = d1.z(b, 0) <= d2.z(b, 0);  // TD3 minimum
    const CriticDraws& d = first ? d1 : d2;
    out(b, 0) = img.reward(b, 0) + gm * d.z(b, 0);
    if (cfg.use_action_gradient) {
      JacobianBundle j = row_bundle(img, pe, b, S, A);
      std::vector<double> gs(S), ga(A);
      for (std::size_t si = 0; si < S; ++si) gs[si] = d.gs(b, si);
      for (std::size_t ai = 0; ai < A; ++ai) ga[ai] = d.ga(b, ai);
      std::vector<double> bg = backup_action_grad(j, gm, gs, ga);
      for (std::size_t ai = 0; ai < A; ++ai) out(b, 1 + ai) = bg[ai];
    }
  }
  return out;
}

}  // namespace dsdpg::bellman
