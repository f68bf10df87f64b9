#pragma once

#include <cstdint>
#include <vector>

#include "dsdpg/nets.hpp"
#include "dsdpg/rng.hpp"
#include "dsdpg/tensor.hpp"
#include "dsdpg/worldmodel.hpp"

namespace dsdpg::bellman {

// Joint (return, action-gradient[, state-gradient]) sample.
struct SobolevSample {
  double ret = 0.0;
  std::vector<double> agrad;
  std::vector<double> sgrad;  // empty unless the complete variant is in play
  bool has_sgrad() const { return !sgrad.empty(); }
};

struct JacobianBundle {
  Tensor f_a;                 // [S, A]  d s'/d a
  Tensor f_s;                 // [S, S]  d s'/d s
  Tensor pi_s;                // [A, S]  d pi/d s at s'
  std::vector<double> r_a;    // [A]
  std::vector<double> r_s;    // [S]
};

// r + gamma * z_next
double backup_return(double r, double gamma, double z_next);
int backup_return_node(ad::Tape& t, int r, double gamma, int z_next);

// r_a + gamma * f_a^T (sgrad_next + pi_s^T agrad_next)
std::vector<double> backup_action_grad(const JacobianBundle& j, double gamma,
                                       const std::vector<double>& sgrad_next,
                                       const std::vector<double>& agrad_next);

// Full affine backup of (ret, agrad, sgrad). Componentwise:
//   ret'   = r   + gamma * z
//   agrad' = r_a + gamma * f_a^T (pi_s^T g_a + g_s)
//   sgrad' = r_s + gamma * f_s^T (pi_s^T g_a + g_s)
SobolevSample complete_backup(const JacobianBundle& j, double r, double gamma,
                              const SobolevSample& h_next);

// Contraction constants from Jacobian bounds; gamma*kappa < 1 certifies a
// strict contraction.
double kappa_eff(double l_fa, double l_pi, double l_ds);
double kappa_full(double l_fa, double l_fs, double l_pi);

struct TargetSet {
  Tensor samples;               // [rows, dim], dim = 1 or 1 + |A|
  std::vector<int> provenance;  // which target critic produced each row
};

// Sort descending by the return column, drop the top floor(p*count/100) rows,
// keep survivors in their original order.
TargetSet truncate_top_p(const TargetSet& in, double pct);

// Alg.-2 style target construction for a batch of replayed (s, a): one
// imagined transition per row, N Sobolev samples from each of the two target
// critics, affine backups with world-model Jacobians, TQC truncation. The
// result carries no parameter gradients.
struct TargetBuildConfig {
  int n_samples = 10;          // N per target critic
  double gamma = 0.99;
  double truncation_pct = 25.0;
  bool use_action_gradient = true;
  double smoothing_std = 0.2;  // target policy smoothing, clipped
  double smoothing_clip = 0.5;
  double action_bound = 1.0;
};

struct TargetSetBatch {
  Tensor samples;  // [B * kept, dim]
  std::vector<int> provenance;
  std::size_t kept = 0;  // per transition
  std::size_t dim = 0;
};

TargetSetBatch build_target_set(const nets::CriticNet& critic_tgt_1,
                                const nets::CriticNet& critic_tgt_2,
                                const wm::WorldModel& world,
                                const nets::PolicyNet& policy_tgt,
                                const Tensor& s, const Tensor& a,
                                const std::vector<std::uint8_t>& terminal,
                                const TargetBuildConfig& cfg, Rng& rng);

// Single-transition convenience matching the spec surface.
TargetSet build_target_set_single(const nets::CriticNet& critic_tgt_1,
                                  const nets::CriticNet& critic_tgt_2,
                                  const wm::WorldModel& world,
                                  const nets::PolicyNet& policy_tgt,
                                  const Tensor& s, const Tensor& a,
                                  const TargetBuildConfig& cfg, Rng& rng);

// Deterministic (MAGE-style) targets: minimum of the two target critics with
// the action-gradient of the argmin critic, backed up through the same
// Jacobian chain. Rows: [ret, agrad...] (agrad only if use_action_gradient).
Tensor build_deterministic_targets(const nets::CriticNet& critic_tgt_1,
                                   const nets::CriticNet& critic_tgt_2,
                                   const wm::WorldModel& world,
                                   const nets::PolicyNet& policy_tgt,
                                   const Tensor& s, const Tensor& a,
                                   const std::vector<std::uint8_t>& terminal,
                                   const TargetBuildConfig& cfg, Rng& rng);

}  // namespace dsdpg::bellman
