#pragma once

#include <vector>

#include "dsdpg/nets.hpp"
#include "dsdpg/optim.hpp"
#include "dsdpg/params.hpp"
#include "dsdpg/rng.hpp"
#include "dsdpg/tape.hpp"

namespace dsdpg::wm {

// Diagonal Gaussian via (mean, log-variance); log-variance clamped for
// numerical stability.
struct GaussianParams {
  Tensor mean;
  Tensor logvar;
};

// sum_j [ log(sp/sq) + (sq^2 + (mq-mp)^2) / (2 sp^2) - 1/2 ], summed over all
// entries (use one row per distribution).
double kl_gaussians(const GaussianParams& q, const GaussianParams& p);

// One-step transition-and-reward model: differentiable imagination plus the
// Jacobians target building needs.
struct Imagined {
  Tensor next_state;        // [B, S]
  Tensor reward;            // [B, 1]
  std::vector<Tensor> f_a;  // per row: [S, A]; filled when requested
  Tensor r_a;               // [B, A]
};

class WorldModel {
 public:
  virtual ~WorldModel() = default;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual Imagined imagine_batch(const Tensor& s, const Tensor& a, Rng& rng,
                                 bool with_jacobians) const = 0;
};

// Conditional VAE over (s', r) given (s, a): Gaussian encoder and learned
// Gaussian prior, deterministic decoder predicting (delta_s, r) with the
// delta added back onto s.
struct CvaeConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t latent_dim = 0;  // 0 -> state_dim + 1
  std::vector<std::size_t> hidden = {1024, 1024, 1024};
  bool skip_from_input = true;
  double logvar_lo = -10.0;
  double logvar_hi = 4.0;
  double kl_weight = 0.1;

  std::size_t latent() const { return latent_dim ? latent_dim : state_dim + 1; }
};

class CvaeModel final : public WorldModel {
 public:
  CvaeModel() = default;
  CvaeModel(CvaeConfig cfg, Rng& rng);

  struct GaussianNodes {
    int mean;
    int logvar;
  };
  struct ImaginedNodes {
    int next_state;
    int reward;
  };

  // posterior q(eps | s', r ; s, a)
  GaussianNodes encode(ad::Tape& t, const nets::ParamLookup& p, int s, int a,
                       int s_next, int r) const;
  // learned prior p(eps | s, a)
  GaussianNodes prior(ad::Tape& t, const nets::ParamLookup& p, int s, int a) const;
  // mean + exp(logvar/2) * noise, differentiable through mean and logvar
  static int reparameterize(ad::Tape& t, const GaussianNodes& g, int noise);
  // decoder: (s, a, eps) -> (s + delta_s, r)
  ImaginedNodes decode(ad::Tape& t, const nets::ParamLookup& p, int s, int a,
                       int eps) const;
  // prior draw + decode; gradient w.r.t. (s, a) includes the prior's
  // dependence on them
  ImaginedNodes imagine_nodes(ad::Tape& t, const nets::ParamLookup& p, int s,
                              int a, Rng& rng) const;

  // per-row KL(q || p) -> [B, 1]
  static int kl_node(ad::Tape& t, const GaussianNodes& q, const GaussianNodes& p);

  // negative ELBO: mean over the batch of (squared reconstruction error of
  // (delta_s, r) + kl_weight * KL(posterior || prior))
  int elbo_loss(ad::Tape& t, ParamBinding& bind, const Tensor& s, const Tensor& a,
                const Tensor& s_next, const Tensor& r, Rng& rng) const;

  // one optimizer step on a batch; returns the loss value
  double train_step(const Tensor& s, const Tensor& a, const Tensor& s_next,
                    const Tensor& r, RAdam& opt, Rng& rng);

  std::size_t state_dim() const override { return cfg_.state_dim; }
  std::size_t action_dim() const override { return cfg_.action_dim; }
  Imagined imagine_batch(const Tensor& s, const Tensor& a, Rng& rng,
                         bool with_jacobians) const override;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const CvaeConfig& config() const { return cfg_; }

 private:
  int clamp_logvar(ad::Tape& t, int lv) const;
  CvaeConfig cfg_;
  nets::Mlp encoder_, decoder_, prior_;
  ParamStore params_;
};

}  // namespace dsdpg::wm
