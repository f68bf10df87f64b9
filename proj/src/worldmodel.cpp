#include "dsdpg/worldmodel.hpp"

#include <cmath>
#include <stdexcept>

namespace dsdpg::wm {

double kl_gaussians(const GaussianParams& q, const GaussianParams& p) {
  if (!q.mean.same_shape(p.mean) || !q.logvar.same_shape(p.logvar) ||
      !q.mean.same_shape(q.logvar))
    throw std::invalid_argument("kl_gaussians: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double lvq = q.logvar[i], lvp = p.logvar[i];
    if (!std::isfinite(lvq) || !std::isfinite(lvp))
      throw std::invalid_argument("kl_gaussians: non-finite variance");
    const double dm = q.mean[i] - p.mean[i];
    s += 0.5 * (lvp - lvq) + 0.5 * (std::exp(lvq) + dm * dm) * std::exp(-lvp) - 0.5;
  }
  return s;
}

CvaeModel::CvaeModel(CvaeConfig cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.state_dim == 0 || cfg_.action_dim == 0)
    throw std::invalid_argument("CvaeModel: zero state/action dim");
  const std::size_t S = cfg_.state_dim, A = cfg_.action_dim, L = cfg_.latent();

  nets::MlpConfig enc;
  enc.in_dim = S + A + S + 1;  // (s, a, s', r)
  enc.hidden = cfg_.hidden;
  enc.out_dim = 2 * L;
  enc.hidden_act = nets::Activation::Swish;
  enc.skip_from_input = cfg_.skip_from_input;
  encoder_ = nets::Mlp(enc, "enc");
  encoder_.init(params_, rng);

  nets::MlpConfig pri;
  pri.in_dim = S + A;
  pri.hidden = cfg_.hidden;
  pri.out_dim = 2 * L;
  pri.hidden_act = nets::Activation::Swish;
  pri.skip_from_input = cfg_.skip_from_input;
  prior_ = nets::Mlp(pri, "prior");
  prior_.init(params_, rng);

  nets::MlpConfig dec;
  dec.in_dim = S + A + L;
  dec.hidden = cfg_.hidden;
  dec.out_dim = S + 1;  // (delta_s, r)
  dec.hidden_act = nets::Activation::Swish;
  dec.skip_from_input = cfg_.skip_from_input;
  decoder_ = nets::Mlp(dec, "dec");
  decoder_.init(params_, rng);
}

int CvaeModel::clamp_logvar(ad::Tape& t, int lv) const {
  return t.clamp(lv, cfg_.logvar_lo, cfg_.logvar_hi);
}

CvaeModel::GaussianNodes CvaeModel::encode(ad::Tape& t, const nets::ParamLookup& p,
                                           int s, int a, int s_next, int r) const {
  int in = t.concat_cols(t.concat_cols(s, a), t.concat_cols(s_next, r));
  int out = encoder_.forward(t, p, in);
  const std::size_t L = cfg_.latent();
  return {t.slice_cols(out, 0, L), clamp_logvar(t, t.slice_cols(out, L, 2 * L))};
}

CvaeModel::GaussianNodes CvaeModel::prior(ad::Tape& t, const nets::ParamLookup& p,
                                          int s, int a) const {
  int out = prior_.forward(t, p, t.concat_cols(s, a));
  const std::size_t L = cfg_.latent();
  return {t.slice_cols(out, 0, L), clamp_logvar(t, t.slice_cols(out, L, 2 * L))};
}

int CvaeModel::reparameterize(ad::Tape& t, const GaussianNodes& g, int noise) {
  int std_dev = t.exp(t.scale(g.logvar, 0.5));
  return t.add(g.mean, t.mul(std_dev, noise));
}

CvaeModel::ImaginedNodes CvaeModel::decode(ad::Tape& t, const nets::ParamLookup& p,
                                           int s, int a, int eps) const {
  int out = decoder_.forward(t, p, t.concat_cols(t.concat_cols(s, a), eps));
  const std::size_t S = cfg_.state_dim;
  int delta = t.slice_cols(out, 0, S);
  int reward = t.slice_cols(out, S, S + 1);
  return {t.add(s, delta), reward};
}

CvaeModel::ImaginedNodes CvaeModel::imagine_nodes(ad::Tape& t,
                                                  const nets::ParamLookup& p,
                                                  int s, int a, Rng& rng) const {
  GaussianNodes g = prior(t, p, s, a);
  int noise = t.constant(rng.normal_tensor(t.val(s).rows(), cfg_.latent()));
  int eps = reparameterize(t, g, noise);
  return decode(t, p, s, a, eps);
}

int CvaeModel::kl_node(ad::Tape& t, const GaussianNodes& q, const GaussianNodes& p) {
  int dm = t.sub(q.mean, p.mean);
  int num = t.add(t.exp(q.logvar), t.mul(dm, dm));
  int term = t.scale(t.mul(num, t.exp(t.scale(p.logvar, -1.0))), 0.5);
  int lv = t.scale(t.sub(p.logvar, q.logvar), 0.5);
  int per_dim = t.add_scalar(t.add(lv, term), -0.5);
  return t.row_sum(per_dim);
}

int CvaeModel::elbo_loss(ad::Tape& t, ParamBinding& bind, const Tensor& s,
                         const Tensor& a, const Tensor& s_next, const Tensor& r,
                         Rng& rng) const {
  if (s.rows() == 0) throw std::invalid_argument("elbo_loss: empty batch");
  const std::size_t B = s.rows();
  auto p = nets::bind_lookup(bind);
  int sn = t.constant(s);
  int an = t.constant(a);
  int snn = t.constant(s_next);
  int rn = t.constant(r);

  GaussianNodes q = encode(t, p, sn, an, snn, rn);
  int noise = t.constant(rng.normal_tensor(B, cfg_.latent()));
  int eps = reparameterize(t, q, noise);
  ImaginedNodes dec = decode(t, p, sn, an, eps);

  // reconstruction in (delta_s, r) space
  int pred = t.concat_cols(t.sub(dec.next_state, sn), dec.reward);
  Tensor target(B, cfg_.state_dim + 1);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < cfg_.state_dim; ++j)
      target(i, j) = s_next(i, j) - s(i, j);
    target(i, cfg_.state_dim) = r(i, 0);
  }
  int resid = t.sub(pred, t.constant(std::move(target)));
  int recon = t.scale(t.sum_all(t.mul(resid, resid)), 1.0 / double(B));

  GaussianNodes pr = prior(t, p, sn, an);
  int kl = t.scale(t.sum_all(kl_node(t, q, pr)), cfg_.kl_weight / double(B));
  return t.add(recon, kl);
}

double CvaeModel::train_step(const Tensor& s, const Tensor& a, const Tensor& s_next,
                             const Tensor& r, RAdam& opt, Rng& rng) {
  ad::Tape t;
  ParamBinding bind(t, params_);
  int loss = elbo_loss(t, bind, s, a, s_next, r, rng);
  const double value = t.val(loss).item();
  auto grads = backward(t, loss, bind);
  opt.step(params_, grads);
  return value;
}

Imagined CvaeModel::imagine_batch(const Tensor& s, const Tensor& a, Rng& rng,
                                  bool with_jacobians) const {
  const std::size_t B = s.rows(), S = cfg_.state_dim, A = cfg_.action_dim;
  ad::Tape t;
  auto p = nets::const_lookup(t, params_);
  int sn = t.constant(s);
  int an = t.leaf(a);
  ImaginedNodes img = imagine_nodes(t, p, sn, an, rng);

  Imagined out;
  out.next_state = t.val(img.next_state);
  out.reward = t.val(img.reward);
  if (!with_jacobians) return out;

  out.f_a.assign(B, Tensor(S, A));
  out.r_a = Tensor(B, A);
  const std::size_t mark = t.size();
  for (std::size_t c = 0; c < S + 1; ++c) {
    int comp = c < S ? t.slice_cols(img.next_state, c, c + 1) : img.reward;
    int g = t.gradients(t.sum_all(comp), {an})[0];  // rows are independent
    const Tensor& gv = t.val(g);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < A; ++j) {
        if (c < S)
          out.f_a[b](c, j) = gv(b, j);
        else
          out.r_a(b, j) = gv(b, j);
      }
    t.rollback(mark);
  }
  return out;
}

}  // namespace dsdpg::wm
