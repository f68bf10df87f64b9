#include "dsdpg/supervised.hpp"

#include <cmath>

#include "dsdpg/metrics.hpp"
#include "dsdpg/nets.hpp"
#include "dsdpg/optim.hpp"
#include "dsdpg/rng.hpp"

namespace dsdpg::supervised {

namespace {

struct Model {
  nets::Mlp mlp;
  ParamStore params;
  std::size_t noise_dim;

  Model(std::size_t noise, const std::vector<std::size_t>& hidden, Rng& rng)
      : noise_dim(noise) {
    nets::MlpConfig cfg;
    cfg.in_dim = 1 + noise;
    cfg.hidden = hidden;
    cfg.out_dim = 1;
    cfg.hidden_act = nets::Activation::Swish;
    mlp = nets::Mlp(cfg, "gen");
    mlp.init(params, rng);
  }

  // joint [f; df/dx] rows for a column of x values (with optional noise),
  // built on the tape so the gradient stays differentiable
  struct Joint {
    int samples;  // [rows, 2]
    int x_leaf;
  };
  Joint joint_nodes(ad::Tape& t, const nets::ParamLookup& p, const Tensor& x,
                    const Tensor* noise) const {
    int xl = t.leaf(x);
    int in = xl;
    if (noise_dim > 0) in = t.concat_cols(xl, t.constant(*noise));
    int f = mlp.forward(t, p, in);
    int g = t.gradients(t.sum_all(f), {xl})[0];
    return {t.concat_cols(f, g), xl};
  }
};

double true_f(double a, double x) { return a * std::sin(x); }
double true_g(double a, double x) { return a * std::cos(x); }

}  // namespace

SupervisedLog train_supervised(const SupervisedConfig& cfg) {
  Rng init(Rng(cfg.seed).stream(0).seed());
  Rng data(Rng(cfg.seed).stream(1).seed());
  Rng noise(Rng(cfg.seed).stream(2).seed());
  Rng eval_rng(Rng(cfg.seed).stream(3).seed());

  Model model(cfg.distributional ? cfg.noise_dim : 0, cfg.hidden, init);
  RAdam opt(RAdam::Options{.lr = cfg.lr, .beta1 = 0.5, .beta2 = 0.9});

  auto train_kernel =
      metrics::KernelSpec::rbf_mixture({0.01, 0.05, 0.1, 0.5, 1, 10, 100});
  auto eval_kernel = metrics::KernelSpec::rational_quadratic(1.0);

  // fixed evaluation grid and fixed true-draw set
  Tensor eval_x(cfg.eval_points, 1);
  for (std::size_t i = 0; i < cfg.eval_points; ++i)
    eval_x(i, 0) = 5.0 * double(i) / double(cfg.eval_points - 1);
  std::vector<Tensor> eval_true;  // per x: [eval_draws, 2]
  for (std::size_t i = 0; i < cfg.eval_points; ++i) {
    Tensor tj(cfg.eval_draws, 2);
    for (int k = 0; k < cfg.eval_draws; ++k) {
      const double a = double(eval_rng.index(5));
      tj(k, 0) = true_f(a, eval_x(i, 0));
      tj(k, 1) = true_g(a, eval_x(i, 0));
    }
    eval_true.push_back(tj);
  }

  auto evaluate = [&](long step, double train_loss) {
    const std::size_t P = cfg.eval_points;
    const int draws = cfg.distributional ? cfg.eval_draws : 1;
    Tensor xrep(P * draws, 1);
    for (std::size_t i = 0; i < P; ++i)
      for (int k = 0; k < draws; ++k) xrep(i * draws + k, 0) = eval_x(i, 0);
    Rng er(Rng(cfg.seed).stream(4).seed());  // same eval noise each time
    Tensor xi = er.normal_tensor(P * draws, std::max<std::size_t>(model.noise_dim, 1));

    ad::Tape t;
    auto p = nets::const_lookup(t, model.params);
    auto joint = model.joint_nodes(t, p, xrep,
                                   model.noise_dim ? &xi : nullptr);
    const Tensor& s = t.val(joint.samples);

    double mmd = 0.0, l2 = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      Tensor pred(draws, 2);
      double mf = 0, mg = 0;
      for (int k = 0; k < draws; ++k) {
        pred(k, 0) = s(i * draws + k, 0);
        pred(k, 1) = s(i * draws + k, 1);
        mf += pred(k, 0);
        mg += pred(k, 1);
      }
      mf /= draws;
      mg /= draws;
      mmd += metrics::mmd2_biased(pred, eval_true[i], eval_kernel);
      const double x = eval_x(i, 0);
      l2 += std::pow(mf - 2.0 * std::sin(x), 2) + std::pow(mg - 2.0 * std::cos(x), 2);
    }
    SupervisedRow row;
    row.step = step;
    row.eval_mmd = mmd / double(P);
    row.l2_to_mean = l2 / double(P);
    row.train_loss = train_loss;
    return row;
  };

  SupervisedLog log;
  double loss_accum = 0.0;
  long loss_count = 0;
  for (long step = 1; step <= cfg.steps; ++step) {
    const std::size_t B = cfg.batch;
    const int D = cfg.draws_per_x;
    Tensor x(B, 1);
    Tensor targets(B * D, 2);
    for (std::size_t i = 0; i < B; ++i) {
      x(i, 0) = data.uniform(0.0, 5.0);
      for (int k = 0; k < D; ++k) {
        const double a = double(data.index(5));
        targets(i * D + k, 0) = true_f(a, x(i, 0));
        targets(i * D + k, 1) = true_g(a, x(i, 0));
      }
    }

    ad::Tape t;
    ParamBinding bind(t, model.params);
    auto p = nets::bind_lookup(bind);
    double loss_val = 0.0;
    if (cfg.distributional) {
      Tensor xrep(B * D, 1);
      for (std::size_t i = 0; i < B; ++i)
        for (int k = 0; k < D; ++k) xrep(i * D + k, 0) = x(i, 0);
      Tensor xi = noise.normal_tensor(B * D, model.noise_dim);
      auto joint = model.joint_nodes(t, p, xrep, &xi);
      int per_block = metrics::block_mmd2(t, joint.samples, t.constant(targets), B,
                                          train_kernel);
      int loss = t.scale(t.sum_all(per_block), 1.0 / double(B));
      loss_val = t.val(loss).item();
      auto grads = backward(t, loss, bind);
      opt.step(model.params, grads);
    } else {
      // L2 against every draw: the regressor converges to the conditional mean
      Tensor xrep(B * D, 1);
      for (std::size_t i = 0; i < B; ++i)
        for (int k = 0; k < D; ++k) xrep(i * D + k, 0) = x(i, 0);
      auto joint = model.joint_nodes(t, p, xrep, nullptr);
      int resid = t.sub(joint.samples, t.constant(targets));
      int loss = t.scale(t.sum_all(t.mul(resid, resid)), 1.0 / double(B * D));
      loss_val = t.val(loss).item();
      auto grads = backward(t, loss, bind);
      opt.step(model.params, grads);
    }
    loss_accum += loss_val;
    ++loss_count;

    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      log.rows.push_back(evaluate(step, loss_accum / loss_count));
      loss_accum = 0.0;
      loss_count = 0;
    }
  }
  return log;
}

}  // namespace dsdpg::supervised
