#include "dsdpg/optim.hpp"

namespace dsdpg {

void RAdam::step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double b1 = opt_.beta1, b2 = opt_.beta2;
  const double b1t = std::pow(b1, t_), b2t = std::pow(b2, t_);
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho_t = rho_inf - 2.0 * t_ * b2t / (1.0 - b2t);
  double rect = 1.0;
  bool use_variance = true;
  if (opt_.rectify) {
    if (rho_t > 4.0) {
      rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                       ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    } else {
      use_variance = false;
    }
  }

  for (std::size_t i = 0; i < params.count(); ++i) {
    const std::string& name = params.name_at(i);
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    Tensor& p = params.tensor_at(i);
    auto& slot = slots_[name];
    if (slot.m.size() != p.size()) {
      slot.m = Tensor(p.rows(), p.cols());
      slot.v = Tensor(p.rows(), p.cols());
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      slot.m[j] = b1 * slot.m[j] + (1.0 - b1) * g[j];
      slot.v[j] = b2 * slot.v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = slot.m[j] / (1.0 - b1t);
      double update;
      if (use_variance) {
        const double vhat = std::sqrt(slot.v[j] / (1.0 - b2t));
        update = rect * mhat / (vhat + opt_.eps);
      } else {
        update = mhat;
      }
      if (opt_.weight_decay != 0.0) p[j] -= opt_.lr * opt_.weight_decay * p[j];
      p[j] -= opt_.lr * update;
    }
  }
}

}  // namespace dsdpg
