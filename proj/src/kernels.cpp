#include "dsdpg/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace dsdpg::metrics {

KernelSpec KernelSpec::multiquadric(double h) {
  KernelSpec s;
  s.family = KernelFamily::Multiquadric;
  s.mq_scale = h;
  s.validate();
  return s;
}

KernelSpec KernelSpec::rbf_mixture(std::vector<double> sigmas) {
  KernelSpec s;
  s.family = KernelFamily::RbfMixture;
  s.bandwidths = std::move(sigmas);
  s.validate();
  return s;
}

KernelSpec KernelSpec::rational_quadratic(double alpha) {
  KernelSpec s;
  s.family = KernelFamily::RationalQuadratic;
  s.rq_alpha = alpha;
  s.validate();
  return s;
}

void KernelSpec::validate() const {
  switch (family) {
    case KernelFamily::Multiquadric:
      if (mq_scale <= 0.0) throw std::invalid_argument("kernel: h must be > 0");
      break;
    case KernelFamily::RbfMixture:
      if (bandwidths.empty()) throw std::invalid_argument("kernel: empty bandwidth list");
      for (double b : bandwidths)
        if (b <= 0.0) throw std::invalid_argument("kernel: bandwidths must be > 0");
      break;
    case KernelFamily::RationalQuadratic:
      if (rq_alpha <= 0.0) throw std::invalid_argument("kernel: alpha must be > 0");
      break;
  }
}

double kernel_from_sq(const KernelSpec& spec, double u) {
  switch (spec.family) {
    case KernelFamily::Multiquadric:
      return -std::sqrt(1.0 + spec.mq_scale * spec.mq_scale * u);
    case KernelFamily::RbfMixture: {
      double s = 0.0;
      for (double b : spec.bandwidths) s += std::exp(-u / (2.0 * b * b));
      return s;
    }
    case KernelFamily::RationalQuadratic:
      return std::pow(1.0 + u / (2.0 * spec.rq_alpha), -spec.rq_alpha);
  }
  return 0.0;
}

double kernel_deriv_sq(const KernelSpec& spec, double u) {
  switch (spec.family) {
    case KernelFamily::Multiquadric: {
      const double h2 = spec.mq_scale * spec.mq_scale;
      return -0.5 * h2 / std::sqrt(1.0 + h2 * u);
    }
    case KernelFamily::RbfMixture: {
      double s = 0.0;
      for (double b : spec.bandwidths) {
        const double inv = 1.0 / (2.0 * b * b);
        s += -inv * std::exp(-u * inv);
      }
      return s;
    }
    case KernelFamily::RationalQuadratic:
      return -0.5 * std::pow(1.0 + u / (2.0 * spec.rq_alpha), -spec.rq_alpha - 1.0);
  }
  return 0.0;
}

double kernel_eval(const KernelSpec& spec, const double* x, const double* y,
                   std::size_t dim) {
  double u = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = x[i] - y[i];
    u += d * d;
  }
  return kernel_from_sq(spec, u);
}

double kernel_eval(const KernelSpec& spec, const Tensor& x, const Tensor& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch");
  return kernel_eval(spec, x.data(), y.data(), x.size());
}

}  // namespace dsdpg::metrics
