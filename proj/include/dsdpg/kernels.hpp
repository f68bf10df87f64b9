#pragma once

#include <cstddef>
#include <vector>

#include "dsdpg/tensor.hpp"

namespace dsdpg::metrics {

enum class KernelFamily { Multiquadric, RbfMixture, RationalQuadratic };

// Multiquadric: k_h(x,y) = -sqrt(1 + h^2 ||x-y||^2)
// RBF mixture:  sum_i exp(-||x-y||^2 / (2 sigma_i^2))
// Rational quadratic (evaluation kernel): (1 + ||x-y||^2 / (2 alpha))^-alpha
struct KernelSpec {
  KernelFamily family = KernelFamily::Multiquadric;
  double mq_scale = 100.0;         // h
  std::vector<double> bandwidths;  // RBF sigmas
  double rq_alpha = 1.0;

  static KernelSpec multiquadric(double h);
  static KernelSpec rbf_mixture(std::vector<double> sigmas);
  static KernelSpec rational_quadratic(double alpha);
  void validate() const;
};

// kernel value as a function of the squared distance u = ||x-y||^2
double kernel_from_sq(const KernelSpec& spec, double u);
// derivative dk/du, used by the MMD pullbacks and the slicing ascent
double kernel_deriv_sq(const KernelSpec& spec, double u);

double kernel_eval(const KernelSpec& spec, const double* x, const double* y,
                   std::size_t dim);
double kernel_eval(const KernelSpec& spec, const Tensor& x, const Tensor& y);

}  // namespace dsdpg::metrics
