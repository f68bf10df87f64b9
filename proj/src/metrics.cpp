#include "dsdpg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace dsdpg::metrics {

namespace {

double sqdist(const double* x, const double* y, std::size_t d) {
  double u = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = x[i] - y[i];
    u += t * t;
  }
  return u;
}

}  // namespace

void EmpiricalDistribution::validate() const {
  if (atoms.rows() == 0) throw std::invalid_argument("EmpiricalDistribution: no atoms");
  if (weights.size() != atoms.rows())
    throw std::invalid_argument("EmpiricalDistribution: weight count mismatch");
  double s = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("EmpiricalDistribution: negative weight");
    s += w;
  }
  if (std::fabs(s - 1.0) > 1e-12)
    throw std::invalid_argument("EmpiricalDistribution: weights must sum to 1");
}

EmpiricalDistribution EmpiricalDistribution::uniform(Tensor atoms) {
  EmpiricalDistribution e;
  const std::size_t n = atoms.rows();
  e.atoms = std::move(atoms);
  e.weights.assign(n, 1.0 / static_cast<double>(n));
  return e;
}

double mmd2_exact_discrete(const EmpiricalDistribution& mu,
                           const EmpiricalDistribution& nu,
                           const KernelSpec& spec) {
  mu.validate();
  nu.validate();
  spec.validate();
  if (mu.atoms.cols() != nu.atoms.cols())
    throw std::invalid_argument("mmd2_exact_discrete: dimension mismatch");
  const std::size_t d = mu.atoms.cols();
  const std::size_t m = mu.atoms.rows(), n = nu.atoms.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      s += mu.weights[i] * mu.weights[j] *
           kernel_from_sq(spec, sqdist(mu.atoms.data() + i * d, mu.atoms.data() + j * d, d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      s += nu.weights[i] * nu.weights[j] *
           kernel_from_sq(spec, sqdist(nu.atoms.data() + i * d, nu.atoms.data() + j * d, d));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      s -= 2.0 * mu.weights[i] * nu.weights[j] *
           kernel_from_sq(spec, sqdist(mu.atoms.data() + i * d, nu.atoms.data() + j * d, d));
  return s;
}

double mmd2_biased(const Tensor& x, const Tensor& y, const KernelSpec& spec) {
  if (x.rows() == 0 || y.rows() == 0) throw std::invalid_argument("mmd2_biased: empty sample set");
  if (x.cols() != y.cols()) throw std::invalid_argument("mmd2_biased: dimension mismatch");
  const std::size_t d = x.cols(), m = x.rows(), n = y.rows();
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      sxx += kernel_from_sq(spec, sqdist(x.data() + i * d, x.data() + j * d, d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      syy += kernel_from_sq(spec, sqdist(y.data() + i * d, y.data() + j * d, d));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      sxy += kernel_from_sq(spec, sqdist(x.data() + i * d, y.data() + j * d, d));
  return sxx / double(m * m) + syy / double(n * n) - 2.0 * sxy / double(m * n);
}

double mmd2_unbiased(const Tensor& x, const Tensor& y, const KernelSpec& spec) {
  if (x.rows() < 2 || y.rows() < 2)
    throw std::invalid_argument("mmd2_unbiased: needs at least 2 samples per side");
  if (x.cols() != y.cols()) throw std::invalid_argument("mmd2_unbiased: dimension mismatch");
  const std::size_t d = x.cols(), m = x.rows(), n = y.rows();
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) sxx += kernel_from_sq(spec, sqdist(x.data() + i * d, x.data() + j * d, d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) syy += kernel_from_sq(spec, sqdist(y.data() + i * d, y.data() + j * d, d));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      sxy += kernel_from_sq(spec, sqdist(x.data() + i * d, y.data() + j * d, d));
  return sxx / double(m * (m - 1)) + syy / double(n * (n - 1)) - 2.0 * sxy / double(m * n);
}

double w1_1d(std::vector<double> x, std::vector<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("w1_1d: size mismatch");
  if (x.empty()) throw std::invalid_argument("w1_1d: empty sample set");
  std::stable_sort(x.begin(), x.end());
  std::stable_sort(y.begin(), y.end());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::fabs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

// ------------------------------------------------------------- block MMD op

namespace {

struct BlockLayout {
  std::size_t blocks, mx, my, dim;
};

BlockLayout layout_of(const Tensor& x, const Tensor& y, std::size_t blocks) {
  if (blocks == 0) throw std::invalid_argument("block_mmd2: zero blocks");
  if (x.cols() != y.cols()) throw std::invalid_argument("block_mmd2: dimension mismatch");
  if (x.rows() % blocks != 0 || y.rows() % blocks != 0)
    throw std::invalid_argument("block_mmd2: rows not divisible by block count");
  return {blocks, x.rows() / blocks, y.rows() / blocks, x.cols()};
}

// dS/dx_p = (4/m^2) sum_j k'(|x_p-x_j|^2)(x_p-x_j) - (4/(m n)) sum_j k'(|x_p-y_j|^2)(x_p-y_j)
void mmd2_block_grad_x(const KernelSpec& spec, const double* xb, std::size_t m,
                       const double* yb, std::size_t n, std::size_t d, double g,
                       double* out) {
  for (std::size_t p = 0; p < m; ++p) {
    double* o = out + p * d;
    for (std::size_t j = 0; j < m; ++j) {
      const double kd = kernel_deriv_sq(spec, sqdist(xb + p * d, xb + j * d, d));
      const double c = g * 4.0 * kd / double(m * m);
      for (std::size_t t = 0; t < d; ++t) o[t] += c * (xb[p * d + t] - xb[j * d + t]);
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double kd = kernel_deriv_sq(spec, sqdist(xb + p * d, yb + j * d, d));
      const double c = -g * 4.0 * kd / double(m * n);
      for (std::size_t t = 0; t < d; ++t) o[t] += c * (xb[p * d + t] - yb[j * d + t]);
    }
  }
}

class BlockMmd2Grad final : public ad::CustomOp {
 public:
  BlockMmd2Grad(KernelSpec spec, std::size_t blocks, bool wrt_x)
      : spec_(std::move(spec)), blocks_(blocks), wrt_x_(wrt_x) {}
  const char* name() const override { return "block_mmd2_grad"; }

  Tensor forward(const std::vector<const Tensor*>& in) const override {
    const Tensor& g = *in[0];
    const Tensor& x = *in[1];
    const Tensor& y = *in[2];
    const auto lo = layout_of(x, y, blocks_);
    const Tensor& primary = wrt_x_ ? x : y;
    Tensor out(primary.rows(), primary.cols());
    for (std::size_t b = 0; b < lo.blocks; ++b) {
      const double* xb = x.data() + b * lo.mx * lo.dim;
      const double* yb = y.data() + b * lo.my * lo.dim;
      const double gb = g[b];
      if (wrt_x_) {
        mmd2_block_grad_x(spec_, xb, lo.mx, yb, lo.my, lo.dim, gb,
                          out.data() + b * lo.mx * lo.dim);
      } else {
        mmd2_block_grad_x(spec_, yb, lo.my, xb, lo.mx, lo.dim, gb,
                          out.data() + b * lo.my * lo.dim);
      }
    }
    return out;
  }

  std::vector<int> vjp(ad::Tape&, int, const std::vector<int>&, int) const override {
    throw ad::TapeError("block_mmd2 pullback is not differentiable again");
  }

 private:
  KernelSpec spec_;
  std::size_t blocks_;
  bool wrt_x_;
};

class BlockMmd2 final : public ad::CustomOp {
 public:
  BlockMmd2(KernelSpec spec, std::size_t blocks)
      : spec_(std::move(spec)), blocks_(blocks) {}
  const char* name() const override { return "block_mmd2"; }

  Tensor forward(const std::vector<const Tensor*>& in) const override {
    const Tensor& x = *in[0];
    const Tensor& y = *in[1];
    const auto lo = layout_of(x, y, blocks_);
    Tensor out(blocks_, 1);
    for (std::size_t b = 0; b < lo.blocks; ++b) {
      const double* xb = x.data() + b * lo.mx * lo.dim;
      const double* yb = y.data() + b * lo.my * lo.dim;
      double sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < lo.mx; ++i)
        for (std::size_t j = 0; j < lo.mx; ++j)
          sxx += kernel_from_sq(spec_, sqdist(xb + i * lo.dim, xb + j * lo.dim, lo.dim));
      for (std::size_t i = 0; i < lo.my; ++i)
        for (std::size_t j = 0; j < lo.my; ++j)
          syy += kernel_from_sq(spec_, sqdist(yb + i * lo.dim, yb + j * lo.dim, lo.dim));
      for (std::size_t i = 0; i < lo.mx; ++i)
        for (std::size_t j = 0; j < lo.my; ++j)
          sxy += kernel_from_sq(spec_, sqdist(xb + i * lo.dim, yb + j * lo.dim, lo.dim));
      out[b] = sxx / double(lo.mx * lo.mx) + syy / double(lo.my * lo.my) -
               2.0 * sxy / double(lo.mx * lo.my);
    }
    return out;
  }

  std::vector<int> vjp(ad::Tape& t, int g, const std::vector<int>& in,
                       int) const override {
    std::vector<int> grads(2, -1);
    if (t.op_of(in[0]) != ad::Op::Const) {
      grads[0] = t.custom(std::make_shared<BlockMmd2Grad>(spec_, blocks_, true),
                          {g, in[0], in[1]});
    }
    if (t.op_of(in[1]) != ad::Op::Const) {
      grads[1] = t.custom(std::make_shared<BlockMmd2Grad>(spec_, blocks_, false),
                          {g, in[0], in[1]});
    }
    return grads;
  }

 private:
  KernelSpec spec_;
  std::size_t blocks_;
};

}  // namespace

int block_mmd2(ad::Tape& t, int x, int y, std::size_t blocks, const KernelSpec& spec) {
  spec.validate();
  layout_of(t.val(x), t.val(y), blocks);  // shape errors up front
  return t.custom(std::make_shared<BlockMmd2>(spec, blocks), {x, y});
}

int mmd2_biased_node(ad::Tape& t, int x, int y, const KernelSpec& spec) {
  return block_mmd2(t, x, y, 1, spec);
}

// --------------------------------------------------------------- max-sliced

namespace {

// squared MMD of 1-D projections plus its gradient w.r.t. the direction
struct SlicedGrad {
  double mmd2;
  std::vector<double> dtheta;
};

SlicedGrad sliced_mmd2_grad(const Tensor& x, const Tensor& y,
                            const std::vector<double>& theta,
                            const KernelSpec& spec) {
  const std::size_t m = x.rows(), n = y.rows(), d = x.cols();
  std::vector<double> u(m), v(n);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0;
    for (std::size_t t = 0; t < d; ++t) s += x(i, t) * theta[t];
    u[i] = s;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t t = 0; t < d; ++t) s += y(i, t) * theta[t];
    v[i] = s;
  }
  double sxx = 0, syy = 0, sxy = 0;
  std::vector<double> du(m, 0.0), dv(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double diff = u[i] - u[j];
      sxx += kernel_from_sq(spec, diff * diff);
      du[i] += 4.0 / double(m * m) * kernel_deriv_sq(spec, diff * diff) * diff;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = v[i] - v[j];
      syy += kernel_from_sq(spec, diff * diff);
      dv[i] += 4.0 / double(n * n) * kernel_deriv_sq(spec, diff * diff) * diff;
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = u[i] - v[j];
      sxy += kernel_from_sq(spec, diff * diff);
      const double kd = kernel_deriv_sq(spec, diff * diff) * diff;
      du[i] -= 4.0 / double(m * n) * kd;
      dv[j] += 4.0 / double(m * n) * kd;
    }
  SlicedGrad out;
  out.mmd2 = sxx / double(m * m) + syy / double(n * n) - 2.0 * sxy / double(m * n);
  out.dtheta.assign(d, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < d; ++t) out.dtheta[t] += x(i, t) * du[i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < d; ++t) out.dtheta[t] += y(i, t) * dv[i];
  return out;
}

std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::vector<double> w(d);
  for (int attempt = 0; attempt < 64; ++attempt) {
    double nrm = 0;
    for (auto& c : w) {
      c = rng.normal();
      nrm += c * c;
    }
    if (nrm > 1e-12) {
      nrm = std::sqrt(nrm);
      for (auto& c : w) c /= nrm;
      return w;
    }
  }
  throw std::runtime_error("msmmd: could not draw a nonzero direction");
}

std::vector<double> ascend_direction(const Tensor& x, const Tensor& y,
                                     const KernelSpec& spec, const MsmmdOptions& opt,
                                     Rng& rng, double* best_value) {
  const std::size_t d = x.cols();
  std::vector<double> w = random_unit(d, rng);
  std::vector<double> theta = w;
  std::vector<double> best = theta;
  std::vector<double> m1(d, 0.0), m2(d, 0.0);
  double best_j = -1.0;
  for (int t = 0; t <= opt.steps; ++t) {
    SlicedGrad sg = sliced_mmd2_grad(x, y, theta, spec);
    if (!std::isfinite(sg.mmd2)) throw std::runtime_error("msmmd: non-finite ascent value");
    const double j = std::sqrt(std::max(0.0, sg.mmd2));
    if (j > best_j) {
      best_j = j;
      best = theta;
    }
    if (t == opt.steps) break;
    // d sqrt(S) = dS / (2 sqrt(S))
    std::vector<double> g(d, 0.0);
    if (j > 1e-300)
      for (std::size_t c = 0; c < d; ++c) g[c] = sg.dtheta[c] / (2.0 * j);
    if (opt.adaptive) {
      const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double b1t = std::pow(b1, t + 1), b2t = std::pow(b2, t + 1);
      for (std::size_t c = 0; c < d; ++c) {
        m1[c] = b1 * m1[c] + (1 - b1) * g[c];
        m2[c] = b2 * m2[c] + (1 - b2) * g[c] * g[c];
        w[c] += opt.lr * (m1[c] / (1 - b1t)) / (std::sqrt(m2[c] / (1 - b2t)) + eps);
      }
    } else {
      for (std::size_t c = 0; c < d; ++c) w[c] += opt.lr * g[c];
    }
    double nrm = 0;
    for (double c : w) nrm += c * c;
    if (nrm < 1e-12) {
      w = random_unit(d, rng);
      nrm = 1.0;
    } else {
      nrm = std::sqrt(nrm);
    }
    for (std::size_t c = 0; c < d; ++c) {
      theta[c] = w[c] / nrm;
      if (!std::isfinite(theta[c])) throw std::runtime_error("msmmd: non-finite direction");
    }
  }
  if (best_value) *best_value = best_j;
  return best;
}

}  // namespace

MsmmdResult msmmd(const Tensor& x, const Tensor& y, const KernelSpec& spec,
                  const MsmmdOptions& opt, Rng& rng) {
  spec.validate();
  if (x.cols() != y.cols()) throw std::invalid_argument("msmmd: dimension mismatch");
  if (x.cols() == 0 || x.rows() == 0 || y.rows() == 0)
    throw std::invalid_argument("msmmd: empty input");
  double value = 0.0;
  std::vector<double> theta = ascend_direction(x, y, spec, opt, rng, &value);
  MsmmdResult r;
  r.value = value;
  r.theta = Tensor(theta.size(), 1);
  for (std::size_t i = 0; i < theta.size(); ++i) r.theta(i, 0) = theta[i];
  return r;
}

int block_msmmd2(ad::Tape& t, int x, int y, std::size_t blocks,
                 const KernelSpec& spec, const MsmmdOptions& opt, Rng& rng) {
  spec.validate();
  const Tensor& xv = t.val(x);
  const Tensor& yv = t.val(y);
  const auto lo = layout_of(xv, yv, blocks);
  Tensor theta_x(xv.rows(), lo.dim), theta_y(yv.rows(), lo.dim);
  for (std::size_t b = 0; b < blocks; ++b) {
    Tensor xb(lo.mx, lo.dim), yb(lo.my, lo.dim);
    for (std::size_t i = 0; i < lo.mx * lo.dim; ++i) xb[i] = xv[b * lo.mx * lo.dim + i];
    for (std::size_t i = 0; i < lo.my * lo.dim; ++i) yb[i] = yv[b * lo.my * lo.dim + i];
    std::vector<double> th = ascend_direction(xb, yb, spec, opt, rng, nullptr);
    for (std::size_t i = 0; i < lo.mx; ++i)
      for (std::size_t c = 0; c < lo.dim; ++c) theta_x(b * lo.mx + i, c) = th[c];
    for (std::size_t i = 0; i < lo.my; ++i)
      for (std::size_t c = 0; c < lo.dim; ++c) theta_y(b * lo.my + i, c) = th[c];
  }
  int u = t.row_sum(t.mul(x, t.constant(std::move(theta_x))));
  int v = t.row_sum(t.mul(y, t.constant(std::move(theta_y))));
  return block_mmd2(t, u, v, blocks, spec);
}

double msmmd_grid(const EmpiricalDistribution& mu, const EmpiricalDistribution& nu,
                  const KernelSpec& spec, std::size_t n_dirs) {
  mu.validate();
  nu.validate();
  const std::size_t d = mu.atoms.cols();
  if (nu.atoms.cols() != d) throw std::invalid_argument("msmmd_grid: dimension mismatch");

  std::vector<std::vector<double>> dirs;
  if (d == 1) {
    dirs.push_back({1.0});
  } else if (d == 2) {
    for (std::size_t k = 0; k < n_dirs; ++k) {
      const double a = M_PI * double(k) / double(n_dirs);
      dirs.push_back({std::cos(a), std::sin(a)});
    }
  } else if (d == 3) {
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    for (std::size_t k = 0; k < n_dirs; ++k) {
      const double z = (double(k) + 0.5) / double(n_dirs);  // hemisphere
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = 2.0 * M_PI * double(k) / golden;
      dirs.push_back({r * std::cos(phi), r * std::sin(phi), z});
    }
  } else {
    Rng rng(0xd1a5ull);
    for (std::size_t k = 0; k < n_dirs; ++k) dirs.push_back(random_unit(d, rng));
    for (std::size_t ax = 0; ax < d; ++ax) {
      std::vector<double> e(d, 0.0);
      e[ax] = 1.0;
      dirs.push_back(e);
    }
  }

  double best = 0.0;
  for (const auto& th : dirs) {
    EmpiricalDistribution pm, pn;
    pm.atoms = Tensor(mu.atoms.rows(), 1);
    pm.weights = mu.weights;
    for (std::size_t i = 0; i < mu.atoms.rows(); ++i) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += mu.atoms(i, c) * th[c];
      pm.atoms(i, 0) = s;
    }
    pn.atoms = Tensor(nu.atoms.rows(), 1);
    pn.weights = nu.weights;
    for (std::size_t i = 0; i < nu.atoms.rows(); ++i) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += nu.atoms(i, c) * th[c];
      pn.atoms(i, 0) = s;
    }
    const double v = std::sqrt(std::max(0.0, mmd2_exact_discrete(pm, pn, spec)));
    if (v > best) best = v;
  }
  return best;
}

}  // namespace dsdpg::metrics
