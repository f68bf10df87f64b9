#pragma once

#include <vector>

#include "dsdpg/kernels.hpp"
#include "dsdpg/rng.hpp"
#include "dsdpg/tape.hpp"
#include "dsdpg/tensor.hpp"

namespace dsdpg::metrics {

// Finite weighted atom set in R^d; the exact-MMD oracle operates on these.
struct EmpiricalDistribution {
  Tensor atoms;                 // [n, d]
  std::vector<double> weights;  // nonnegative, sums to 1 within 1e-12

  void validate() const;
  static EmpiricalDistribution uniform(Tensor atoms);
};

// Exact weighted double sum; the oracle behind the contraction property suite.
double mmd2_exact_discrete(const EmpiricalDistribution& mu,
                           const EmpiricalDistribution& nu,
                           const KernelSpec& spec);

// Biased estimator, generalized to unequal sample counts with 1/(mn) cross
// terms. Rows of X, Y are samples.
double mmd2_biased(const Tensor& x, const Tensor& y, const KernelSpec& spec);

// Unbiased estimator: diagonal terms excluded from the within sums; can be
// negative. Requires at least two samples on each side.
double mmd2_unbiased(const Tensor& x, const Tensor& y, const KernelSpec& spec);

// Sorted-sample Wasserstein-1 between equal-size scalar sample sets.
double w1_1d(std::vector<double> x, std::vector<double> y);

// --------------------------------------------------------------- tape ops

// Per-block biased MMD^2 between consecutive row blocks of X (m rows each)
// and Y (n rows each): output [blocks, 1]. Gradients flow into the sample
// coordinates of both inputs (skipped for constants).
int block_mmd2(ad::Tape& t, int x, int y, std::size_t blocks,
               const KernelSpec& spec);

// Single-pair convenience: biased MMD^2 as a scalar node.
int mmd2_biased_node(ad::Tape& t, int x, int y, const KernelSpec& spec);

// --------------------------------------------------------------- max-sliced

struct MsmmdOptions {
  int steps = 100;       // ascent steps T
  double lr = 1e-4;      // step size eta
  bool adaptive = true;  // adaptive-moment ascent (paper default) vs plain sgd
};

struct MsmmdResult {
  double value;  // unsquared MMD at the returned direction
  Tensor theta;  // [d, 1], unit norm, gradient-stopped by construction
};

// Sphere-projected gradient ascent over slicing directions; keeps the best
// direction seen (the initial one included) and evaluates there. Returns the
// unsquared MMD of the 1-D projections.
MsmmdResult msmmd(const Tensor& x, const Tensor& y, const KernelSpec& spec,
                  const MsmmdOptions& opt, Rng& rng);

// Training loss: per-block squared MSMMD. The ascent runs outside the tape
// (directions are gradient-stopped per the estimation procedure); the final
// projection and MMD^2 are tape ops, so gradients flow into the samples.
int block_msmmd2(ad::Tape& t, int x, int y, std::size_t blocks,
                 const KernelSpec& spec, const MsmmdOptions& opt, Rng& rng);

// Deterministic direction-grid evaluation of the max-sliced MMD between
// discrete distributions (half-circle grid in 2-D, Fibonacci sphere in 3-D,
// seeded quasi-random directions above). Used as the suite/test oracle.
double msmmd_grid(const EmpiricalDistribution& mu, const EmpiricalDistribution& nu,
                  const KernelSpec& spec, std::size_t n_dirs);

}  // namespace dsdpg::metrics
