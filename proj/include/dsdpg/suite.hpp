#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsdpg/envs.hpp"
#include "dsdpg/metrics.hpp"

namespace dsdpg::suite {

struct PropertyResult {
  std::string name;
  bool pass = false;
  long cases = 0;
  double worst_measured = 0.0;  // worst ratio / violation observed
  double bound = 0.0;           // the theoretical bound it was held against
  std::string counterexample;   // inputs of the first failure, if any
};

struct SuiteReport {
  std::vector<PropertyResult> properties;
  bool all_pass() const;
  std::string to_json() const;  // serializable report
};

// individually runnable, seeded properties ------------------------------

// MMD(P,Q) = MMD(Q,P) and MMD(P,P) = 0 for the estimators and the oracle
PropertyResult prop_identity_symmetry(std::uint64_t seed, long cases);
// exact MMD^2(s mu, s nu) <= s MMD^2(mu, nu) + 1e-9, dims 1-4, s in [0,1]
PropertyResult prop_scale_contraction(std::uint64_t seed, long cases);
// shifting both distributions leaves the oracle unchanged within 1e-10
PropertyResult prop_translation_invariance(std::uint64_t seed, long cases);
// unsquared MMD of mixtures <= mixture of MMDs (p = 1), within 1e-9
PropertyResult prop_mixture_convexity(std::uint64_t seed, long cases);
// ascent value at the returned direction >= value at the initial direction
PropertyResult prop_msmmd_monotone(std::uint64_t seed, long cases);
// biased estimator >= -1e-9 on equal-size sample sets
PropertyResult prop_biased_nonneg(std::uint64_t seed, long cases);
// matrix-form affine pushforward of Dirac atoms equals the componentwise
// complete backup exactly (two algebraic routes)
PropertyResult prop_dirac_pushforward(std::uint64_t seed, long cases);
// iterated complete backups on the analytic env contract to the closed-form
// fixed point with per-iteration sup-error ratio <= gamma kappa_full + 0.02
PropertyResult prop_operator_fixed_point(const envs::AnalyticEnv& env, int iters);
// one operator application on random Dirac-mixture maps shrinks sup-MSMMD by
// <= sqrt(gamma kappa_full) * 1.05 (grid-oracle MSMMD, 3-D samples)
PropertyResult prop_msmmd_contraction(const envs::AnalyticEnv& env, std::uint64_t seed,
                                      int trials);
// max return of truncation survivors never exceeds the input's max
PropertyResult prop_truncation_monotone(std::uint64_t seed, long cases);
// a sign-flipped multiquadric kernel must be flagged by the identity check
PropertyResult prop_broken_kernel_detected(std::uint64_t seed);

// the full verification suite; `sizes` scales the per-property case counts
SuiteReport contraction_suite(std::uint64_t seed, int sizes);

}  // namespace dsdpg::suite
