#pragma once

#include <cstdint>
#include <vector>

#include "dsdpg/tensor.hpp"

namespace dsdpg::supervised {

// Joint-output-and-gradient toy: learn p(y | x) for y = a sin(x) with a drawn
// uniformly from {0..4}, x ~ U[0, 5]. A noise-conditioned generator trained
// by MMD on the joint [f; df/dx] samples is compared against a deterministic
// regressor trained by L2 on the same joint targets.
struct SupervisedConfig {
  long steps = 25000;
  std::size_t batch = 256;
  int draws_per_x = 4;
  std::size_t noise_dim = 10;
  std::vector<std::size_t> hidden = {256, 256};
  double lr = 1e-3;  // rectified adaptive-moment, betas (0.5, 0.9)
  long eval_interval = 2500;
  std::size_t eval_points = 128;
  int eval_draws = 16;
  std::uint64_t seed = 0;
  bool distributional = true;  // which model this run trains
};

struct SupervisedRow {
  long step = 0;
  double eval_mmd = 0.0;      // rational-quadratic MMD^2 on the joint variable
  double l2_to_mean = 0.0;    // squared error to (2 sin x, 2 cos x)
  double train_loss = 0.0;
};

struct SupervisedLog {
  std::vector<SupervisedRow> rows;
};

SupervisedLog train_supervised(const SupervisedConfig& cfg);

}  // namespace dsdpg::supervised
