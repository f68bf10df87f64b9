#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dsdpg/params.hpp"
#include "dsdpg/tensor.hpp"

namespace dsdpg {

// Rectified Adam with decoupled weight decay. With rectify=false this is
// plain Adam. The rectification falls back to momentum-SGD while the
// variance estimate is still too noisy (rho_t <= 4).
class RAdam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool rectify = true;
  };

  RAdam() : opt_() {}
  explicit RAdam(Options opt) : opt_(opt) {}

  void step(ParamStore& params, const std::map<std::string, Tensor>& grads);
  const Options& options() const { return opt_; }
  void set_lr(double lr) { opt_.lr = lr; }

 private:
  struct Slot {
    Tensor m, v;
  };
  Options opt_;
  std::map<std::string, Slot> slots_;
  long t_ = 0;
};

}  // namespace dsdpg
