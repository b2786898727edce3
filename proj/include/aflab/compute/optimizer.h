#pragma once

#include <vector>

#include "aflab/compute/layers.h"

namespace aflab {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight-decay Adam. Frozen parameters are skipped entirely, so
// their values stay bit-identical. Decay is not applied to 1-row tensors
// (biases, norm gains).
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config = {});

  void Step(double lr);
  long step_count() const { return step_; }

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long step_ = 0;
};

}  // namespace aflab
