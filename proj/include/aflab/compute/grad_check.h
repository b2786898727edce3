#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aflab/compute/layers.h"

namespace aflab {

struct GradCheckReport {
  int checked = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_entry;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  // Denominator floor for the relative error, so entries where both the
  // analytic and numeric derivatives vanish do not amplify roundoff.
  double floor = 1e-6;
};

// relative error = |analytic - numeric| / max(|analytic|, |numeric|, floor)
double RelativeError(double analytic, double numeric, double floor);

using InputScalarFn = std::function<Var(Graph&, const std::vector<Var>&)>;
using ParamScalarFn = std::function<Var(Graph&)>;

// Central differences w.r.t. every entry of every input tensor.
GradCheckReport CheckInputGradients(const InputScalarFn& fn, const std::vector<Tensor>& inputs,
                                    const GradCheckOptions& options = {});

// Central differences w.r.t. every entry of each listed (trainable) parameter.
GradCheckReport CheckParameterGradients(const ParamScalarFn& fn, const ParameterList& params,
                                        const GradCheckOptions& options = {});

}  // namespace aflab
