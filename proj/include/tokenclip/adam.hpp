#pragma once

#include "tokenclip/semantics.hpp"

namespace tokenclip {

struct AdamState {
  GradientSet m, v;  // first/second moments, shapes mirror the model
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(const SubspaceModel& model);

// Bias-corrected Adam update, applied in visit_params order.
void adam_step(SubspaceModel& model, AdamState& st, const GradientSet& grad, double lr);

}  // namespace tokenclip
