#include "tokenclip/adam.hpp"

#include <cmath>

namespace tokenclip {

AdamState make_adam(const SubspaceModel& model) {
  AdamState st;
  st.m = zeros_like(model);
  st.v = zeros_like(model);
  return st;
}

void adam_step(SubspaceModel& model, AdamState& st, const GradientSet& grad, double lr) {
  ++st.t;
  auto pv = param_views(model);
  auto gv = param_views(const_cast<GradientSet&>(grad));
  auto mv = param_views(st.m);
  auto vv = param_views(st.v);
  require(pv.size() == gv.size() && pv.size() == mv.size() && pv.size() == vv.size(),
          "adam: parameter/gradient structure mismatch");
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (size_t b = 0; b < pv.size(); ++b) {
    require(pv[b].size() == gv[b].size(), "adam: block size mismatch");
    mv[b] = st.beta1 * mv[b] + (1.0 - st.beta1) * gv[b];
    vv[b] = st.beta2 * vv[b].array().matrix() +
            (1.0 - st.beta2) * gv[b].array().square().matrix();
    pv[b].array() -=
        lr * (mv[b].array() / bc1) / ((vv[b].array() / bc2).sqrt() + st.eps);
  }
}

}  // namespace tokenclip
