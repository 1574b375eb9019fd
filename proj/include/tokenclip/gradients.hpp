#pragma once

#include "tokenclip/alignment.hpp"
#include "tokenclip/losses.hpp"
#include "tokenclip/semantics.hpp"
#include "tokenclip/types.hpp"

namespace tokenclip {

// Selects which objective terms participate in a forward/backward pass.
// Used to isolate individual terms for finite-difference checks; training
// always uses the full selection.
struct TermSelect {
  bool base = true;
  bool da = true;
  bool global = true;
  bool hinge = true;
  bool reg = true;
  static TermSelect only(const char* name);
};

struct ForwardResult {
  LossBreakdown losses;
  AssignmentMatrix a_n, a_a;  // assignments used (empty when the branch is off)
};

// Loss-only forward pass. If fix_n/fix_a are given they are used as the
// assignments instead of re-solving the transport problem — this is the
// stop-gradient convention: the assignment is a constant of the surrounding
// optimization step.
ForwardResult forward_losses(const SubspaceModel& m, const LabeledSample& s,
                             const TrainConfig& cfg, const TermSelect& sel = {},
                             const AssignmentMatrix* fix_n = nullptr,
                             const AssignmentMatrix* fix_a = nullptr);

// Analytic gradients of the selected total. grad is overwritten (shapes must
// mirror m). The transport-derived assignments are treated as constants.
ForwardResult backward(const SubspaceModel& m, const LabeledSample& s, const TrainConfig& cfg,
                       GradientSet& grad, const TermSelect& sel = {});

// Max over all scalar parameters of |analytic - central difference| /
// max(|central difference|, 1e-8), with the assignment held fixed at the base
// point in both perturbed evaluations.
double finite_diff_check(const SubspaceModel& m, const LabeledSample& s, const TrainConfig& cfg,
                         const TermSelect& sel = {}, double step = 1e-5);

}  // namespace tokenclip
