#pragma once

#include "tokenclip/alignment.hpp"
#include "tokenclip/losses.hpp"
#include "tokenclip/semantics.hpp"
#include "tokenclip/types.hpp"

namespace tokenclip {

struct ScoreOptions {
  bool use_van = false;  // one-hot argmax assignment instead of transport
  ImageScoreFormula formula = ImageScoreFormula::Damped;
};

struct SampleScore {
  Arr pixel;  // fused anomaly map at target (pixel) resolution
  double image = 0;
  double p_a_global = 0;
  AssignmentMatrix a_n, a_a;  // empty when the dynamic branch is disabled
};

// Inference for one image: base softmax map, dynamic-alignment map (unless
// disabled), patch-level fusion 0.5*(S_a_da + S_a_base), bilinear upsampling
// to (th, tw), and the global image score.
SampleScore score_sample(const SubspaceModel& m, const TokenGrid& grid, const TrainConfig& cfg,
                         int th, int tw, const ScoreOptions& opt = {});

struct TrainResult {
  SubspaceModel model;
  std::vector<LossBreakdown> history;  // per-epoch means
};

// Adam on the full objective over seeded shuffled minibatches. The dataset
// must contain both labels.
TrainResult train(const std::vector<LabeledSample>& data, const TrainConfig& cfg);

struct EvalResult {
  double image_auroc = 0;
  double image_ap = 0;
  double pixel_auroc = 0;
  double pixel_aupro = 0;
  Vec usage_support;        // pooled over both classes across the test set
  Vec usage_argmax;
  double usage_entropy = 0; // normalized argmax entropy
};

EvalResult evaluate(const SubspaceModel& m, const std::vector<LabeledSample>& test,
                    const TrainConfig& cfg, const ScoreOptions& opt = {},
                    double fpr_limit = 0.3);

}  // namespace tokenclip
