#pragma once

#include "tokenclip/types.hpp"

namespace tokenclip {

struct ScoredSet {
  std::vector<double> score;
  std::vector<int> label;  // 0 or 1
  void validate() const;   // equal lengths, both classes present
};

// Rank-based AUROC (Mann-Whitney with average ranks on ties). Produces the
// same double as the O(n^2) pairwise count bit for bit: both numerators are
// half-integers, exactly representable.
double auroc(const ScoredSet& s);

// O(n^2) pairwise reference: wins + 0.5 * ties over positive x negative pairs.
double auroc_pairwise(const ScoredSet& s);

// Average precision, descending score sweep with tied scores handled as one
// group: AP = sum over groups of (recall step) * precision-at-group.
double average_precision(const ScoredSet& s);

// Per-region overlap (4-connected components, deterministic BFS labeling)
// averaged over all anomalous regions, traced against the pooled
// false-positive rate on normal pixels; the curve starts at (0,0), is
// integrated by trapezoid up to fpr_limit, and normalized by fpr_limit.
double aupro(const std::vector<Arr>& scores, const std::vector<Arr>& masks,
             double fpr_limit = 0.3);

// 4-connected components of a binary mask; labels 0..n_regions-1 in BFS
// discovery order (row-major scan), -1 on normal pixels.
Eigen::ArrayXXi connected_components(const Arr& mask, int& n_regions);

}  // namespace tokenclip
