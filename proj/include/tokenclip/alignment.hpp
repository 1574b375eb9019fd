#pragma once

#include "tokenclip/ot.hpp"
#include "tokenclip/types.hpp"

namespace tokenclip {

// Sparse token -> subspace assignment. Every row sums to 1 or is all zero.
struct AssignmentMatrix {
  Mat a;  // N x Q
  int k = 0;
  double epsilon = 0.0;
  int n() const { return static_cast<int>(a.rows()); }
  int q() const { return static_cast<int>(a.cols()); }
};

// Top-k sparsification of a transport plan. Each row is first normalized to
// sum 1 (raw plan rows sum to 1/N, which would make the epsilon filter
// vacuous); then only the k largest entries survive (ties broken toward the
// lowest index), entries <= epsilon are zeroed, and the survivors are
// renormalized. Rows that lose every entry stay all zero.
AssignmentMatrix sparsify_topk(const Mat& plan, int k, double epsilon);
AssignmentMatrix sparsify_topk(const TransportPlan& plan, int k, double epsilon);

// One-hot argmax assignment of each token to its most similar subspace
// (ties toward the lowest index). The degenerate k=1 comparator.
AssignmentMatrix van_assignment(const Mat& sim);

enum class Res { Patch, Pixel };

struct AnomalyMap {
  Arr v;  // h x w scores
  Res res = Res::Patch;
};

// Assignment-weighted per-token logits: z_c(i) = sum_j A_c(i,j) * sim_c(i,j).
// All-zero assignment rows produce logit 0.
std::pair<Vec, Vec> dynamic_logits(const AssignmentMatrix& a_n, const AssignmentMatrix& a_a,
                                   const Mat& sim_n, const Mat& sim_a);

// Two-class softmax with temperature tau over (z_n, z_a), computed in the
// max-shifted form; returns (S_n, S_a) laid out as h x w patch maps.
std::pair<AnomalyMap, AnomalyMap> score_map_from_logits(const Vec& z_n, const Vec& z_a,
                                                        double tau, int h, int w);

// Static comparator: per-token cosine similarity to the class embeddings fed
// through the same softmax.
std::pair<AnomalyMap, AnomalyMap> base_score_map(const TokenGrid& grid, const Vec& l_n,
                                                 const Vec& l_a, double tau);

// Elementwise mean of two maps at the same resolution.
AnomalyMap fuse_pixel_scores(const AnomalyMap& a, const AnomalyMap& b);

enum class ImageScoreFormula { Damped, Balanced };

// Damped:   0.5 * (p_a_global + 0.5 * max(map))  -- map max at quarter weight
// Balanced: 0.5 * (p_a_global + max(map))
double image_score(double p_a_global, const AnomalyMap& fused,
                   ImageScoreFormula formula = ImageScoreFormula::Damped);

struct UsageHistogram {
  Vec support_freq;          // fraction of rows whose support includes j
  Vec argmax_freq;           // distribution of per-row argmax votes
  double normalized_entropy; // entropy of argmax_freq / log Q (0 when Q == 1)
  int rows_counted = 0;      // rows with nonzero support
};

UsageHistogram subspace_usage_histogram(const std::vector<const AssignmentMatrix*>& batch);
UsageHistogram subspace_usage_histogram(const AssignmentMatrix& a);

}  // namespace tokenclip
