#include "tokenclip/alignment.hpp"

#include "tokenclip/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tokenclip {

AssignmentMatrix sparsify_topk(const Mat& plan, int k, double epsilon) {
  require(k >= 1, "sparsify_topk: k must be at least 1");
  require(epsilon >= 0.0 && epsilon < 1.0, "sparsify_topk: epsilon must be in [0, 1)");
  require(plan.rows() > 0 && plan.cols() > 0, "sparsify_topk: empty plan");
  require((plan.array() >= 0.0).all(), "sparsify_topk: plan entries must be nonnegative");

  const int n = static_cast<int>(plan.rows()), q = static_cast<int>(plan.cols());
  AssignmentMatrix out;
  out.k = k;
  out.epsilon = epsilon;
  out.a = Mat::Zero(n, q);
  std::vector<int> idx(q);
  for (int i = 0; i < n; ++i) {
    double rs = plan.row(i).sum();
    if (rs <= 0.0) continue;  // all-zero rows stay all-zero
    Vec row = plan.row(i).transpose() / rs;
    std::iota(idx.begin(), idx.end(), 0);
    // stable sort keeps the lowest index first among equal weights
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return row(a) > row(b); });
    double kept = 0.0;
    for (int r = 0; r < std::min(k, q); ++r) {
      int j = idx[r];
      if (row(j) > epsilon) {
        out.a(i, j) = row(j);
        kept += row(j);
      }
    }
    if (kept > 0.0) out.a.row(i) /= kept;
  }
  return out;
}

AssignmentMatrix sparsify_topk(const TransportPlan& plan, int k, double epsilon) {
  return sparsify_topk(plan.t, k, epsilon);
}

AssignmentMatrix van_assignment(const Mat& sim) {
  require(sim.rows() > 0 && sim.cols() > 0, "van_assignment: empty similarity matrix");
  const int n = static_cast<int>(sim.rows()), q = static_cast<int>(sim.cols());
  AssignmentMatrix out;
  out.k = 1;
  out.epsilon = 0.0;
  out.a = Mat::Zero(n, q);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < q; ++j)
      if (sim(i, j) > sim(i, best)) best = j;  // strict > keeps the lowest index on ties
    out.a(i, best) = 1.0;
  }
  return out;
}

std::pair<Vec, Vec> dynamic_logits(const AssignmentMatrix& a_n, const AssignmentMatrix& a_a,
                                   const Mat& sim_n, const Mat& sim_a) {
  require(a_n.a.rows() == sim_n.rows() && a_n.a.cols() == sim_n.cols(),
          "dynamic_logits: normal assignment/similarity shape mismatch");
  require(a_a.a.rows() == sim_a.rows() && a_a.a.cols() == sim_a.cols(),
          "dynamic_logits: anomalous assignment/similarity shape mismatch");
  require(a_n.a.rows() == a_a.a.rows(), "dynamic_logits: class row counts differ");
  Vec z_n = (a_n.a.array() * sim_n.array()).rowwise().sum();
  Vec z_a = (a_a.a.array() * sim_a.array()).rowwise().sum();
  return {z_n, z_a};
}

std::pair<AnomalyMap, AnomalyMap> score_map_from_logits(const Vec& z_n, const Vec& z_a,
                                                        double tau, int h, int w) {
  require(tau > 0.0, "score map: tau must be positive");
  require(h > 0 && w > 0, "score map: grid dimensions must be positive");
  require(z_n.size() == static_cast<long>(h) * w && z_a.size() == z_n.size(),
          "score map: logit length must equal h*w");
  AnomalyMap sn{Arr(h, w), Res::Patch}, sa{Arr(h, w), Res::Patch};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      auto [pn, pa] = softmax_pair(z_n(r * w + c), z_a(r * w + c), tau);
      sn.v(r, c) = pn;
      sa.v(r, c) = pa;
    }
  return {sn, sa};
}

std::pair<AnomalyMap, AnomalyMap> base_score_map(const TokenGrid& grid, const Vec& l_n,
                                                 const Vec& l_a, double tau) {
  grid.validate();
  require(l_n.size() == grid.dim() && l_a.size() == grid.dim(),
          "base score map: embedding dimension mismatch");
  Mat embeds(2, grid.dim());
  embeds.row(0) = l_n.transpose();
  embeds.row(1) = l_a.transpose();
  Mat sim = cosine_sim(grid.tokens, embeds, "token", "class embedding");
  return score_map_from_logits(sim.col(0), sim.col(1), tau, grid.h, grid.w);
}

AnomalyMap fuse_pixel_scores(const AnomalyMap& a, const AnomalyMap& b) {
  require(a.v.rows() == b.v.rows() && a.v.cols() == b.v.cols(),
          "fuse_pixel_scores: resolution mismatch");
  require(a.res == b.res, "fuse_pixel_scores: maps live at different resolutions");
  return {0.5 * (a.v + b.v), a.res};
}

double image_score(double p_a_global, const AnomalyMap& fused, ImageScoreFormula formula) {
  require(fused.v.size() > 0, "image_score: empty map");
  double m = fused.v.maxCoeff();
  if (formula == ImageScoreFormula::Balanced) return 0.5 * (p_a_global + m);
  return 0.5 * (p_a_global + 0.5 * m);
}

UsageHistogram subspace_usage_histogram(const std::vector<const AssignmentMatrix*>& batch) {
  require(!batch.empty(), "usage histogram: empty batch");
  const int q = batch.front()->q();
  Vec support = Vec::Zero(q), votes = Vec::Zero(q);
  long rows_total = 0;
  int counted = 0;
  for (const auto* am : batch) {
    require(am && am->q() == q, "usage histogram: inconsistent subspace counts");
    for (int i = 0; i < am->n(); ++i) {
      ++rows_total;
      if (am->a.row(i).sum() <= 0.0) continue;  // all-zero rows carry no vote
      ++counted;
      int best = 0;
      for (int j = 0; j < q; ++j) {
        if (am->a(i, j) > 0.0) support(j) += 1.0;
        if (am->a(i, j) > am->a(i, best)) best = j;
      }
      votes(best) += 1.0;
    }
  }
  UsageHistogram out;
  out.rows_counted = counted;
  out.support_freq = rows_total > 0 ? Vec(support / rows_total) : Vec(Vec::Zero(q));
  if (counted > 0) {
    out.argmax_freq = votes / counted;
    double ent = 0.0;
    for (int j = 0; j < q; ++j)
      if (out.argmax_freq(j) > 0.0) ent -= out.argmax_freq(j) * std::log(out.argmax_freq(j));
    out.normalized_entropy = q > 1 ? ent / std::log(static_cast<double>(q)) : 0.0;
  } else {
    out.argmax_freq = Vec::Zero(q);
    out.normalized_entropy = 0.0;
  }
  return out;
}

UsageHistogram subspace_usage_histogram(const AssignmentMatrix& a) {
  return subspace_usage_histogram(std::vector<const AssignmentMatrix*>{&a});
}

}  // namespace tokenclip
