#pragma once

#include "tokenclip/types.hpp"

#include <array>

namespace tokenclip {

struct AffineMap {
  Mat W;
  Vec b;
};

// Learnable parameters of one semantic class.
struct ClassParams {
  Vec l;                      // local class embedding, length d
  Vec g;                      // global class embedding, length d
  std::vector<AffineMap> head;  // Q subspace heads, each d -> d
  AffineMap fuse;             // 2d -> d fusion of [g; l]
};

struct SubspaceModel {
  int d = 0;
  int q = 0;
  std::array<ClassParams, 2> cls;  // [0] normal, [1] anomalous

  ClassParams& normal() { return cls[0]; }
  ClassParams& anomalous() { return cls[1]; }
  const ClassParams& normal() const { return cls[0]; }
  const ClassParams& anomalous() const { return cls[1]; }
};

// Gradients (and Adam moments) mirror the parameter shapes exactly.
using GradientSet = SubspaceModel;

// Base embeddings: Gaussian scale 1/sqrt(d), unit-normalized. Heads: identity
// plus Gaussian noise of the given scale, zero offsets. Fusion: [I | 0] (so it
// initially selects g from [g; l]) plus the same noise, zero offset.
SubspaceModel init_model(int d, int q, uint64_t seed, double noise = 0.1);

SubspaceModel zeros_like(const SubspaceModel& m);

// Q x d bank of projected subspace vectors, row j = W_j l + b_j.
// A zero-norm row is an error naming the class and head.
Mat project_subspaces(const ClassParams& p, const char* cls_name);

// Fused global prompt gbar = fuse.W [g; l] + fuse.b (not normalized).
Vec fuse_global(const ClassParams& p);

// ||Gram(rows normalized) - I||_F^2 summed over both banks.
double orthogonality_penalty(const Mat& o_n, const Mat& o_a);

// Visit every parameter tensor in a fixed order (normal then anomalous;
// l, g, head weights/offsets, fusion weight/offset). The same order is used
// for checkpoints, Adam, and finite differences.
template <class ModelT, class F>
void visit_params(ModelT& m, F&& f) {
  for (auto& c : m.cls) {
    f(c.l);
    f(c.g);
    for (auto& h : c.head) {
      f(h.W);
      f(h.b);
    }
    f(c.fuse.W);
    f(c.fuse.b);
  }
}

// Flat mutable views over every scalar parameter, in visit_params order.
template <class ModelT>
std::vector<Eigen::Map<Vec>> param_views(ModelT& m) {
  std::vector<Eigen::Map<Vec>> out;
  visit_params(m, [&](auto& t) { out.emplace_back(t.data(), t.size()); });
  return out;
}

template <class ModelT>
int param_count(const ModelT& m) {
  int n = 0;
  visit_params(const_cast<ModelT&>(m), [&](auto& t) { n += static_cast<int>(t.size()); });
  return n;
}

}  // namespace tokenclip
