#include "tokenclip/semantics.hpp"

#include "tokenclip/rng.hpp"

#include <cmath>

namespace tokenclip {

SubspaceModel init_model(int d, int q, uint64_t seed, double noise) {
  require(d >= 1, "init_model: d must be positive");
  require(q >= 1, "init_model: q must be positive");
  require(noise >= 0.0, "init_model: noise scale must be nonnegative");

  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto unit_gaussian = [&]() {
    Vec x(d);
    for (int i = 0; i < d; ++i) x(i) = scale * rng.normal();
    double n = x.norm();
    require(n > 0.0, "init_model: degenerate embedding draw");
    return Vec(x / n);
  };

  SubspaceModel m;
  m.d = d;
  m.q = q;
  for (auto& c : m.cls) {
    c.l = unit_gaussian();
    c.g = unit_gaussian();
    c.head.resize(q);
    for (auto& hd : c.head) {
      hd.W = Mat::Identity(d, d);
      for (int r = 0; r < d; ++r)
        for (int cc = 0; cc < d; ++cc) hd.W(r, cc) += noise * rng.normal();
      hd.b = Vec::Zero(d);
    }
    c.fuse.W = Mat::Zero(d, 2 * d);
    c.fuse.W.leftCols(d) = Mat::Identity(d, d);  // initially selects g from [g; l]
    for (int r = 0; r < d; ++r)
      for (int cc = 0; cc < 2 * d; ++cc) c.fuse.W(r, cc) += noise * rng.normal();
    c.fuse.b = Vec::Zero(d);
  }
  return m;
}

SubspaceModel zeros_like(const SubspaceModel& m) {
  SubspaceModel z;
  z.d = m.d;
  z.q = m.q;
  for (int c = 0; c < 2; ++c) {
    const auto& src = m.cls[c];
    auto& dst = z.cls[c];
    dst.l = Vec::Zero(src.l.size());
    dst.g = Vec::Zero(src.g.size());
    dst.head.resize(src.head.size());
    for (size_t j = 0; j < src.head.size(); ++j) {
      dst.head[j].W = Mat::Zero(src.head[j].W.rows(), src.head[j].W.cols());
      dst.head[j].b = Vec::Zero(src.head[j].b.size());
    }
    dst.fuse.W = Mat::Zero(src.fuse.W.rows(), src.fuse.W.cols());
    dst.fuse.b = Vec::Zero(src.fuse.b.size());
  }
  return z;
}

Mat project_subspaces(const ClassParams& p, const char* cls_name) {
  const int q = static_cast<int>(p.head.size());
  require(q >= 1, "project_subspaces: no heads");
  const int d = static_cast<int>(p.l.size());
  Mat o(q, d);
  for (int j = 0; j < q; ++j) {
    require(p.head[j].W.rows() == d && p.head[j].W.cols() == d && p.head[j].b.size() == d,
            "project_subspaces: head shape mismatch");
    o.row(j) = (p.head[j].W * p.l + p.head[j].b).transpose();
    require(o.row(j).norm() > 0.0, std::string("subspace projection for class ") + cls_name +
                                       ", head " + std::to_string(j) + " has zero norm");
  }
  return o;
}

Vec fuse_global(const ClassParams& p) {
  const int d = static_cast<int>(p.g.size());
  require(p.fuse.W.rows() == d && p.fuse.W.cols() == 2 * d && p.fuse.b.size() == d,
          "fuse_global: fusion shape mismatch");
  Vec x(2 * d);
  x.head(d) = p.g;
  x.tail(d) = p.l;
  return p.fuse.W * x + p.fuse.b;
}

namespace {

double bank_penalty(const Mat& o) {
  const int q = static_cast<int>(o.rows());
  Mat u(q, o.cols());
  for (int j = 0; j < q; ++j) {
    double n = o.row(j).norm();
    require(n > 0.0, "orthogonality penalty: zero-norm subspace row " + std::to_string(j));
    u.row(j) = o.row(j) / n;
  }
  Mat gram = u * u.transpose();
  return (gram - Mat::Identity(q, q)).squaredNorm();
}

}  // namespace

double orthogonality_penalty(const Mat& o_n, const Mat& o_a) {
  require(o_n.rows() == o_a.rows() && o_n.cols() == o_a.cols(),
          "orthogonality penalty: bank shape mismatch");
  return bank_penalty(o_n) + bank_penalty(o_a);
}

}  // namespace tokenclip
