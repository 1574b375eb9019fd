#include "doctest.h"
#include "tokenclip/semantics.hpp"

#include <cmath>

using namespace tokenclip;

TEST_CASE("init_model shapes and normalization") {
  SubspaceModel m = init_model(8, 3, 42);
  CHECK(m.d == 8);
  CHECK(m.q == 3);
  for (const auto& c : m.cls) {
    CHECK(c.l.size() == 8);
    CHECK(c.g.size() == 8);
    CHECK(c.l.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.g.norm() == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(c.head.size() == 3);
    for (const auto& h : c.head) {
      CHECK(h.W.rows() == 8);
      CHECK(h.W.cols() == 8);
      CHECK(h.b.size() == 8);
      CHECK(h.b.cwiseAbs().maxCoeff() == 0.0);
      CHECK((h.W - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() < 0.6);  // identity + small noise
    }
    CHECK(c.fuse.W.rows() == 8);
    CHECK(c.fuse.W.cols() == 16);
    CHECK(c.fuse.b.size() == 8);
  }
}

TEST_CASE("init_model is deterministic in the seed and the classes differ") {
  SubspaceModel a = init_model(6, 2, 7), b = init_model(6, 2, 7), c = init_model(6, 2, 8);
  CHECK((a.normal().l - b.normal().l).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.anomalous().head[1].W - b.anomalous().head[1].W).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.normal().l - c.normal().l).cwiseAbs().maxCoeff() > 0.0);
  CHECK((a.normal().l - a.anomalous().l).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("noise-free fusion selects the global embedding exactly") {
  SubspaceModel m = init_model(5, 2, 3, 0.0);
  Vec gbar = fuse_global(m.normal());
  CHECK((gbar - m.normal().g).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  // Noise-free heads are the identity, so every projected row equals l.
  Mat o = project_subspaces(m.normal(), "normal");
  for (int j = 0; j < 2; ++j) CHECK((o.row(j).transpose() - m.normal().l).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("project_subspaces applies each head and flags zero-norm rows") {
  ClassParams p;
  p.l = Vec::Zero(2);
  p.l << 1, 2;
  p.g = Vec::Ones(2);
  p.head.resize(2);
  p.head[0].W = Mat::Identity(2, 2) * 2.0;
  p.head[0].b = Vec::Zero(2);
  p.head[1].W = Mat::Zero(2, 2);
  p.head[1].b = Vec::Zero(2);
  p.head[1].b << 0, 3;
  p.fuse.W = Mat::Zero(2, 4);
  p.fuse.b = Vec::Zero(2);
  Mat o = project_subspaces(p, "normal");
  CHECK(o(0, 0) == doctest::Approx(2.0));
  CHECK(o(0, 1) == doctest::Approx(4.0));
  CHECK(o(1, 0) == 0.0);
  CHECK(o(1, 1) == doctest::Approx(3.0));

  p.head[1].b.setZero();  // row 1 becomes all-zero
  CHECK_THROWS_WITH_AS(project_subspaces(p, "anomalous"),
                       doctest::Contains("anomalous"), std::runtime_error);
}

TEST_CASE("orthogonality penalty: worked values") {
  // Orthogonal rows (after normalization) give zero.
  Mat good(2, 3);
  good << 2, 0, 0, 0, 5, 0;
  CHECK(orthogonality_penalty(good, good) == doctest::Approx(0.0).epsilon(1e-12));

  // Two identical rows: normalized Gram = all-ones, ||G - I||_F^2 = 2 per bank.
  Mat same(2, 3);
  same << 1, 1, 0, 2, 2, 0;
  CHECK(orthogonality_penalty(same, good) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(orthogonality_penalty(same, same) == doctest::Approx(4.0).epsilon(1e-12));

  // 45-degree pair: off-diagonals are cos(45deg), penalty 2 * 1/2 = 1.
  Mat tilted(2, 2);
  tilted << 1, 0, 1, 1;
  CHECK(orthogonality_penalty(tilted, Mat::Identity(2, 2)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parameter traversal order is stable and covers every scalar") {
  SubspaceModel m = init_model(4, 2, 1);
  // Per class: l(4) + g(4) + 2*(W 16 + b 4) + fuse W 32 + fuse b 4 = 84.
  CHECK(param_count(m) == 168);
  auto views = param_views(m);
  CHECK(views.size() == 2 * (2 + 2 * 2 + 2));
  CHECK(views[0].size() == 4);    // normal l
  CHECK(views[1].size() == 4);    // normal g
  CHECK(views[2].size() == 16);   // head 0 W
  CHECK(views[3].size() == 4);    // head 0 b
  CHECK(views[6].size() == 32);   // fuse W
  CHECK(views[7].size() == 4);    // fuse b

  // Writing through a view mutates the model tensor it maps.
  views[0](2) = 99.0;
  CHECK(m.normal().l(2) == 99.0);
}

TEST_CASE("zeros_like mirrors the shapes with zero values") {
  SubspaceModel m = init_model(3, 2, 5);
  SubspaceModel z = zeros_like(m);
  CHECK(z.d == 3);
  CHECK(z.q == 2);
  CHECK(param_count(z) == param_count(m));
  double total = 0;
  visit_params(z, [&](auto& t) { total += t.cwiseAbs().sum(); });
  CHECK(total == 0.0);
}
