#include "doctest.h"
#include "tokenclip/alignment.hpp"
#include "tokenclip/rng.hpp"

#include <cmath>

using namespace tokenclip;

TEST_CASE("top-k sparsification: worked 1x4 row") {
  Mat plan(1, 4);
  plan << 0.5, 0.3, 0.15, 0.05;  // already sums to 1, so normalization is a no-op
  AssignmentMatrix a = sparsify_topk(plan, 2, 0.1);
  CHECK(a.a(0, 0) == doctest::Approx(0.625).epsilon(1e-12));
  CHECK(a.a(0, 1) == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(a.a(0, 2) == 0.0);
  CHECK(a.a(0, 3) == 0.0);
  CHECK(a.k == 2);
  CHECK(a.epsilon == 0.1);
}

TEST_CASE("top-k sparsification: row normalization happens before the filter") {
  // A raw transport row summing to 1/N: every entry is below epsilon until the
  // row is rescaled to sum 1.
  Mat plan(2, 2);
  plan << 0.3, 0.2, 0.1, 0.4;  // rows sum to 0.5
  AssignmentMatrix a = sparsify_topk(plan, 2, 0.25);
  CHECK(a.a(0, 0) == doctest::Approx(0.6));
  CHECK(a.a(0, 1) == doctest::Approx(0.4));
  CHECK(a.a(1, 0) == 0.0);  // 0.2 after rescale, filtered by epsilon 0.25
  CHECK(a.a(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("top-k sparsification: ties keep the lowest index") {
  Mat plan(1, 4);
  plan << 0.25, 0.25, 0.25, 0.25;
  AssignmentMatrix a = sparsify_topk(plan, 2, 0.01);
  CHECK(a.a(0, 0) == doctest::Approx(0.5));
  CHECK(a.a(0, 1) == doctest::Approx(0.5));
  CHECK(a.a(0, 2) == 0.0);
  CHECK(a.a(0, 3) == 0.0);
}

TEST_CASE("top-k sparsification: epsilon filter is strict and can empty a row") {
  Mat plan(1, 2);
  plan << 0.5, 0.5;
  AssignmentMatrix all_filtered = sparsify_topk(plan, 2, 0.5);  // entries == epsilon die
  CHECK(all_filtered.a.row(0).cwiseAbs().sum() == 0.0);

  Mat zero_row = Mat::Zero(1, 3);
  AssignmentMatrix z = sparsify_topk(zero_row, 2, 0.1);
  CHECK(z.a.row(0).cwiseAbs().sum() == 0.0);
}

TEST_CASE("top-k sparsification: surviving rows sum to 1") {
  Rng rng(21);
  Mat plan(8, 5);
  for (int i = 0; i < plan.size(); ++i) plan.data()[i] = rng.uniform();
  for (int k : {1, 2, 5}) {
    AssignmentMatrix a = sparsify_topk(plan, k, 0.05);
    for (int i = 0; i < a.n(); ++i) {
      double s = a.a.row(i).sum();
      int nnz = (a.a.row(i).array() > 0).count();
      CHECK(nnz <= k);
      if (nnz > 0) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("top-k sparsification rejects bad arguments") {
  Mat plan = Mat::Constant(1, 2, 0.5);
  CHECK_THROWS_AS(sparsify_topk(plan, 0, 0.1), std::runtime_error);
  CHECK_THROWS_AS(sparsify_topk(plan, 1, -0.1), std::runtime_error);
  CHECK_THROWS_AS(sparsify_topk(plan, 1, 1.0), std::runtime_error);
}

TEST_CASE("argmax assignment is one-hot with ties toward the lowest index") {
  Mat sim(3, 3);
  sim << 0.1, 0.9, 0.2,
         0.7, 0.7, 0.1,
         -0.5, -0.2, -0.1;
  AssignmentMatrix a = van_assignment(sim);
  CHECK(a.k == 1);
  CHECK(a.a(0, 1) == 1.0);
  CHECK(a.a(1, 0) == 1.0);  // tie between columns 0 and 1
  CHECK(a.a(2, 2) == 1.0);
  for (int i = 0; i < 3; ++i) CHECK(a.a.row(i).sum() == doctest::Approx(1.0));
}

TEST_CASE("dynamic logits are assignment-weighted similarities") {
  Mat an(2, 2), aa(2, 2), sn(2, 2), sa(2, 2);
  an << 1.0, 0.0, 0.5, 0.5;
  aa << 0.0, 1.0, 0.0, 0.0;  // second row empty: logit must be 0
  sn << 0.8, -0.3, 0.2, 0.6;
  sa << 0.1, 0.9, -0.4, 0.5;
  AssignmentMatrix man{an, 2, 0.0}, maa{aa, 2, 0.0};
  auto [zn, za] = dynamic_logits(man, maa, sn, sa);
  CHECK(zn(0) == doctest::Approx(0.8));
  CHECK(zn(1) == doctest::Approx(0.5 * 0.2 + 0.5 * 0.6));
  CHECK(za(0) == doctest::Approx(0.9));
  CHECK(za(1) == 0.0);
}

TEST_CASE("score map softmax: symmetric logits give 0.5, layout is row-major") {
  Vec zn(4), za(4);
  zn << 0.3, 0.0, 1.0, -2.0;
  za << 0.3, 0.07, 1.0, -2.0;
  auto [sn, sa] = score_map_from_logits(zn, za, 0.07, 2, 2);
  CHECK(sn.res == Res::Patch);
  CHECK(sa.v(0, 0) == doctest::Approx(0.5));
  // (z_a - z_n)/tau = 1 at token 1, which lives at row 0, col 1.
  CHECK(sa.v(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(sn.v(0, 1) + sa.v(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sa.v(1, 0) == doctest::Approx(0.5));
  CHECK(sa.v(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("score map softmax survives extreme logit gaps") {
  Vec zn(1), za(1);
  zn << -500.0;
  za << 500.0;
  auto [sn, sa] = score_map_from_logits(zn, za, 0.07, 1, 1);
  CHECK(sa.v(0, 0) == doctest::Approx(1.0));
  CHECK(std::isfinite(sn.v(0, 0)));
  CHECK(sn.v(0, 0) >= 0.0);
}

TEST_CASE("static score map prefers the closer class embedding") {
  TokenGrid g;
  g.h = 1;
  g.w = 2;
  g.tokens.resize(2, 3);
  g.tokens << 1, 0, 0, 0, 1, 0;
  g.global_embedding = Vec::Ones(3);
  Vec ln(3), la(3);
  ln << 1, 0, 0;
  la << 0, 1, 0;
  auto [sn, sa] = base_score_map(g, ln, la, 0.07);
  CHECK(sn.v(0, 0) > 0.99);  // token 0 is exactly the normal embedding
  CHECK(sa.v(0, 1) > 0.99);
  CHECK(sn.v(0, 0) + sa.v(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("pixel fusion is the elementwise mean and demands matching shape") {
  AnomalyMap a{Arr::Constant(2, 2, 0.2), Res::Patch};
  AnomalyMap b{Arr::Constant(2, 2, 0.6), Res::Patch};
  AnomalyMap f = fuse_pixel_scores(a, b);
  CHECK(f.v(0, 0) == doctest::Approx(0.4));
  AnomalyMap wrong{Arr::Constant(2, 3, 0.6), Res::Patch};
  CHECK_THROWS_AS(fuse_pixel_scores(a, wrong), std::runtime_error);
  AnomalyMap wrong_res{Arr::Constant(2, 2, 0.6), Res::Pixel};
  CHECK_THROWS_AS(fuse_pixel_scores(a, wrong_res), std::runtime_error);
}

TEST_CASE("image score formulas") {
  AnomalyMap m{Arr::Constant(2, 2, 0.0), Res::Patch};
  m.v(1, 1) = 1.0;
  CHECK(image_score(1.0, m, ImageScoreFormula::Damped) == doctest::Approx(0.75));
  m.v(1, 1) = 0.8;
  CHECK(image_score(0.1, m, ImageScoreFormula::Balanced) == doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("usage histogram: support, argmax votes, entropy") {
  AssignmentMatrix a;
  a.k = 2;
  a.a.resize(4, 3);
  a.a << 0.7, 0.3, 0.0,
         0.0, 1.0, 0.0,
         0.6, 0.0, 0.4,
         0.0, 0.0, 0.0;  // empty row is excluded from the counts
  UsageHistogram h = subspace_usage_histogram(a);
  CHECK(h.rows_counted == 3);
  // Support frequency is over all rows; the empty row just never votes.
  CHECK(h.support_freq(0) == doctest::Approx(2.0 / 4.0));
  CHECK(h.support_freq(1) == doctest::Approx(2.0 / 4.0));
  CHECK(h.support_freq(2) == doctest::Approx(1.0 / 4.0));
  CHECK(h.argmax_freq(0) == doctest::Approx(2.0 / 3.0));
  CHECK(h.argmax_freq(1) == doctest::Approx(1.0 / 3.0));
  CHECK(h.argmax_freq(2) == 0.0);
  double p0 = 2.0 / 3.0, p1 = 1.0 / 3.0;
  double want = -(p0 * std::log(p0) + p1 * std::log(p1)) / std::log(3.0);
  CHECK(h.normalized_entropy == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("usage histogram: one-hot concentration has entropy 0, uniform has 1") {
  AssignmentMatrix onehot;
  onehot.k = 1;
  onehot.a = Mat::Zero(5, 4);
  for (int i = 0; i < 5; ++i) onehot.a(i, 2) = 1.0;
  CHECK(subspace_usage_histogram(onehot).normalized_entropy == doctest::Approx(0.0));

  AssignmentMatrix spread;
  spread.k = 1;
  spread.a = Mat::Zero(4, 4);
  for (int i = 0; i < 4; ++i) spread.a(i, i) = 1.0;
  CHECK(subspace_usage_histogram(spread).normalized_entropy == doctest::Approx(1.0));
}

TEST_CASE("usage histogram pools a batch of assignments") {
  AssignmentMatrix a, b;
  a.k = b.k = 1;
  a.a = Mat::Zero(2, 2);
  a.a(0, 0) = a.a(1, 0) = 1.0;
  b.a = Mat::Zero(2, 2);
  b.a(0, 1) = b.a(1, 1) = 1.0;
  UsageHistogram h = subspace_usage_histogram({&a, &b});
  CHECK(h.rows_counted == 4);
  CHECK(h.argmax_freq(0) == doctest::Approx(0.5));
  CHECK(h.normalized_entropy == doctest::Approx(1.0));
}
