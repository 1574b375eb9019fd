#include "doctest.h"
#include "tokenclip/losses.hpp"
#include "tokenclip/rng.hpp"

#include <cmath>

using namespace tokenclip;

TEST_CASE("softmax pair: symmetry, temperature, overflow safety") {
  auto [p0, p1] = softmax_pair(0.4, 0.4, 0.07);
  CHECK(p0 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p0 + p1 == doctest::Approx(1.0).epsilon(1e-15));

  auto [q0, q1] = softmax_pair(0.0, 0.07, 0.07);  // gap of exactly one temperature unit
  CHECK(q1 == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));

  auto [r0, r1] = softmax_pair(-900.0, 900.0, 1.0);
  CHECK(std::isfinite(r0));
  CHECK(r1 == doctest::Approx(1.0));
}

TEST_CASE("bilinear upsample: identity, corners, constants") {
  Arr src(2, 2);
  src << 1, 2, 3, 4;
  Arr same = bilinear_upsample(src, 2, 2);
  CHECK((same - src).abs().maxCoeff() == 0.0);

  Arr up = bilinear_upsample(src, 3, 3);
  CHECK(up(0, 0) == 1.0);  // corners are exact
  CHECK(up(0, 2) == 2.0);
  CHECK(up(2, 0) == 3.0);
  CHECK(up(2, 2) == 4.0);
  CHECK(up(0, 1) == doctest::Approx(1.5));
  CHECK(up(1, 1) == doctest::Approx(2.5));

  Arr flat = bilinear_upsample(Arr::Constant(3, 3, 0.7), 9, 11);
  CHECK((flat - 0.7).abs().maxCoeff() < 1e-15);
}

TEST_CASE("bilinear upsample: 2x2 -> 2x3 inserts the column midpoint") {
  Arr src(2, 2);
  src << 0, 1, 2, 3;
  Arr up = bilinear_upsample(src, 2, 3);
  CHECK(up(0, 1) == doctest::Approx(0.5));
  CHECK(up(1, 1) == doctest::Approx(2.5));
}

TEST_CASE("bilinear upsample: single row or column broadcasts") {
  Arr row(1, 2);
  row << 2, 6;
  Arr up = bilinear_upsample(row, 3, 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(up(i, 0) == doctest::Approx(2.0));
    CHECK(up(i, 1) == doctest::Approx(4.0));
    CHECK(up(i, 2) == doctest::Approx(6.0));
  }
  CHECK_THROWS_AS(bilinear_upsample(up, 2, 3), std::runtime_error);  // shrinking is not supported
}

TEST_CASE("upsample adjoint satisfies the inner-product pairing") {
  Rng rng(13);
  for (auto [sh, sw, th, tw] : {std::array<int, 4>{2, 2, 5, 7}, {3, 4, 3, 4}, {1, 3, 4, 9}}) {
    Arr x(sh, sw), y(th, tw);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    for (int i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
    double lhs = (bilinear_upsample(x, th, tw) * y).sum();
    double rhs = (x * bilinear_upsample_adjoint(y, sh, sw)).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("focal loss: worked values and the gamma=0 cross-entropy limit") {
  Arr sn = Arr::Constant(1, 1, 0.5), sa = Arr::Constant(1, 1, 0.5);
  Arr mask = Arr::Zero(1, 1);
  // p_t = 0.5: -(1-0.5)^2 log 0.5 = 0.25 log 2.
  CHECK(focal_loss(sn, sa, mask, 2.0) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(focal_loss(sn, sa, mask, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Mask selects which map supplies p_t.
  Arr sn2(1, 2), sa2(1, 2), mask2(1, 2);
  sn2 << 0.9, 0.2;
  sa2 << 0.1, 0.8;
  mask2 << 0, 1;
  double want = 0.5 * (-(std::pow(0.1, 2.0)) * std::log(0.9) - std::pow(0.2, 2.0) * std::log(0.8));
  CHECK(focal_loss(sn2, sa2, mask2, 2.0) == doctest::Approx(want).epsilon(1e-12));

  // Perfect confidence is finite thanks to the clamp.
  Arr zero = Arr::Zero(1, 1), one = Arr::Ones(1, 1);
  CHECK(std::isfinite(focal_loss(zero, one, Arr::Ones(1, 1), 2.0)));
  CHECK(focal_loss(one, zero, Arr::Zero(1, 1), 2.0) == doctest::Approx(0.0));
}

TEST_CASE("dice loss: worked values") {
  Arr s = Arr::Ones(2, 2), t = Arr::Ones(2, 2);
  CHECK(dice_loss(s, t, 1.0) == doctest::Approx(0.0).epsilon(1e-12));  // (8+1)/(8+1)

  Arr miss = Arr::Zero(2, 2);
  CHECK(dice_loss(miss, t, 1.0) == doctest::Approx(1.0 - 1.0 / 5.0).epsilon(1e-12));

  Arr half(1, 2);
  half << 1, 0;
  Arr tgt(1, 2);
  tgt << 0, 1;
  CHECK(dice_loss(half, tgt, 1.0) == doctest::Approx(1.0 - 1.0 / 3.0).epsilon(1e-12));

  // Both empty: smoothing makes the loss exactly zero rather than 0/0.
  CHECK(dice_loss(Arr::Zero(1, 3), Arr::Zero(1, 3), 1.0) == doctest::Approx(0.0));
}

TEST_CASE("base local loss composes focal and the two dice terms after upsampling") {
  Arr sn = Arr::Constant(2, 2, 0.5), sa = Arr::Constant(2, 2, 0.5);
  Arr mask = Arr::Zero(4, 4);
  double got = base_local_loss(sn, sa, mask, 2.0, 1.0);
  double focal = 0.25 * std::log(2.0);
  double dice_a = dice_loss(Arr::Constant(4, 4, 0.5), mask, 1.0);
  double dice_n = dice_loss(Arr::Constant(4, 4, 0.5), Arr::Ones(4, 4), 1.0);
  CHECK(got == doctest::Approx(focal + dice_a + dice_n).epsilon(1e-12));
}

TEST_CASE("hinge loss: corrected form pushes anomaly score down on normal pixels") {
  Arr sn(1, 2), sa(1, 2), mask(1, 2);
  sn << 0.3, 0.2;
  sa << 0.7, 0.3;
  mask << 0, 1;
  // Normal pixel: max(0.7 - 0.5, 0) = 0.2. Anomalous: max(0.5 - 0.3, 0) = 0.2.
  CHECK(hinge_loss(sn, sa, mask, 0.5, 0.5, false) == doctest::Approx(0.4).epsilon(1e-12));
  // Literal form reads S_n on normal pixels instead: max(0.3 - 0.5, 0) = 0.
  CHECK(hinge_loss(sn, sa, mask, 0.5, 0.5, true) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("hinge loss: one-sided masks contribute a single mean") {
  Arr sn = Arr::Constant(1, 2, 0.1);
  Arr sa(1, 2);
  sa << 0.9, 0.6;
  CHECK(hinge_loss(sn, sa, Arr::Zero(1, 2), 0.5, 0.5, false) ==
        doctest::Approx(0.5 * (0.4 + 0.1)).epsilon(1e-12));
  CHECK(hinge_loss(sn, sa, Arr::Ones(1, 2), 0.5, 0.5, false) == doctest::Approx(0.0));
}

TEST_CASE("global loss is the two-class cross entropy over prompt cosines") {
  Vec gn(2), ga(2), f(2);
  gn << 1, 0;
  ga << 0, 1;
  f << 1, 0;  // cos are (1, 0)
  auto [p_n, p_a] = softmax_pair(1.0, 0.0, 0.07);
  CHECK(global_loss(gn, ga, f, 0, 0.07) == doctest::Approx(-std::log(p_n)).epsilon(1e-12));
  CHECK(global_loss(gn, ga, f, 1, 0.07) == doctest::Approx(-std::log(p_a)).epsilon(1e-12));
  // Equal similarity: log 2 regardless of label.
  Vec mid(2);
  mid << 1, 1;
  CHECK(global_loss(gn, ga, mid, 0, 0.07) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("total loss is the weighted sum with unit parts -> 108") {
  LossBreakdown b = total_loss(1.0, 1.0, 1.0, 1.0, 1.0, 5.0, 100.0);
  CHECK(b.total == doctest::Approx(108.0));
  CHECK(b.global == 1.0);
  CHECK(b.hinge == 1.0);
  CHECK(b.reg == 1.0);
}

TEST_CASE("train config validation") {
  TrainConfig ok;
  ok.validate();
  TrainConfig bad = ok;
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
  bad = ok;
  bad.epsilon = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
  bad = ok;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
  bad = ok;
  bad.k = 5;  // k may not exceed q
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
  bad = ok;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
}
