#include "tokenclip/gradients.hpp"

#include <cmath>
#include <cstring>

namespace tokenclip {

TermSelect TermSelect::only(const char* name) {
  TermSelect s{false, false, false, false, false};
  std::string n = name;
  if (n == "base")
    s.base = true;
  else if (n == "da")
    s.da = true;
  else if (n == "global")
    s.global = true;
  else if (n == "hinge")
    s.hinge = true;
  else if (n == "reg")
    s.reg = true;
  else if (n == "total")
    s = TermSelect{};
  else
    fail("unknown loss term: " + n);
  return s;
}

namespace {

struct Ctx {
  int n = 0, d = 0, q = 0, h = 0, w = 0, mh = 0, mw = 0;
  Mat tok_unit;
  Vec tok_norm;
  Vec f, f_unit;
  double f_norm = 0;
  Vec l_unit[2];
  double l_norm[2] = {0, 0};
  Mat o[2], o_unit[2];
  Vec o_norm[2];
  Vec gbar[2], gbar_unit[2];
  double gbar_norm[2] = {0, 0};
  double cosg[2] = {0, 0}, pg[2] = {0, 0};
  Vec zb[2];
  Arr sb[2], ub[2];
  Mat sim[2];
  AssignmentMatrix am[2];
  Vec zd[2];
  Arr sd[2], ud[2];
  bool need_base = false, need_dyn = false, need_global = false, need_reg = false;
  LossBreakdown losses;
};

Arr softmax_maps(const Vec& z0, const Vec& z1, double tau, int h, int w, Arr& s0) {
  Arr s1(h, w);
  s0.resize(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      auto [p0, p1] = softmax_pair(z0(r * static_cast<long>(w) + c), z1(r * static_cast<long>(w) + c), tau);
      s0(r, c) = p0;
      s1(r, c) = p1;
    }
  return s1;
}

Ctx run_forward(const SubspaceModel& model, const LabeledSample& s, const TrainConfig& cfg,
                const TermSelect& sel, const AssignmentMatrix* fix_n,
                const AssignmentMatrix* fix_a) {
  cfg.validate();
  s.validate();
  require(model.d == s.grid.dim(), "forward: model/token dimension mismatch");
  require(model.q == cfg.q, "forward: model/config subspace count mismatch");

  Ctx cx;
  cx.n = s.grid.n();
  cx.d = model.d;
  cx.q = model.q;
  cx.h = s.grid.h;
  cx.w = s.grid.w;
  cx.mh = static_cast<int>(s.mask.rows());
  cx.mw = static_cast<int>(s.mask.cols());
  cx.need_base = sel.base;
  cx.need_dyn = cfg.enable_da && (sel.da || sel.hinge);
  cx.need_global = sel.global;
  cx.need_reg = sel.reg;
  const bool need_o = cx.need_dyn || cx.need_reg;

  if (cx.need_base || cx.need_dyn) {
    cx.tok_norm = s.grid.tokens.rowwise().norm();
    for (int i = 0; i < cx.n; ++i)
      require(cx.tok_norm(i) > 0.0, "token row " + std::to_string(i) + " has zero norm");
    cx.tok_unit = cx.tok_norm.cwiseInverse().asDiagonal() * s.grid.tokens;
  }
  if (cx.need_global) {
    cx.f = s.grid.pooled();
    cx.f_norm = cx.f.norm();
    require(cx.f_norm > 0.0, "global loss: zero-norm image embedding");
    cx.f_unit = cx.f / cx.f_norm;
  }

  const AssignmentMatrix* fixed[2] = {fix_n, fix_a};
  for (int c = 0; c < 2; ++c) {
    const ClassParams& p = model.cls[c];
    const char* cls_name = c == 0 ? "normal" : "anomalous";
    if (cx.need_base) {
      cx.l_norm[c] = p.l.norm();
      require(cx.l_norm[c] > 0.0,
              std::string("base score map: zero-norm ") + cls_name + " embedding");
      cx.l_unit[c] = p.l / cx.l_norm[c];
      cx.zb[c] = cx.tok_unit * cx.l_unit[c];
    }
    if (need_o) {
      cx.o[c] = project_subspaces(p, cls_name);
      cx.o_norm[c] = cx.o[c].rowwise().norm();
      cx.o_unit[c] = cx.o_norm[c].cwiseInverse().asDiagonal() * cx.o[c];
    }
    if (cx.need_global) {
      cx.gbar[c] = fuse_global(p);
      cx.gbar_norm[c] = cx.gbar[c].norm();
      require(cx.gbar_norm[c] > 0.0,
              std::string("global loss: zero-norm ") + cls_name + " prompt");
      cx.gbar_unit[c] = cx.gbar[c] / cx.gbar_norm[c];
      cx.cosg[c] = cx.gbar[c].dot(cx.f) / (cx.gbar_norm[c] * cx.f_norm);
    }
    if (cx.need_dyn) {
      cx.sim[c] = cx.tok_unit * cx.o_unit[c].transpose();
      if (fixed[c]) {
        require(fixed[c]->a.rows() == cx.n && fixed[c]->a.cols() == cx.q,
                "forward: fixed assignment shape mismatch");
        cx.am[c] = *fixed[c];
      } else {
        CostMatrix cost;
        cost.c = (1.0 - cx.sim[c].array()).max(0.0).min(2.0).matrix();
        SinkhornConfig scfg{cfg.lambda, cfg.sinkhorn_iters, cfg.sinkhorn_tol};
        TransportPlan plan = sinkhorn(cost, Marginals::uniform(cx.n, cx.q), scfg);
        cx.am[c] = sparsify_topk(plan, cfg.k, cfg.epsilon);
      }
      cx.zd[c] = (cx.am[c].a.array() * cx.sim[c].array()).rowwise().sum();
    }
  }

  double lb = 0, lda = 0, lg = 0, lh = 0, lrg = 0;
  if (cx.need_base) {
    cx.sb[1] = softmax_maps(cx.zb[0], cx.zb[1], cfg.tau, cx.h, cx.w, cx.sb[0]);
    for (int c = 0; c < 2; ++c) cx.ub[c] = bilinear_upsample(cx.sb[c], cx.mh, cx.mw);
    lb = focal_loss(cx.ub[0], cx.ub[1], s.mask, cfg.gamma) +
         dice_loss(cx.ub[1], s.mask, cfg.smooth) +
         dice_loss(cx.ub[0], Arr(1.0 - s.mask), cfg.smooth);
  }
  if (cx.need_dyn) {
    cx.sd[1] = softmax_maps(cx.zd[0], cx.zd[1], cfg.tau, cx.h, cx.w, cx.sd[0]);
    for (int c = 0; c < 2; ++c) cx.ud[c] = bilinear_upsample(cx.sd[c], cx.mh, cx.mw);
    if (sel.da)
      lda = focal_loss(cx.ud[0], cx.ud[1], s.mask, cfg.gamma) +
            dice_loss(cx.ud[1], s.mask, cfg.smooth) +
            dice_loss(cx.ud[0], Arr(1.0 - s.mask), cfg.smooth);
    if (sel.hinge)
      lh = hinge_loss(cx.ud[0], cx.ud[1], s.mask, cfg.delta_minus, cfg.delta_plus,
                      cfg.literal_hinge);
  }
  if (cx.need_global) {
    auto [p0, p1] = softmax_pair(cx.cosg[0], cx.cosg[1], cfg.tau);
    cx.pg[0] = p0;
    cx.pg[1] = p1;
    lg = -std::log(std::max(s.label == 1 ? p1 : p0, 1e-300));
  }
  if (cx.need_reg) lrg = orthogonality_penalty(cx.o[0], cx.o[1]);
  cx.losses = total_loss(lg, lb, lda, lh, lrg, cfg.eta, cfg.xi);
  return cx;
}

void focal_grads(const Arr& s0, const Arr& s1, const Arr& mask, double gamma, Arr& d0, Arr& d1) {
  const double n = static_cast<double>(mask.size());
  for (long i = 0; i < mask.size(); ++i) {
    bool anom = mask.data()[i] == 1.0;
    double p = anom ? s1.data()[i] : s0.data()[i];
    double dterm = 0.0;
    if (p > 1e-12) {
      double pc = p, om = 1.0 - pc;
      double t1 = (gamma > 0.0 && om > 0.0) ? gamma * std::pow(om, gamma - 1.0) * std::log(pc)
                                            : 0.0;
      double t2 = std::pow(om, gamma) / pc;
      dterm = t1 - t2;
    }
    (anom ? d1 : d0).data()[i] += dterm / n;
  }
}

void dice_grad(const Arr& s, const Arr& t, double smooth, Arr& ds) {
  double num = 2.0 * (s * t).sum() + smooth;
  double denom = s.sum() + t.sum() + smooth;
  double d2 = denom * denom;
  for (long i = 0; i < s.size(); ++i)
    ds.data()[i] += num / d2 - 2.0 * t.data()[i] / denom;
}

void hinge_grads(const Arr& u0, const Arr& u1, const Arr& mask, double dm, double dp,
                 bool literal, double weight, Arr& d0, Arr& d1) {
  long nn = 0, na = 0;
  for (long i = 0; i < mask.size(); ++i) (mask.data()[i] == 0.0 ? nn : na)++;
  for (long i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] == 0.0) {
      double v = literal ? u0.data()[i] : u1.data()[i];
      if (v - dm > 0.0) (literal ? d0 : d1).data()[i] += weight / static_cast<double>(nn);
    } else {
      if (dp - u1.data()[i] > 0.0) d1.data()[i] -= weight / static_cast<double>(na);
    }
  }
}

// dL/dz1 per token for the two-class softmax (dL/dz0 is its negative).
Vec softmax_chain(const Arr& s0, const Arr& s1, const Arr& dS0, const Arr& dS1, double tau,
                  int h, int w) {
  Vec dz1(static_cast<long>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      dz1(r * static_cast<long>(w) + c) =
          (dS1(r, c) - dS0(r, c)) * s1(r, c) * s0(r, c) / tau;
  return dz1;
}

}  // namespace

ForwardResult forward_losses(const SubspaceModel& m, const LabeledSample& s,
                             const TrainConfig& cfg, const TermSelect& sel,
                             const AssignmentMatrix* fix_n, const AssignmentMatrix* fix_a) {
  Ctx cx = run_forward(m, s, cfg, sel, fix_n, fix_a);
  return {cx.losses, cx.am[0], cx.am[1]};
}

ForwardResult backward(const SubspaceModel& m, const LabeledSample& s, const TrainConfig& cfg,
                       GradientSet& grad, const TermSelect& sel) {
  Ctx cx = run_forward(m, s, cfg, sel, nullptr, nullptr);
  grad = zeros_like(m);

  const int d = cx.d, q = cx.q;
  Vec dl[2] = {Vec::Zero(d), Vec::Zero(d)};
  Vec dg[2] = {Vec::Zero(d), Vec::Zero(d)};
  Vec dgbar[2] = {Vec::Zero(d), Vec::Zero(d)};
  Mat dO[2] = {Mat::Zero(q, d), Mat::Zero(q, d)};
  const bool need_o = cx.need_dyn || cx.need_reg;

  if (cx.need_global) {
    for (int c = 0; c < 2; ++c) {
      double dcos = (cx.pg[c] - (s.label == c ? 1.0 : 0.0)) / cfg.tau;
      dgbar[c] += dcos * (cx.f_unit - cx.cosg[c] * cx.gbar_unit[c]) / cx.gbar_norm[c];
    }
  }

  if (cx.need_base) {
    Arr dU0 = Arr::Zero(cx.mh, cx.mw), dU1 = Arr::Zero(cx.mh, cx.mw);
    focal_grads(cx.ub[0], cx.ub[1], s.mask, cfg.gamma, dU0, dU1);
    dice_grad(cx.ub[1], s.mask, cfg.smooth, dU1);
    dice_grad(cx.ub[0], Arr(1.0 - s.mask), cfg.smooth, dU0);
    Arr dS0 = bilinear_upsample_adjoint(dU0, cx.h, cx.w);
    Arr dS1 = bilinear_upsample_adjoint(dU1, cx.h, cx.w);
    Vec dz1 = softmax_chain(cx.sb[0], cx.sb[1], dS0, dS1, cfg.tau, cx.h, cx.w);
    for (int c = 0; c < 2; ++c) {
      Vec dzc = c == 1 ? dz1 : Vec(-dz1);
      dl[c] += (cx.tok_unit.transpose() * dzc - dzc.dot(cx.zb[c]) * cx.l_unit[c]) /
               cx.l_norm[c];
    }
  }

  if (cx.need_dyn) {
    Arr dU0 = Arr::Zero(cx.mh, cx.mw), dU1 = Arr::Zero(cx.mh, cx.mw);
    if (sel.da) {
      focal_grads(cx.ud[0], cx.ud[1], s.mask, cfg.gamma, dU0, dU1);
      dice_grad(cx.ud[1], s.mask, cfg.smooth, dU1);
      dice_grad(cx.ud[0], Arr(1.0 - s.mask), cfg.smooth, dU0);
    }
    if (sel.hinge)
      hinge_grads(cx.ud[0], cx.ud[1], s.mask, cfg.delta_minus, cfg.delta_plus,
                  cfg.literal_hinge, cfg.eta, dU0, dU1);
    Arr dS0 = bilinear_upsample_adjoint(dU0, cx.h, cx.w);
    Arr dS1 = bilinear_upsample_adjoint(dU1, cx.h, cx.w);
    Vec dz1 = softmax_chain(cx.sd[0], cx.sd[1], dS0, dS1, cfg.tau, cx.h, cx.w);
    for (int c = 0; c < 2; ++c) {
      Vec dzc = c == 1 ? dz1 : Vec(-dz1);
      Mat dsim = dzc.asDiagonal() * cx.am[c].a;           // assignment is a constant
      Mat t1 = cx.tok_unit.transpose() * dsim;            // d x Q
      Vec t2 = (dsim.array() * cx.sim[c].array()).colwise().sum().matrix().transpose();
      for (int j = 0; j < q; ++j)
        dO[c].row(j) +=
            (t1.col(j).transpose() - t2(j) * cx.o_unit[c].row(j)) / cx.o_norm[c](j);
    }
  }

  if (cx.need_reg) {
    for (int c = 0; c < 2; ++c) {
      Mat gram = cx.o_unit[c] * cx.o_unit[c].transpose();
      Mat dOu = 4.0 * cfg.xi * (gram - Mat::Identity(q, q)) * cx.o_unit[c];
      for (int j = 0; j < q; ++j) {
        double along = dOu.row(j).dot(cx.o_unit[c].row(j));
        dO[c].row(j) += (dOu.row(j) - along * cx.o_unit[c].row(j)) / cx.o_norm[c](j);
      }
    }
  }

  for (int c = 0; c < 2; ++c) {
    if (need_o) {
      for (int j = 0; j < q; ++j) {
        Vec doj = dO[c].row(j).transpose();
        grad.cls[c].head[j].W += doj * m.cls[c].l.transpose();
        grad.cls[c].head[j].b += doj;
        dl[c] += m.cls[c].head[j].W.transpose() * doj;
      }
    }
    if (cx.need_global) {
      Vec x(2 * d);
      x.head(d) = m.cls[c].g;
      x.tail(d) = m.cls[c].l;
      grad.cls[c].fuse.W += dgbar[c] * x.transpose();
      grad.cls[c].fuse.b += dgbar[c];
      dg[c] += m.cls[c].fuse.W.leftCols(d).transpose() * dgbar[c];
      dl[c] += m.cls[c].fuse.W.rightCols(d).transpose() * dgbar[c];
    }
    grad.cls[c].l = dl[c];
    grad.cls[c].g = dg[c];
  }
  return {cx.losses, cx.am[0], cx.am[1]};
}

double finite_diff_check(const SubspaceModel& m, const LabeledSample& s, const TrainConfig& cfg,
                         const TermSelect& sel, double step) {
  require(step > 0.0, "finite_diff_check: step must be positive");
  GradientSet grad;
  ForwardResult at_base = backward(m, s, cfg, grad, sel);

  const bool dyn = cfg.enable_da && (sel.da || sel.hinge);
  AssignmentMatrix an = at_base.a_n, aa = at_base.a_a;
  const AssignmentMatrix* fn = dyn ? &an : nullptr;
  const AssignmentMatrix* fa = dyn ? &aa : nullptr;

  SubspaceModel work = m;
  auto pv = param_views(work);
  auto gv = param_views(grad);
  double worst = 0.0;
  for (size_t b = 0; b < pv.size(); ++b) {
    for (long i = 0; i < pv[b].size(); ++i) {
      double orig = pv[b](i);
      pv[b](i) = orig + step;
      double lp = forward_losses(work, s, cfg, sel, fn, fa).losses.total;
      pv[b](i) = orig - step;
      double lm = forward_losses(work, s, cfg, sel, fn, fa).losses.total;
      pv[b](i) = orig;
      double num = (lp - lm) / (2.0 * step);
      double rel = std::abs(gv[b](i) - num) / std::max(std::abs(num), 1e-8);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace tokenclip
