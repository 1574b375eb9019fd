#include "tokenclip/losses.hpp"

#include <cmath>

namespace tokenclip {

void TrainConfig::validate() const {
  require(q >= 1, "config: q must be at least 1");
  require(k >= 1, "config: k must be at least 1");
  require(k <= q, "config: k cannot exceed q");
  require(epsilon >= 0.0 && epsilon < 1.0, "config: epsilon must be in [0, 1)");
  require(lambda > 0.0, "config: lambda must be positive");
  require(sinkhorn_iters >= 1, "config: sinkhorn_iters must be at least 1");
  require(sinkhorn_tol >= 0.0, "config: sinkhorn_tol must be nonnegative");
  require(tau > 0.0, "config: tau must be positive");
  require(gamma >= 0.0, "config: gamma must be nonnegative");
  require(smooth >= 0.0, "config: smooth must be nonnegative");
  require(delta_minus >= 0.0 && delta_minus <= 1.0, "config: delta_minus must be in [0, 1]");
  require(delta_plus >= 0.0 && delta_plus <= 1.0, "config: delta_plus must be in [0, 1]");
  require(eta >= 0.0, "config: eta must be nonnegative");
  require(xi >= 0.0, "config: xi must be nonnegative");
  require(lr > 0.0, "config: lr must be positive");
  require(batch_size >= 1, "config: batch_size must be at least 1");
  require(epochs >= 1, "config: epochs must be at least 1");
}

std::pair<double, double> softmax_pair(double x0, double x1, double tau) {
  require(tau > 0.0, "softmax_pair: tau must be positive");
  double m = std::max(x0, x1);
  double e0 = std::exp((x0 - m) / tau), e1 = std::exp((x1 - m) / tau);
  double z = e0 + e1;
  return {e0 / z, e1 / z};
}

namespace {

// Align-corners source coordinate and interpolation weights on one axis.
inline void axis_coords(int i, int t_len, int s_len, int& lo, int& hi, double& frac) {
  if (s_len == 1) {
    lo = hi = 0;
    frac = 0.0;
    return;
  }
  double x = static_cast<double>(i) * (s_len - 1) / (t_len - 1);
  lo = std::min(static_cast<int>(x), s_len - 2);
  hi = lo + 1;
  frac = x - lo;
}

}  // namespace

Arr bilinear_upsample(const Arr& src, int th, int tw) {
  const int sh = static_cast<int>(src.rows()), sw = static_cast<int>(src.cols());
  require(sh >= 1 && sw >= 1, "upsample: empty source");
  require(th >= sh && tw >= sw, "upsample: target must not be smaller than source");
  Arr out(th, tw);
  for (int i = 0; i < th; ++i) {
    int y0, y1;
    double fy;
    axis_coords(i, th, sh, y0, y1, fy);
    for (int j = 0; j < tw; ++j) {
      int x0, x1;
      double fx;
      axis_coords(j, tw, sw, x0, x1, fx);
      out(i, j) = (1.0 - fy) * (1.0 - fx) * src(y0, x0) + (1.0 - fy) * fx * src(y0, x1) +
                  fy * (1.0 - fx) * src(y1, x0) + fy * fx * src(y1, x1);
    }
  }
  return out;
}

Arr bilinear_upsample_adjoint(const Arr& grad_target, int sh, int sw) {
  const int th = static_cast<int>(grad_target.rows()), tw = static_cast<int>(grad_target.cols());
  require(sh >= 1 && sw >= 1, "upsample adjoint: empty source shape");
  require(th >= sh && tw >= sw, "upsample adjoint: target must not be smaller than source");
  Arr out = Arr::Zero(sh, sw);
  for (int i = 0; i < th; ++i) {
    int y0, y1;
    double fy;
    axis_coords(i, th, sh, y0, y1, fy);
    for (int j = 0; j < tw; ++j) {
      int x0, x1;
      double fx;
      axis_coords(j, tw, sw, x0, x1, fx);
      double g = grad_target(i, j);
      out(y0, x0) += (1.0 - fy) * (1.0 - fx) * g;
      out(y0, x1) += (1.0 - fy) * fx * g;
      out(y1, x0) += fy * (1.0 - fx) * g;
      out(y1, x1) += fy * fx * g;
    }
  }
  return out;
}

double focal_loss(const Arr& s_n, const Arr& s_a, const Arr& mask, double gamma) {
  require(s_n.rows() == mask.rows() && s_n.cols() == mask.cols() && s_a.rows() == mask.rows() &&
              s_a.cols() == mask.cols(),
          "focal: map/mask shape mismatch");
  require(gamma >= 0.0, "focal: gamma must be nonnegative");
  require(mask.size() > 0, "focal: empty mask");
  double sum = 0.0;
  for (long i = 0; i < mask.size(); ++i) {
    double p = mask.data()[i] == 1.0 ? s_a.data()[i] : s_n.data()[i];
    double pc = std::max(p, 1e-12);
    sum += -std::pow(1.0 - pc, gamma) * std::log(pc);
  }
  return sum / static_cast<double>(mask.size());
}

double dice_loss(const Arr& s, const Arr& target, double smooth) {
  require(s.rows() == target.rows() && s.cols() == target.cols(),
          "dice: map/target shape mismatch");
  require(smooth >= 0.0, "dice: smooth must be nonnegative");
  double inter = (s * target).sum();
  double denom = s.sum() + target.sum() + smooth;
  require(denom > 0.0, "dice: degenerate denominator");
  return 1.0 - (2.0 * inter + smooth) / denom;
}

double base_local_loss(const Arr& s_n, const Arr& s_a, const Arr& mask, double gamma,
                       double smooth) {
  const int mh = static_cast<int>(mask.rows()), mw = static_cast<int>(mask.cols());
  Arr u_n = bilinear_upsample(s_n, mh, mw);
  Arr u_a = bilinear_upsample(s_a, mh, mw);
  return focal_loss(u_n, u_a, mask, gamma) + dice_loss(u_a, mask, smooth) +
         dice_loss(u_n, Arr(1.0 - mask), smooth);
}

double hinge_loss(const Arr& s_n_da, const Arr& s_a_da, const Arr& mask, double delta_minus,
                  double delta_plus, bool literal) {
  const int mh = static_cast<int>(mask.rows()), mw = static_cast<int>(mask.cols());
  require(s_n_da.rows() == s_a_da.rows() && s_n_da.cols() == s_a_da.cols(),
          "hinge: map shape mismatch");
  Arr u_n = bilinear_upsample(s_n_da, mh, mw);
  Arr u_a = bilinear_upsample(s_a_da, mh, mw);
  long nn = 0, na = 0;
  double acc_n = 0.0, acc_a = 0.0;
  for (long i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] == 0.0) {
      ++nn;
      double v = literal ? u_n.data()[i] : u_a.data()[i];
      acc_n += std::max(v - delta_minus, 0.0);
    } else {
      ++na;
      acc_a += std::max(delta_plus - u_a.data()[i], 0.0);
    }
  }
  double out = 0.0;
  if (nn > 0) out += acc_n / static_cast<double>(nn);
  if (na > 0) out += acc_a / static_cast<double>(na);
  return out;
}

double global_loss(const Vec& gbar_n, const Vec& gbar_a, const Vec& f, int label, double tau) {
  require(label == 0 || label == 1, "global loss: label must be 0 or 1");
  require(gbar_n.size() == f.size() && gbar_a.size() == f.size(),
          "global loss: dimension mismatch");
  double nf = f.norm();
  require(nf > 0.0, "global loss: zero-norm image embedding");
  double n0 = gbar_n.norm(), n1 = gbar_a.norm();
  require(n0 > 0.0, "global loss: zero-norm normal prompt");
  require(n1 > 0.0, "global loss: zero-norm anomalous prompt");
  double c0 = gbar_n.dot(f) / (n0 * nf), c1 = gbar_a.dot(f) / (n1 * nf);
  auto [p0, p1] = softmax_pair(c0, c1, tau);
  double p = label == 1 ? p1 : p0;
  return -std::log(std::max(p, 1e-300));
}

LossBreakdown total_loss(double global, double base, double da, double hinge, double reg,
                         double eta, double xi) {
  LossBreakdown out;
  out.global = global;
  out.base = base;
  out.da = da;
  out.hinge = hinge;
  out.reg = reg;
  out.total = base + da + global + eta * hinge + xi * reg;
  return out;
}

}  // namespace tokenclip
