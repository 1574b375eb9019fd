#include "tokenclip/ot.hpp"

#include <cmath>
#include <limits>

namespace tokenclip {

namespace {

double lse(const Eigen::ArrayXd& x) {
  double m = x.maxCoeff();
  return m + std::log((x - m).exp().sum());
}

}  // namespace

Mat cosine_sim(const Mat& x, const Mat& y, const char* x_name, const char* y_name) {
  require(x.cols() == y.cols(), "cosine_sim: dimension mismatch");
  require(x.rows() > 0 && y.rows() > 0, "cosine_sim: empty input");
  Vec nx = x.rowwise().norm(), ny = y.rowwise().norm();
  for (int i = 0; i < nx.size(); ++i)
    require(nx(i) > 0.0, std::string(x_name) + " row " + std::to_string(i) + " has zero norm");
  for (int j = 0; j < ny.size(); ++j)
    require(ny(j) > 0.0, std::string(y_name) + " row " + std::to_string(j) + " has zero norm");
  Mat xn = nx.cwiseInverse().asDiagonal() * x;
  Mat yn = ny.cwiseInverse().asDiagonal() * y;
  return xn * yn.transpose();
}

CostMatrix build_cost_matrix(const Mat& tokens, const Mat& subspaces) {
  Mat s = cosine_sim(tokens, subspaces, "token", "subspace");
  CostMatrix out;
  out.c = (1.0 - s.array()).max(0.0).min(2.0).matrix();
  return out;
}

Marginals Marginals::uniform(int n, int q) {
  require(n > 0 && q > 0, "marginals: sizes must be positive");
  Marginals m;
  m.u = Vec::Constant(n, 1.0 / n);
  m.v = Vec::Constant(q, 1.0 / q);
  return m;
}

void Marginals::validate() const {
  require(u.size() > 0 && v.size() > 0, "marginals: empty");
  require((u.array() > 0.0).all() && (v.array() > 0.0).all(),
          "marginals: entries must be strictly positive");
  require(std::abs(u.sum() - 1.0) <= 1e-9, "marginals: row marginal must sum to 1");
  require(std::abs(v.sum() - 1.0) <= 1e-9, "marginals: column marginal must sum to 1");
}

void SinkhornConfig::validate() const {
  require(lambda > 0.0, "sinkhorn: lambda must be positive");
  require(max_iters >= 1, "sinkhorn: max_iters must be at least 1");
  require(tol >= 0.0, "sinkhorn: tol must be nonnegative");
}

double marginal_residual(const Mat& plan, const Marginals& m) {
  double r = (plan.rowwise().sum() - m.u).cwiseAbs().maxCoeff();
  double c = (plan.colwise().sum().transpose() - m.v).cwiseAbs().maxCoeff();
  return std::max(r, c);
}

TransportPlan sinkhorn(const CostMatrix& cost, const Marginals& m, const SinkhornConfig& cfg) {
  cfg.validate();
  m.validate();
  const int n = cost.n(), q = cost.q();
  require(n > 0 && q > 0, "sinkhorn: empty cost matrix");
  require(m.u.size() == n && m.v.size() == q, "sinkhorn: marginal sizes must match the cost");

  Mat logk = (-cost.c / cfg.lambda);
  Vec logu = m.u.array().log(), logv = m.v.array().log();
  Vec f = Vec::Zero(n), g = Vec::Zero(q);

  auto plan_of = [&]() -> Mat {
    Mat x = logk;
    x.colwise() += f;
    x.rowwise() += g.transpose();
    return x.array().exp().matrix();
  };

  TransportPlan out;
  out.residual = std::numeric_limits<double>::infinity();
  while (out.iters < cfg.max_iters) {
    ++out.iters;
    for (int i = 0; i < n; ++i) f(i) = logu(i) - lse(logk.row(i).transpose().array() + g.array());
    for (int j = 0; j < q; ++j) g(j) = logv(j) - lse(logk.col(j).array() + f.array());
    out.t = plan_of();
    out.residual = marginal_residual(out.t, m);
    if (out.residual < cfg.tol) break;
  }
  return out;
}

double entropic_objective(const Mat& plan, const CostMatrix& cost, double lambda) {
  require(plan.rows() == cost.c.rows() && plan.cols() == cost.c.cols(),
          "entropic_objective: plan/cost shape mismatch");
  double lin = (plan.array() * cost.c.array()).sum();
  double ent = 0.0;
  for (long i = 0; i < plan.size(); ++i) {
    double t = plan.data()[i];
    require(t >= 0.0, "entropic_objective: plan entries must be nonnegative");
    if (t > 0.0) ent += t * std::log(t);
  }
  return lin + lambda * ent;
}

double double_centering_residual(const Mat& plan, const CostMatrix& cost, double lambda) {
  require(plan.rows() == cost.c.rows() && plan.cols() == cost.c.cols(),
          "double_centering_residual: plan/cost shape mismatch");
  require(lambda > 0.0, "double_centering_residual: lambda must be positive");
  require((plan.array() > 0.0).all(),
          "double_centering_residual: requires a strictly positive plan");
  Mat m = plan.array().log().matrix() + cost.c / lambda;
  Vec rm = m.rowwise().mean(), cm = m.colwise().mean().transpose();
  double gm = m.mean();
  double worst = 0.0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      worst = std::max(worst, std::abs(m(i, j) - rm(i) - cm(j) + gm));
  return worst;
}

Mat exact_ot_bruteforce(const CostMatrix& cost, const Marginals& m, int grid_steps) {
  const int n = cost.n(), q = cost.q();
  require(n >= 1 && q >= 1 && n <= 3 && q <= 3, "exact_ot_bruteforce: only N, Q <= 3");
  require(grid_steps >= 1, "exact_ot_bruteforce: grid_steps must be positive");
  m.validate();
  require(m.u.size() == n && m.v.size() == q, "exact_ot_bruteforce: marginal size mismatch");

  const int fn = n - 1, fq = q - 1, nfree = fn * fq;
  std::vector<int> ctr(nfree, 0);
  Mat t(n, q), best;
  double best_cost = std::numeric_limits<double>::infinity();

  while (true) {
    bool feasible = true;
    for (int i = 0; i < fn; ++i)
      for (int j = 0; j < fq; ++j) {
        double cap = std::min(m.u(i), m.v(j));
        t(i, j) = cap * ctr[i * fq + j] / grid_steps;
      }
    for (int i = 0; i < fn && feasible; ++i) {
      double r = m.u(i) - t.row(i).head(fq).sum();
      if (r < -1e-12) feasible = false;
      t(i, q - 1) = r;
    }
    for (int j = 0; j < q && feasible; ++j) {
      double r = m.v(j) - t.col(j).head(fn).sum();
      if (r < -1e-12) feasible = false;
      t(n - 1, j) = r;
    }
    if (feasible) {
      Mat cand = t.array().max(0.0).matrix();
      double c = (cand.array() * cost.c.array()).sum();
      if (c < best_cost) {
        best_cost = c;
        best = cand;
      }
    }
    int p = 0;
    while (p < nfree) {
      if (++ctr[p] <= grid_steps) break;
      ctr[p] = 0;
      ++p;
    }
    if (nfree == 0 || p == nfree) break;
  }
  require(best_cost < std::numeric_limits<double>::infinity(),
          "exact_ot_bruteforce: no feasible grid point");
  return best;
}

}  // namespace tokenclip
