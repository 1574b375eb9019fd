#pragma once

#include "tokenclip/types.hpp"

namespace tokenclip {

// Transport cost between token rows and subspace rows: C_ij = 1 - cos(v_i, o_j).
struct CostMatrix {
  Mat c;  // N x Q, entries in [0, 2]
  int n() const { return static_cast<int>(c.rows()); }
  int q() const { return static_cast<int>(c.cols()); }
};

// Cosine similarity between the rows of x and the rows of y; errors name the
// offending row if one has zero norm.
Mat cosine_sim(const Mat& x, const Mat& y, const char* x_name = "x", const char* y_name = "y");

CostMatrix build_cost_matrix(const Mat& tokens, const Mat& subspaces);

struct Marginals {
  Vec u;  // length N, strictly positive, sums to 1
  Vec v;  // length Q, strictly positive, sums to 1
  static Marginals uniform(int n, int q);
  void validate() const;
};

struct SinkhornConfig {
  double lambda = 0.01;  // entropic regularization weight
  int max_iters = 100;   // full (row, column) update sweeps
  double tol = 1e-9;     // early-stop threshold on the marginal residual
  void validate() const;
};

struct TransportPlan {
  Mat t;               // N x Q, nonnegative
  int iters = 0;       // sweeps actually run
  double residual = 0; // max-norm marginal residual at exit
};

// Log-domain Sinkhorn-Knopp for min <T,C> + lambda * sum T log T subject to
// marginal constraints. Updates run entirely on the dual potentials via
// log-sum-exp, so small lambda cannot underflow the kernel.
TransportPlan sinkhorn(const CostMatrix& cost, const Marginals& m, const SinkhornConfig& cfg);

// <T,C> + lambda * sum T log T, with 0 log 0 = 0.
double entropic_objective(const Mat& plan, const CostMatrix& cost, double lambda);

// max over |row sums - u| and |col sums - v|.
double marginal_residual(const Mat& plan, const Marginals& m);

// Residual of the fixed-point characterization: log T + C/lambda should be
// additively rank-one (f_i + g_j). Returns the max deviation after removing
// row and column means (entries with T below a floor are skipped).
double double_centering_residual(const Mat& plan, const CostMatrix& cost, double lambda);

// Brute-force exact OT for N, Q <= 3: grid over the (N-1)(Q-1) free
// coordinates, remaining entries completed from the marginals, infeasible
// completions (entries < -1e-12) discarded. Returns the best plan found.
// For uniform marginals the LP vertices sit on the grid, so the optimum is hit
// exactly when grid_steps is divisible by 6.
Mat exact_ot_bruteforce(const CostMatrix& cost, const Marginals& m, int grid_steps);

}  // namespace tokenclip
