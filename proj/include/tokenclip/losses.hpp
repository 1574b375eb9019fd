#pragma once

#include "tokenclip/types.hpp"

#include <cstdint>

namespace tokenclip {

struct TrainConfig {
  int q = 3;                   // subspaces per class
  int k = 2;                   // top-k retained per assignment row
  double epsilon = 0.2;        // assignment weight floor (strict >)
  double lambda = 0.01;        // entropic regularization
  int sinkhorn_iters = 100;    // transport solver sweep budget
  double sinkhorn_tol = 1e-9;  // transport solver early-stop residual
  double tau = 0.07;           // softmax temperature (maps and global head)
  double gamma = 2.0;          // focal focusing exponent
  double smooth = 1.0;         // dice smoothing constant
  double delta_minus = 0.5;    // hinge margin on normal pixels
  double delta_plus = 0.5;     // hinge margin on anomalous pixels
  double eta = 5.0;            // hinge weight
  double xi = 100.0;           // orthogonality weight
  double lr = 1e-3;
  int batch_size = 8;
  int epochs = 30;
  uint64_t seed = 0;
  bool literal_hinge = false;  // normal-pixel hinge on S_n^da instead of S_a^da
  bool enable_da = true;       // false: drop dynamic-alignment + hinge terms,
                               // score with the base map only (ablation baseline)
  void validate() const;
};

struct LossBreakdown {
  double global = 0;
  double base = 0;
  double da = 0;
  double hinge = 0;
  double reg = 0;
  double total = 0;
};

// Two-class temperature softmax (p0, p1) in the max-shifted form; shared by
// score maps and the global head so every path computes identical bits.
std::pair<double, double> softmax_pair(double x0, double x1, double tau);

// Align-corners bilinear upsampling: source coordinate of target pixel i is
// i * (sh - 1) / (th - 1). Exact on constants; identity when sizes match.
// Target smaller than source is an error.
Arr bilinear_upsample(const Arr& src, int th, int tw);

// Adjoint of the same interpolation (transpose of the weight matrix):
// scatters each target gradient onto its four source corners.
Arr bilinear_upsample_adjoint(const Arr& grad_target, int sh, int sw);

// Mean over pixels of -(1 - p_t)^gamma log p_t, p_t = s_a on anomalous pixels
// and s_n on normal ones, clamped below at 1e-12.
double focal_loss(const Arr& s_n, const Arr& s_a, const Arr& mask, double gamma);

// 1 - (2 <s,t> + smooth) / (sum s + sum t + smooth).
double dice_loss(const Arr& s, const Arr& target, double smooth);

// Focal(S_n, S_a; mask) + Dice(S_a, mask) + Dice(S_n, 1-mask), with both maps
// first upsampled to the mask resolution.
double base_local_loss(const Arr& s_n, const Arr& s_a, const Arr& mask, double gamma,
                       double smooth);

// Margin penalty on the upsampled dynamic maps. Default (corrected) form:
//   mean over normal pixels    of max(S_a - delta_minus, 0)
// + mean over anomalous pixels of max(delta_plus - S_a, 0).
// Literal form replaces the normal-pixel term with max(S_n - delta_minus, 0).
// An empty pixel set contributes 0.
double hinge_loss(const Arr& s_n_da, const Arr& s_a_da, const Arr& mask, double delta_minus,
                  double delta_plus, bool literal);

// Cross entropy of the temperature softmax over (cos(gbar_n, f), cos(gbar_a, f))
// against the image label.
double global_loss(const Vec& gbar_n, const Vec& gbar_a, const Vec& f, int label, double tau);

// total = base + da + global + eta * hinge + xi * reg.
LossBreakdown total_loss(double global, double base, double da, double hinge, double reg,
                         double eta, double xi);

}  // namespace tokenclip
