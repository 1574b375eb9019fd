#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tokenclip {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Arr = Eigen::ArrayXXd;  // (rows, cols) = (h, w) for grid-shaped data

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

// Patch tokens of one image: N = h*w rows in row-major grid order, d columns.
struct TokenGrid {
  Mat tokens;  // N x d
  int h = 0, w = 0;
  std::optional<Vec> global_embedding;

  int n() const { return static_cast<int>(tokens.rows()); }
  int dim() const { return static_cast<int>(tokens.cols()); }
  void validate() const;
  // Global image embedding: the stored one if present, else the token mean.
  Vec pooled() const;
};

// Tokens plus a pixel-level binary mask and the image label (1 iff the mask
// has any positive pixel).
struct LabeledSample {
  TokenGrid grid;
  Arr mask;  // (h*s) x (w*s), entries in {0,1}
  int label = 0;
  void validate() const;
};

}  // namespace tokenclip
