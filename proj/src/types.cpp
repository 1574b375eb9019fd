#include "tokenclip/types.hpp"

namespace tokenclip {

void TokenGrid::validate() const {
  require(h > 0 && w > 0, "token grid: h and w must be positive");
  require(tokens.cols() > 0, "token grid: token dimension must be positive");
  require(tokens.rows() == static_cast<long>(h) * w,
          "token grid: expected " + std::to_string(static_cast<long>(h) * w) + " rows, got " +
              std::to_string(tokens.rows()));
  if (global_embedding)
    require(global_embedding->size() == tokens.cols(),
            "token grid: global embedding dimension mismatch");
}

Vec TokenGrid::pooled() const {
  if (global_embedding) return *global_embedding;
  return tokens.colwise().mean();
}

void LabeledSample::validate() const {
  grid.validate();
  require(mask.rows() >= grid.h && mask.cols() >= grid.w,
          "sample: mask must be at least the grid resolution");
  bool any = false;
  for (long i = 0; i < mask.size(); ++i) {
    double m = mask.data()[i];
    require(m == 0.0 || m == 1.0, "sample: mask entries must be 0 or 1");
    any = any || m == 1.0;
  }
  require(label == (any ? 1 : 0), "sample: label must be 1 iff the mask is nonempty");
}

}  // namespace tokenclip
