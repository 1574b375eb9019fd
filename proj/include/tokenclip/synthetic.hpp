#pragma once

#include "tokenclip/types.hpp"

#include <cstdint>

namespace tokenclip {

struct SyntheticSpec {
  int n_train = 200;
  int n_test = 50;
  int h = 16, w = 16;          // token grid
  int d = 32;                  // token dimension
  int s = 4;                   // pixels per patch side (mask is h*s x w*s)
  double anomaly_rate = 0.5;
  int rect_min = 2, rect_max = 6;  // planted rectangle side bounds, in patches
  double shift_magnitude = 1.0;    // anomaly shift along a fixed direction
  double noise_scale = 0.1;
  int n_normal_clusters = 2;
  uint64_t seed = 0;
  void validate() const;
};

struct Dataset {
  SyntheticSpec spec;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
};

// Cluster prototypes and the anomaly direction are drawn first, then images in
// order (train, then test), so one seed pins every byte of the dataset.
// Anomalous images shift the tokens inside a planted rectangle along the
// anomaly direction; the mask marks the rectangle's pixels; label = 1 iff the
// mask is nonempty.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace tokenclip
