#include "tokenclip/synthetic.hpp"

#include "tokenclip/rng.hpp"

#include <algorithm>

namespace tokenclip {

void SyntheticSpec::validate() const {
  require(n_train >= 1, "synthetic: n_train must be at least 1");
  require(n_test >= 0, "synthetic: n_test must be nonnegative");
  require(h >= 1 && w >= 1, "synthetic: grid dimensions must be positive");
  require(d >= 1, "synthetic: token dimension must be positive");
  require(s >= 1, "synthetic: pixel scale must be at least 1");
  require(anomaly_rate >= 0.0 && anomaly_rate <= 1.0, "synthetic: anomaly_rate must be in [0, 1]");
  require(rect_min >= 1, "synthetic: rect_min must be at least 1");
  require(rect_max >= rect_min, "synthetic: rect_max must be >= rect_min");
  require(rect_max <= std::min(h, w), "synthetic: planted rectangle bounds exceed the grid");
  require(shift_magnitude >= 0.0, "synthetic: shift_magnitude must be nonnegative");
  require(noise_scale >= 0.0, "synthetic: noise_scale must be nonnegative");
  require(n_normal_clusters >= 1, "synthetic: n_normal_clusters must be at least 1");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  auto unit_draw = [&]() {
    Vec x(spec.d);
    for (int i = 0; i < spec.d; ++i) x(i) = rng.normal();
    double n = x.norm();
    require(n > 0.0, "synthetic: degenerate direction draw");
    return Vec(x / n);
  };

  std::vector<Vec> protos(spec.n_normal_clusters);
  for (auto& p : protos) p = unit_draw();
  Vec anomaly_dir = unit_draw();

  auto make = [&](std::vector<LabeledSample>& out, int count) {
    for (int img = 0; img < count; ++img) {
      int cluster = static_cast<int>(rng.integer(spec.n_normal_clusters));
      bool anom = rng.uniform() < spec.anomaly_rate;
      int rh = 0, rw = 0, r0 = 0, c0 = 0;
      if (anom) {
        rh = spec.rect_min + static_cast<int>(rng.integer(spec.rect_max - spec.rect_min + 1));
        rw = spec.rect_min + static_cast<int>(rng.integer(spec.rect_max - spec.rect_min + 1));
        r0 = static_cast<int>(rng.integer(spec.h - rh + 1));
        c0 = static_cast<int>(rng.integer(spec.w - rw + 1));
      }
      Mat tokens(static_cast<long>(spec.h) * spec.w, spec.d);
      for (int r = 0; r < spec.h; ++r)
        for (int c = 0; c < spec.w; ++c)
          for (int j = 0; j < spec.d; ++j)
            tokens(static_cast<long>(r) * spec.w + c, j) =
                protos[cluster](j) + spec.noise_scale * rng.normal();
      Arr mask = Arr::Zero(static_cast<long>(spec.h) * spec.s,
                           static_cast<long>(spec.w) * spec.s);
      if (anom) {
        for (int r = r0; r < r0 + rh; ++r)
          for (int c = c0; c < c0 + rw; ++c)
            tokens.row(static_cast<long>(r) * spec.w + c) +=
                spec.shift_magnitude * anomaly_dir.transpose();
        mask.block(static_cast<long>(r0) * spec.s, static_cast<long>(c0) * spec.s,
                   static_cast<long>(rh) * spec.s, static_cast<long>(rw) * spec.s) = 1.0;
      }
      LabeledSample sample;
      sample.grid = TokenGrid{std::move(tokens), spec.h, spec.w, std::nullopt};
      sample.mask = std::move(mask);
      sample.label = anom ? 1 : 0;
      sample.validate();
      out.push_back(std::move(sample));
    }
  };

  Dataset ds;
  ds.spec = spec;
  make(ds.train, spec.n_train);
  make(ds.test, spec.n_test);
  return ds;
}

}  // namespace tokenclip
