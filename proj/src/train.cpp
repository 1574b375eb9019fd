#include "tokenclip/train.hpp"

#include "tokenclip/adam.hpp"
#include "tokenclip/gradients.hpp"
#include "tokenclip/metrics.hpp"
#include "tokenclip/rng.hpp"

#include <numeric>

namespace tokenclip {

namespace {

void add_into(GradientSet& acc, const GradientSet& g) {
  auto av = param_views(acc);
  auto gv = param_views(const_cast<GradientSet&>(g));
  for (size_t b = 0; b < av.size(); ++b) av[b] += gv[b];
}

void scale(GradientSet& g, double s) {
  auto gv = param_views(g);
  for (auto& v : gv) v *= s;
}

void add_losses(LossBreakdown& acc, const LossBreakdown& l) {
  acc.global += l.global;
  acc.base += l.base;
  acc.da += l.da;
  acc.hinge += l.hinge;
  acc.reg += l.reg;
  acc.total += l.total;
}

void scale_losses(LossBreakdown& l, double s) {
  l.global *= s;
  l.base *= s;
  l.da *= s;
  l.hinge *= s;
  l.reg *= s;
  l.total *= s;
}

}  // namespace

TrainResult train(const std::vector<LabeledSample>& data, const TrainConfig& cfg) {
  cfg.validate();
  require(!data.empty(), "train: empty dataset");
  bool has0 = false, has1 = false;
  const int d = data.front().grid.dim();
  for (const auto& s : data) {
    s.validate();
    require(s.grid.dim() == d, "train: inconsistent token dimensions across the dataset");
    (s.label == 1 ? has1 : has0) = true;
  }
  require(has0 && has1, "train: dataset must contain both normal and anomalous samples");

  TrainResult out;
  out.model = init_model(d, cfg.q, cfg.seed);
  AdamState adam = make_adam(out.model);
  // decouple the shuffle stream from the init stream
  Rng shuffler(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  GradientSet batch_grad = zeros_like(out.model), g = zeros_like(out.model);

  for (int ep = 0; ep < cfg.epochs; ++ep) {
    shuffle(order, shuffler);
    LossBreakdown epoch_sum;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t stop = std::min(order.size(), start + cfg.batch_size);
      scale(batch_grad, 0.0);
      for (size_t i = start; i < stop; ++i) {
        ForwardResult fr = backward(out.model, data[order[i]], cfg, g);
        add_into(batch_grad, g);
        add_losses(epoch_sum, fr.losses);
      }
      scale(batch_grad, 1.0 / static_cast<double>(stop - start));
      adam_step(out.model, adam, batch_grad, cfg.lr);
    }
    scale_losses(epoch_sum, 1.0 / static_cast<double>(data.size()));
    out.history.push_back(epoch_sum);
  }
  return out;
}

SampleScore score_sample(const SubspaceModel& m, const TokenGrid& grid, const TrainConfig& cfg,
                         int th, int tw, const ScoreOptions& opt) {
  cfg.validate();
  grid.validate();
  require(m.d == grid.dim(), "score: model/token dimension mismatch");
  require(m.q == cfg.q, "score: model/config subspace count mismatch");

  auto [sb_n, sb_a] = base_score_map(grid, m.normal().l, m.anomalous().l, cfg.tau);

  Vec f = grid.pooled();
  Vec gbar_n = fuse_global(m.normal()), gbar_a = fuse_global(m.anomalous());
  double nf = f.norm();
  require(nf > 0.0, "score: zero-norm image embedding");
  double nn = gbar_n.norm(), na = gbar_a.norm();
  require(nn > 0.0 && na > 0.0, "score: zero-norm fused prompt");
  auto [pn, pa] = softmax_pair(gbar_n.dot(f) / (nn * nf), gbar_a.dot(f) / (na * nf), cfg.tau);
  (void)pn;

  SampleScore out;
  out.p_a_global = pa;

  AnomalyMap fused;
  if (cfg.enable_da) {
    Mat sim[2];
    AssignmentMatrix am[2];
    const ClassParams* cls[2] = {&m.normal(), &m.anomalous()};
    const char* names[2] = {"normal", "anomalous"};
    for (int c = 0; c < 2; ++c) {
      Mat o = project_subspaces(*cls[c], names[c]);
      sim[c] = cosine_sim(grid.tokens, o, "token", "subspace");
      if (opt.use_van) {
        am[c] = van_assignment(sim[c]);
      } else {
        CostMatrix cost;
        cost.c = (1.0 - sim[c].array()).max(0.0).min(2.0).matrix();
        SinkhornConfig scfg{cfg.lambda, cfg.sinkhorn_iters, cfg.sinkhorn_tol};
        TransportPlan plan = sinkhorn(cost, Marginals::uniform(grid.n(), m.q), scfg);
        am[c] = sparsify_topk(plan, cfg.k, cfg.epsilon);
      }
    }
    auto [z_n, z_a] = dynamic_logits(am[0], am[1], sim[0], sim[1]);
    auto [sd_n, sd_a] = score_map_from_logits(z_n, z_a, cfg.tau, grid.h, grid.w);
    fused = fuse_pixel_scores(sd_a, sb_a);
    out.a_n = am[0];
    out.a_a = am[1];
  } else {
    fused = sb_a;
  }
  out.pixel = bilinear_upsample(fused.v, th, tw);
  out.image = image_score(pa, fused, opt.formula);
  return out;
}

EvalResult evaluate(const SubspaceModel& m, const std::vector<LabeledSample>& test,
                    const TrainConfig& cfg, const ScoreOptions& opt, double fpr_limit) {
  require(!test.empty(), "evaluate: empty test set");
  ScoredSet img;
  ScoredSet px;
  std::vector<Arr> maps, masks;
  std::vector<AssignmentMatrix> usage;
  usage.reserve(test.size() * 2);
  for (const auto& s : test) {
    s.validate();
    SampleScore sc = score_sample(m, s.grid, cfg, static_cast<int>(s.mask.rows()),
                                  static_cast<int>(s.mask.cols()), opt);
    img.score.push_back(sc.image);
    img.label.push_back(s.label);
    for (long i = 0; i < s.mask.size(); ++i) {
      px.score.push_back(sc.pixel.data()[i]);
      px.label.push_back(s.mask.data()[i] == 1.0 ? 1 : 0);
    }
    maps.push_back(sc.pixel);
    masks.push_back(s.mask);
    if (cfg.enable_da) {
      usage.push_back(std::move(sc.a_n));
      usage.push_back(std::move(sc.a_a));
    }
  }
  EvalResult r;
  r.image_auroc = auroc(img);
  r.image_ap = average_precision(img);
  r.pixel_auroc = auroc(px);
  r.pixel_aupro = aupro(maps, masks, fpr_limit);
  if (cfg.enable_da) {
    std::vector<const AssignmentMatrix*> ptrs;
    ptrs.reserve(usage.size());
    for (const auto& a : usage) ptrs.push_back(&a);
    UsageHistogram h = subspace_usage_histogram(ptrs);
    r.usage_support = h.support_freq;
    r.usage_argmax = h.argmax_freq;
    r.usage_entropy = h.normalized_entropy;
  } else {
    r.usage_support = Vec::Zero(cfg.q);
    r.usage_argmax = Vec::Zero(cfg.q);
    r.usage_entropy = 0.0;
  }
  return r;
}

}  // namespace tokenclip
