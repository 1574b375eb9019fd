#include "tokenclip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace tokenclip {

void ScoredSet::validate() const {
  require(score.size() == label.size(), "scored set: score/label length mismatch");
  require(!score.empty(), "scored set: empty");
  bool has0 = false, has1 = false;
  for (size_t i = 0; i < score.size(); ++i) {
    require(std::isfinite(score[i]), "scored set: scores must be finite");
    require(label[i] == 0 || label[i] == 1, "scored set: labels must be 0 or 1");
    (label[i] == 1 ? has1 : has0) = true;
  }
  require(has0 && has1, "scored set: both classes must be present");
}

double auroc(const ScoredSet& s) {
  s.validate();
  const size_t n = s.score.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return s.score[a] < s.score[b]; });
  double rank_sum_pos = 0.0;
  long npos = 0, nneg = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && s.score[idx[j]] == s.score[idx[i]]) ++j;
    double avg_rank = (static_cast<double>(i) + 1.0 + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k)
      if (s.label[idx[k]] == 1) rank_sum_pos += avg_rank;
    i = j;
  }
  for (size_t k = 0; k < n; ++k) (s.label[k] == 1 ? npos : nneg)++;
  double u = rank_sum_pos - static_cast<double>(npos) * (npos + 1) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double auroc_pairwise(const ScoredSet& s) {
  s.validate();
  double u = 0.0;
  long npos = 0, nneg = 0;
  for (size_t i = 0; i < s.score.size(); ++i) {
    if (s.label[i] != 1) continue;
    ++npos;
    for (size_t j = 0; j < s.score.size(); ++j) {
      if (s.label[j] != 0) continue;
      if (s.score[i] > s.score[j])
        u += 1.0;
      else if (s.score[i] == s.score[j])
        u += 0.5;
    }
  }
  for (size_t j = 0; j < s.score.size(); ++j)
    if (s.label[j] == 0) ++nneg;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double average_precision(const ScoredSet& s) {
  s.validate();
  const size_t n = s.score.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return s.score[a] > s.score[b]; });
  long total_pos = 0;
  for (int l : s.label) total_pos += l;
  double ap = 0.0, prev_recall = 0.0;
  long tp = 0, fp = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && s.score[idx[j]] == s.score[idx[i]]) ++j;
    for (size_t k = i; k < j; ++k) (s.label[idx[k]] == 1 ? tp : fp)++;
    double recall = static_cast<double>(tp) / total_pos;
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

Eigen::ArrayXXi connected_components(const Arr& mask, int& n_regions) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  Eigen::ArrayXXi labels = Eigen::ArrayXXi::Constant(h, w, -1);
  n_regions = 0;
  std::deque<std::pair<int, int>> queue;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (mask(r, c) != 1.0 || labels(r, c) != -1) continue;
      int id = n_regions++;
      labels(r, c) = id;
      queue.emplace_back(r, c);
      while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int t = 0; t < 4; ++t) {
          int ny = y + dy[t], nx = x + dx[t];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          if (mask(ny, nx) != 1.0 || labels(ny, nx) != -1) continue;
          labels(ny, nx) = id;
          queue.emplace_back(ny, nx);
        }
      }
    }
  return labels;
}

double aupro(const std::vector<Arr>& scores, const std::vector<Arr>& masks, double fpr_limit) {
  require(fpr_limit > 0.0 && fpr_limit <= 1.0, "aupro: fpr_limit must be in (0, 1]");
  require(scores.size() == masks.size(), "aupro: scores/masks count mismatch");
  require(!scores.empty(), "aupro: empty input");

  std::vector<double> px_score;
  std::vector<int> px_region;  // -1 on normal pixels
  std::vector<long> region_size;
  long n_normal = 0;

  for (size_t m = 0; m < masks.size(); ++m) {
    require(scores[m].rows() == masks[m].rows() && scores[m].cols() == masks[m].cols(),
            "aupro: score map / mask shape mismatch");
    int nr = 0;
    Eigen::ArrayXXi labels = connected_components(masks[m], nr);
    int base = static_cast<int>(region_size.size());
    region_size.resize(base + nr, 0);
    for (int r = 0; r < masks[m].rows(); ++r)
      for (int c = 0; c < masks[m].cols(); ++c) {
        px_score.push_back(scores[m](r, c));
        int lab = labels(r, c);
        if (lab == -1) {
          px_region.push_back(-1);
          ++n_normal;
        } else {
          px_region.push_back(base + lab);
          ++region_size[base + lab];
        }
      }
  }
  require(!region_size.empty(), "aupro: no anomalous regions");
  require(n_normal > 0, "aupro: no normal pixels");

  std::vector<size_t> idx(px_score.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return px_score[a] > px_score[b]; });

  const size_t nreg = region_size.size();
  std::vector<long> hit(nreg, 0);
  long fp = 0;
  std::vector<double> xs{0.0}, ys{0.0};  // the curve starts at (0, 0)
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && px_score[idx[j]] == px_score[idx[i]]) ++j;
    for (size_t k = i; k < j; ++k) {
      int r = px_region[idx[k]];
      if (r == -1)
        ++fp;
      else
        ++hit[r];
    }
    double pro = 0.0;
    for (size_t r = 0; r < nreg; ++r)
      pro += static_cast<double>(hit[r]) / static_cast<double>(region_size[r]);
    pro /= static_cast<double>(nreg);
    xs.push_back(static_cast<double>(fp) / static_cast<double>(n_normal));
    ys.push_back(pro);
    i = j;
  }

  double area = 0.0;
  for (size_t p = 0; p + 1 < xs.size(); ++p) {
    double x0 = xs[p], x1 = xs[p + 1], y0 = ys[p], y1 = ys[p + 1];
    if (x0 >= fpr_limit) break;
    if (x1 <= x0) continue;  // vertical step, zero width
    if (x1 > fpr_limit) {
      double yl = y0 + (y1 - y0) * (fpr_limit - x0) / (x1 - x0);
      area += (fpr_limit - x0) * (y0 + yl) / 2.0;
      break;
    }
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  return area / fpr_limit;
}

}  // namespace tokenclip
