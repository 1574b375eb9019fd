#include "tokenclip/cli.hpp"

#include "tokenclip/io.hpp"
#include "tokenclip/metrics.hpp"
#include "tokenclip/ot.hpp"
#include "tokenclip/rng.hpp"
#include "tokenclip/train.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace tokenclip {

namespace {

namespace fs = std::filesystem;

struct Args {
  std::string config, dataset, checkpoint, out;
  uint64_t seed = 0;
  bool seed_set = false;
  bool van = false;
  bool literal_hinge = false;
  std::string formula = "damped";
};

ImageScoreFormula parse_formula(const std::string& f) {
  return f == "balanced" ? ImageScoreFormula::Balanced : ImageScoreFormula::Damped;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream os(path, std::ios::binary);  // binary keeps line endings byte-stable
  require(os.good(), "cannot open for writing: " + path);
  for (const auto& l : lines) os << l << "\n";
  require(os.good(), "write failed: " + path);
}

std::vector<std::string> metrics_lines(const EvalResult& ev) {
  std::vector<std::string> lines{"metric,value"};
  lines.push_back("image_auroc," + fmt_double(ev.image_auroc));
  lines.push_back("image_ap," + fmt_double(ev.image_ap));
  lines.push_back("pixel_auroc," + fmt_double(ev.pixel_auroc));
  lines.push_back("pixel_aupro," + fmt_double(ev.pixel_aupro));
  return lines;
}

std::vector<std::string> usage_lines(const EvalResult& ev) {
  std::vector<std::string> lines{"key,value"};
  for (long j = 0; j < ev.usage_support.size(); ++j)
    lines.push_back("support_freq_" + std::to_string(j) + "," + fmt_double(ev.usage_support(j)));
  for (long j = 0; j < ev.usage_argmax.size(); ++j)
    lines.push_back("argmax_freq_" + std::to_string(j) + "," + fmt_double(ev.usage_argmax(j)));
  lines.push_back("normalized_entropy," + fmt_double(ev.usage_entropy));
  return lines;
}

int cmd_gen(const Args& a) {
  SyntheticSpec spec;
  if (!a.config.empty()) spec = synthetic_spec_from_file(a.config);
  if (a.seed_set) spec.seed = a.seed;
  Dataset ds = generate_synthetic(spec);
  save_dataset(a.out, ds);
  std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size()
            << " test samples to " << a.out << "\n";
  return 0;
}

TrainConfig load_train_config(const Args& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = train_config_from_file(a.config);
  if (a.seed_set) cfg.seed = a.seed;
  if (a.literal_hinge) cfg.literal_hinge = true;
  return cfg;
}

int cmd_train(const Args& a) {
  Dataset ds = load_dataset(a.dataset);
  TrainConfig cfg = load_train_config(a);
  TrainResult tr = train(ds.train, cfg);
  fs::create_directories(a.out);
  std::vector<std::string> lines{fmt_loss_csv_header()};
  for (size_t e = 0; e < tr.history.size(); ++e)
    lines.push_back(fmt_loss_csv_row(static_cast<int>(e), tr.history[e]));
  write_lines(a.out + "/history.csv", lines);
  std::string ckpt = a.checkpoint.empty() ? a.out + "/checkpoint.ckpt" : a.checkpoint;
  save_checkpoint(ckpt, tr.model, cfg);
  std::cout << "trained " << cfg.epochs << " epochs; final loss "
            << fmt_double(tr.history.back().total) << "; checkpoint " << ckpt << "\n";
  return 0;
}

int cmd_eval(const Args& a) {
  auto [model, cfg] = load_checkpoint(a.checkpoint);
  Dataset ds = load_dataset(a.dataset);
  ScoreOptions opt{a.van, parse_formula(a.formula)};
  EvalResult ev = evaluate(model, ds.test, cfg, opt);
  fs::create_directories(a.out);
  write_lines(a.out + "/metrics.csv", metrics_lines(ev));
  write_lines(a.out + "/subspace_usage.csv", usage_lines(ev));
  std::cout << "image_auroc=" << fmt_double(ev.image_auroc)
            << " image_ap=" << fmt_double(ev.image_ap)
            << " pixel_auroc=" << fmt_double(ev.pixel_auroc)
            << " pixel_aupro=" << fmt_double(ev.pixel_aupro) << "\n";
  return 0;
}

int cmd_score(const Args& a) {
  auto [model, cfg] = load_checkpoint(a.checkpoint);
  Dataset ds = load_dataset(a.dataset);
  ScoreOptions opt{a.van, parse_formula(a.formula)};
  fs::create_directories(a.out);
  std::vector<std::string> lines{"index,label,image_score"};
  for (size_t i = 0; i < ds.test.size(); ++i) {
    const auto& s = ds.test[i];
    SampleScore sc = score_sample(model, s.grid, cfg, static_cast<int>(s.mask.rows()),
                                  static_cast<int>(s.mask.cols()), opt);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    save_score_pgm(a.out + "/score_" + buf + ".pgm", sc.pixel);
    lines.push_back(std::to_string(i) + "," + std::to_string(s.label) + "," +
                    fmt_double(sc.image));
  }
  write_lines(a.out + "/image_scores.csv", lines);
  std::cout << "wrote " << ds.test.size() << " score maps to " << a.out << "\n";
  return 0;
}

// Randomized property suite for the transport solver; prints one line per
// property and fails the process if any bound is violated.
int cmd_sinkhorn_check(uint64_t seed) {
  Rng rng(seed);
  int fails = 0;
  auto report = [&](const char* name, bool ok, double worst, double bound) {
    std::cout << (ok ? "PASS" : "FAIL") << " " << name << " (worst " << worst << ", bound "
              << bound << ")\n";
    if (!ok) ++fails;
  };
  auto random_cost = [&](int n, int q) {
    CostMatrix c;
    c.c.resize(n, q);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < q; ++j) c.c(i, j) = rng.uniform(0.0, 2.0);
    return c;
  };

  {  // feasibility: nonnegative plan, unit mass, tight marginals at convergence
    double worst = 0.0;
    bool nonneg = true;
    for (int t = 0; t < 20; ++t) {
      int n = 2 + static_cast<int>(rng.integer(9)), q = 2 + static_cast<int>(rng.integer(5));
      CostMatrix c = random_cost(n, q);
      TransportPlan p = sinkhorn(c, Marginals::uniform(n, q), {0.1, 200000, 1e-10});
      nonneg = nonneg && (p.t.array() >= 0.0).all();
      worst = std::max(worst, marginal_residual(p.t, Marginals::uniform(n, q)));
      worst = std::max(worst, std::abs(p.t.sum() - 1.0));
    }
    report("marginal feasibility", nonneg && worst < 1e-9, worst, 1e-9);
  }
  {  // fixed point: log T + C/lambda is additively rank-one
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      int n = 2 + static_cast<int>(rng.integer(9)), q = 2 + static_cast<int>(rng.integer(5));
      CostMatrix c = random_cost(n, q);
      TransportPlan p = sinkhorn(c, Marginals::uniform(n, q), {0.1, 200000, 1e-10});
      worst = std::max(worst, double_centering_residual(p.t, c, 0.1));
    }
    report("double-centering fixed point", worst < 1e-8, worst, 1e-8);
  }
  {  // invariance to additive row/column shifts of the cost
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      int n = 2 + static_cast<int>(rng.integer(7)), q = 2 + static_cast<int>(rng.integer(4));
      CostMatrix c = random_cost(n, q), shifted = c;
      for (int i = 0; i < n; ++i) shifted.c.row(i).array() += rng.uniform(-1.0, 1.0);
      for (int j = 0; j < q; ++j) shifted.c.col(j).array() += rng.uniform(-1.0, 1.0);
      // A column shift changes the effective dual initialization, so the two
      // runs only produce the same plan once converged.
      SinkhornConfig scfg{0.1, 2000000, 1e-13};
      Mat a = sinkhorn(c, Marginals::uniform(n, q), scfg).t;
      Mat b = sinkhorn(shifted, Marginals::uniform(n, q), scfg).t;
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    report("shift invariance", worst < 1e-9, worst, 1e-9);
  }
  {  // permutation equivariance
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      int n = 2 + static_cast<int>(rng.integer(7)), q = 2 + static_cast<int>(rng.integer(4));
      CostMatrix c = random_cost(n, q);
      std::vector<int> pr(n), pc(q);
      std::iota(pr.begin(), pr.end(), 0);
      std::iota(pc.begin(), pc.end(), 0);
      shuffle(pr, rng);
      shuffle(pc, rng);
      CostMatrix cp;
      cp.c.resize(n, q);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < q; ++j) cp.c(i, j) = c.c(pr[i], pc[j]);
      SinkhornConfig scfg{0.05, 300, 0.0};
      Mat a = sinkhorn(c, Marginals::uniform(n, q), scfg).t;
      Mat b = sinkhorn(cp, Marginals::uniform(n, q), scfg).t;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < q; ++j)
          worst = std::max(worst, std::abs(b(i, j) - a(pr[i], pc[j])));
    }
    report("permutation equivariance", worst < 1e-12, worst, 1e-12);
  }
  {  // optimality: the converged plan minimizes its own entropic objective
    double worst = -1e300;
    for (int t = 0; t < 10; ++t) {
      int n = 2 + static_cast<int>(rng.integer(5)), q = 2 + static_cast<int>(rng.integer(3));
      CostMatrix c = random_cost(n, q);
      Marginals m = Marginals::uniform(n, q);
      Mat lo = sinkhorn(c, m, {0.05, 1000000, 1e-12}).t;
      Mat hi = sinkhorn(c, m, {0.5, 1000000, 1e-12}).t;
      worst = std::max(worst, entropic_objective(lo, c, 0.05) - entropic_objective(hi, c, 0.05));
    }
    report("objective optimality across lambda", worst < 1e-9, worst, 1e-9);
  }
  {  // near-LP behavior at small lambda against the exact grid solver
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
      CostMatrix c = random_cost(3, 3);
      Marginals m = Marginals::uniform(3, 3);
      Mat p = sinkhorn(c, m, {1e-3, 3000000, 1e-9}).t;
      Mat lp = exact_ot_bruteforce(c, m, 24);
      double gap = (p.array() * c.c.array()).sum() - (lp.array() * c.c.array()).sum();
      worst = std::max(worst, std::abs(gap));
    }
    report("exact-solver agreement at small lambda", worst < 1e-2, worst, 1e-2);
  }
  return fails == 0 ? 0 : 1;
}

int cmd_ablate(const Args& a) {
  Dataset ds = load_dataset(a.dataset);
  TrainConfig base = load_train_config(a);
  fs::create_directories(a.out);
  std::vector<std::string> lines{"param,value,image_auroc,image_ap,pixel_auroc,pixel_aupro"};
  auto run_cell = [&](const std::string& name, const std::string& value, TrainConfig cfg) {
    TrainResult tr = train(ds.train, cfg);
    EvalResult ev = evaluate(tr.model, ds.test, cfg);
    lines.push_back(name + "," + value + "," + fmt_double(ev.image_auroc) + "," +
                    fmt_double(ev.image_ap) + "," + fmt_double(ev.pixel_auroc) + "," +
                    fmt_double(ev.pixel_aupro));
    std::cout << "ablate " << name << "=" << value << " pixel_auroc "
              << fmt_double(ev.pixel_auroc) << "\n";
  };
  for (int q = 1; q <= 5; ++q) {
    TrainConfig cfg = base;
    cfg.q = q;
    cfg.k = std::min(base.k, q);  // top-k cannot exceed the subspace count
    run_cell("q", std::to_string(q), cfg);
  }
  for (int k : {1, 2, 3}) {
    TrainConfig cfg = base;
    cfg.k = k;
    run_cell("k", std::to_string(k), cfg);
  }
  for (double eps : {0.1, 0.2, 0.3, 0.4}) {
    TrainConfig cfg = base;
    cfg.epsilon = eps;
    run_cell("epsilon", fmt_double(eps), cfg);
  }
  write_lines(a.out + "/ablation.csv", lines);
  std::cout << "wrote " << lines.size() - 1 << " ablation rows to " << a.out << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"token-to-subspace dynamic alignment toolkit"};
  app.require_subcommand(1);

  Args a;
  uint64_t seed_val = 0;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed_val, "override the config seed")->each([&](const std::string&) {
      a.seed_set = true;
    });
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", a.config, "synthetic spec file")->check(CLI::ExistingFile);
  gen->add_option("--out", a.out, "output dataset directory")->required();
  add_seed(gen);

  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--dataset", a.dataset, "dataset directory")->required();
  tr->add_option("--config", a.config, "training config file")->check(CLI::ExistingFile);
  tr->add_option("--checkpoint", a.checkpoint, "checkpoint output path");
  tr->add_option("--out", a.out, "output directory for the loss history")->required();
  tr->add_flag("--literal-hinge", a.literal_hinge, "use the literal hinge form");
  add_seed(tr);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--dataset", a.dataset, "dataset directory")->required();
  ev->add_option("--checkpoint", a.checkpoint, "checkpoint path")->required();
  ev->add_option("--out", a.out, "output directory for metric CSVs")->required();
  ev->add_flag("--van", a.van, "one-hot argmax assignment instead of transport");
  ev->add_option("--image-score-formula", a.formula, "damped|balanced")
      ->check(CLI::IsMember({"damped", "balanced"}));

  auto* sc = app.add_subcommand("score", "write per-image anomaly maps for the test split");
  sc->add_option("--dataset", a.dataset, "dataset directory")->required();
  sc->add_option("--checkpoint", a.checkpoint, "checkpoint path")->required();
  sc->add_option("--out", a.out, "output directory for score PGMs")->required();
  sc->add_flag("--van", a.van, "one-hot argmax assignment instead of transport");
  sc->add_option("--image-score-formula", a.formula, "damped|balanced")
      ->check(CLI::IsMember({"damped", "balanced"}));

  auto* sk = app.add_subcommand("sinkhorn-check", "run the transport solver property suite");
  add_seed(sk);

  auto* ab = app.add_subcommand("ablate", "sweep q, k, and epsilon; one CSV row per cell");
  ab->add_option("--dataset", a.dataset, "dataset directory")->required();
  ab->add_option("--config", a.config, "training config file")->check(CLI::ExistingFile);
  ab->add_option("--out", a.out, "output directory for the ablation CSV")->required();
  ab->add_flag("--literal-hinge", a.literal_hinge, "use the literal hinge form");
  add_seed(ab);

  std::vector<std::string> full;
  full.push_back("tokenclip");
  for (const auto& s : args) full.push_back(s);
  std::vector<const char*> argv;
  for (const auto& s : full) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  a.seed = seed_val;

  try {
    if (gen->parsed()) return cmd_gen(a);
    if (tr->parsed()) return cmd_train(a);
    if (ev->parsed()) return cmd_eval(a);
    if (sc->parsed()) return cmd_score(a);
    if (sk->parsed()) return cmd_sinkhorn_check(a.seed_set ? a.seed : 0);
    if (ab->parsed()) return cmd_ablate(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace tokenclip
