#include "doctest.h"
#include "tokenclip/cli.hpp"
#include "tokenclip/io.hpp"
#include "tokenclip/train.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace tokenclip;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tokenclip_cli_" + std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::string> read_lines(const std::string& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

void write_file(const std::string& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

// Small end-to-end fixture: dataset + fast training config.
void write_configs(const TempDir& tmp) {
  write_file(tmp.file("spec.txt"),
             "n_train = 10\nn_test = 8\nh = 6\nw = 6\nd = 8\ns = 2\nrect_min = 2\n"
             "rect_max = 4\nseed = 7\n");
  write_file(tmp.file("train.txt"),
             "q = 2\nk = 2\nepsilon = 0.1\nepochs = 3\nbatch_size = 4\nlr = 0.001\nseed = 1\n");
}

}  // namespace

TEST_CASE("cli: gen writes a loadable dataset with the documented layout") {
  TempDir tmp;
  write_configs(tmp);
  REQUIRE(run_cli({"gen", "--config", tmp.file("spec.txt"), "--out", tmp.file("ds")}) == 0);
  CHECK(fs::exists(tmp.file("ds") + std::string("/dataset.txt")));
  CHECK(fs::exists(tmp.file("ds") + std::string("/train/0000.tokb")));
  CHECK(fs::exists(tmp.file("ds") + std::string("/train/0009.pgm")));
  CHECK(fs::exists(tmp.file("ds") + std::string("/test/0007.tokb")));
  Dataset ds = load_dataset(tmp.file("ds"));
  CHECK(ds.train.size() == 10);
  CHECK(ds.test.size() == 8);
  CHECK(ds.test[0].grid.h == 6);
  CHECK(ds.test[0].mask.rows() == 12);
}

TEST_CASE("cli: gen --seed overrides the config seed deterministically") {
  TempDir tmp;
  write_configs(tmp);
  REQUIRE(run_cli({"gen", "--config", tmp.file("spec.txt"), "--out", tmp.file("a"),
                   "--seed", "21"}) == 0);
  REQUIRE(run_cli({"gen", "--config", tmp.file("spec.txt"), "--out", tmp.file("b"),
                   "--seed", "21"}) == 0);
  REQUIRE(run_cli({"gen", "--config", tmp.file("spec.txt"), "--out", tmp.file("c")}) == 0);
  CHECK(slurp(tmp.file("a") + std::string("/train/0000.tokb")) ==
        slurp(tmp.file("b") + std::string("/train/0000.tokb")));
  CHECK(slurp(tmp.file("a") + std::string("/train/0000.tokb")) !=
        slurp(tmp.file("c") + std::string("/train/0000.tokb")));
}

TEST_CASE("cli: train/eval/score pipeline produces the documented artifacts") {
  TempDir tmp;
  write_configs(tmp);
  REQUIRE(run_cli({"gen", "--config", tmp.file("spec.txt"), "--out", tmp.file("ds")}) == 0);
  REQUIRE(run_cli({"train", "--dataset", tmp.file("ds"), "--config", tmp.file("train.txt"),
                   "--out", tmp.file("run")}) == 0);

  auto hist = read_lines(tmp.file("run") + std::string("/history.csv"));
  REQUIRE(hist.size() == 4);  // header + 3 epochs
  CHECK(hist[0] == "epoch,loss_global,loss_base,loss_da,loss_hinge,loss_reg,loss_total");
  CHECK(hist[1].substr(0, 2) == "0,");
  CHECK(fs::exists(tmp.file("run") + std::string("/checkpoint.ckpt")));

  REQUIRE(run_cli({"eval", "--dataset", tmp.file("ds"), "--checkpoint",
                   tmp.file("run") + std::string("/checkpoint.ckpt"), "--out",
                   tmp.file("eval")}) == 0);
  auto metrics = read_lines(tmp.file("eval") + std::string("/metrics.csv"));
  REQUIRE(metrics.size() == 5);
  CHECK(metrics[0] == "metric,value");
  CHECK(metrics[1].substr(0, 12) == "image_auroc,");
  for (size_t i = 1; i < metrics.size(); ++i) {
    double v = std::stod(metrics[i].substr(metrics[i].find(',') + 1));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  auto usage = read_lines(tmp.file("eval") + std::string("/subspace_usage.csv"));
  REQUIRE(usage.size() == 1 + 2 + 2 + 1);  // header, q support rows, q argmax rows, entropy
  CHECK(usage[0] == "key,value");
  CHECK(usage[1].substr(0, 15) == "support_freq_0,");
  CHECK(usage[5].substr(0, 19) == "normalized_entropy,");

  REQUIRE(run_cli({"score", "--dataset", tmp.file("ds"), "--checkpoint",
                   tmp.file("run") + std::string("/checkpoint.ckpt"), "--out",
                   tmp.file("maps")}) == 0);
  auto scores = read_lines(tmp.file("maps") + std::string("/image_scores.csv"));
  REQUIRE(scores.size() == 9);  // header + 8 test images
  CHECK(scores[0] == "index,label,image_score");
  CHECK(fs::exists(tmp.file("maps") + std::string("/score_0000.pgm")));
  CHECK(fs::exists(tmp.file("maps") + std::string("/score_0007.pgm")));
  // Score maps are written at mask resolution.
  std::string pgm = slurp(tmp.file("maps") + std::string("/score_0000.pgm"));
  CHECK(pgm.find("12 12") != std::string::npos);
}

TEST_CASE("cli: identical seeds give byte-identical training artifacts") {
  TempDir tmp;
  write_configs(tmp);
  REQUIRE(run_cli({"gen", "--config", tmp.file("spec.txt"), "--out", tmp.file("ds")}) == 0);
  for (const char* run : {"r1", "r2"})
    REQUIRE(run_cli({"train", "--dataset", tmp.file("ds"), "--config", tmp.file("train.txt"),
                     "--out", tmp.file(run)}) == 0);
  CHECK(slurp(tmp.file("r1") + std::string("/history.csv")) ==
        slurp(tmp.file("r2") + std::string("/history.csv")));
  CHECK(slurp(tmp.file("r1") + std::string("/checkpoint.ckpt")) ==
        slurp(tmp.file("r2") + std::string("/checkpoint.ckpt")));
}

TEST_CASE("cli: eval options change the scores they should change") {
  TempDir tmp;
  write_configs(tmp);
  REQUIRE(run_cli({"gen", "--config", tmp.file("spec.txt"), "--out", tmp.file("ds")}) == 0);
  REQUIRE(run_cli({"train", "--dataset", tmp.file("ds"), "--config", tmp.file("train.txt"),
                   "--out", tmp.file("run")}) == 0);
  std::string ckpt = tmp.file("run") + std::string("/checkpoint.ckpt");
  REQUIRE(run_cli({"score", "--dataset", tmp.file("ds"), "--checkpoint", ckpt, "--out",
                   tmp.file("ot")}) == 0);
  REQUIRE(run_cli({"score", "--dataset", tmp.file("ds"), "--checkpoint", ckpt, "--out",
                   tmp.file("van"), "--van"}) == 0);
  REQUIRE(run_cli({"score", "--dataset", tmp.file("ds"), "--checkpoint", ckpt, "--out",
                   tmp.file("bal"), "--image-score-formula", "balanced"}) == 0);
  std::string ot = slurp(tmp.file("ot") + std::string("/image_scores.csv"));
  CHECK(ot != slurp(tmp.file("van") + std::string("/image_scores.csv")));
  CHECK(ot != slurp(tmp.file("bal") + std::string("/image_scores.csv")));
  // The formula only affects image scores, not maps.
  CHECK(slurp(tmp.file("ot") + std::string("/score_0000.pgm")) ==
        slurp(tmp.file("bal") + std::string("/score_0000.pgm")));
}

TEST_CASE("cli: failures exit nonzero with a diagnostic") {
  TempDir tmp;
  write_configs(tmp);
  CHECK(run_cli({"eval", "--dataset", tmp.file("nope"), "--checkpoint", tmp.file("nope.ckpt"),
                 "--out", tmp.file("o")}) == 1);
  CHECK(run_cli({"train", "--dataset", tmp.file("nope"), "--out", tmp.file("o")}) == 1);
  write_file(tmp.file("bad.txt"), "not_a_key = 1\n");
  REQUIRE(run_cli({"gen", "--config", tmp.file("spec.txt"), "--out", tmp.file("ds")}) == 0);
  CHECK(run_cli({"train", "--dataset", tmp.file("ds"), "--config", tmp.file("bad.txt"),
                 "--out", tmp.file("o")}) == 1);
  CHECK(run_cli({}) != 0);             // a subcommand is required
  CHECK(run_cli({"frobnicate"}) != 0);
}

TEST_CASE("train api: loss history is per-epoch and decreasing on a learnable set") {
  SyntheticSpec spec;
  spec.n_train = 12;
  spec.n_test = 0;
  spec.h = spec.w = 6;
  spec.d = 8;
  spec.s = 2;
  spec.seed = 3;
  Dataset ds = generate_synthetic(spec);
  TrainConfig cfg;
  cfg.q = 2;
  cfg.k = 2;
  cfg.epsilon = 0.1;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 1;
  TrainResult tr = train(ds.train, cfg);
  REQUIRE(tr.history.size() == 3);
  CHECK(tr.history.back().total < tr.history.front().total);
  CHECK(tr.model.d == 8);
  for (const auto& l : tr.history) {
    CHECK(l.total == doctest::Approx(l.base + l.da + l.global + cfg.eta * l.hinge +
                                     cfg.xi * l.reg));
    CHECK(std::isfinite(l.total));
  }

  std::vector<LabeledSample> normals_only;
  for (const auto& s : ds.train)
    if (s.label == 0) normals_only.push_back(s);
  CHECK_THROWS_AS(train(normals_only, cfg), std::runtime_error);
}

TEST_CASE("score_sample: map shape, value range, and branch toggles") {
  SyntheticSpec spec;
  spec.n_train = 1;
  spec.n_test = 1;
  spec.h = spec.w = 5;
  spec.d = 8;
  spec.s = 3;
  spec.anomaly_rate = 1.0;
  spec.rect_min = 2;
  spec.rect_max = 3;
  spec.seed = 13;
  Dataset ds = generate_synthetic(spec);
  SubspaceModel m = init_model(8, 2, 4);
  TrainConfig cfg;
  cfg.q = 2;
  cfg.k = 2;
  cfg.epsilon = 0.1;

  SampleScore sc = score_sample(m, ds.test[0].grid, cfg, 15, 15);
  CHECK(sc.pixel.rows() == 15);
  CHECK(sc.pixel.cols() == 15);
  CHECK(sc.pixel.minCoeff() >= 0.0);
  CHECK(sc.pixel.maxCoeff() <= 1.0);
  CHECK(sc.image >= 0.0);
  CHECK(sc.image <= 1.0);
  CHECK(sc.a_n.n() == 25);

  ScoreOptions van;
  van.use_van = true;
  SampleScore sv = score_sample(m, ds.test[0].grid, cfg, 15, 15, van);
  for (int i = 0; i < sv.a_a.n(); ++i) {
    CHECK(sv.a_a.a.row(i).maxCoeff() == 1.0);  // one-hot rows
    CHECK(sv.a_a.a.row(i).sum() == 1.0);
  }

  TrainConfig base_only = cfg;
  base_only.enable_da = false;
  SampleScore sb = score_sample(m, ds.test[0].grid, base_only, 15, 15);
  CHECK(sb.a_n.n() == 0);
  CHECK(sb.pixel.rows() == 15);
}
