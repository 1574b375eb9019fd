#include "tokenclip/gradients.hpp"
#include "tokenclip/io.hpp"
#include "tokenclip/metrics.hpp"
#include "tokenclip/ot.hpp"
#include "tokenclip/synthetic.hpp"
#include "tokenclip/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace tokenclip;

namespace {

ScoredSet make_scored(const std::vector<double>& score, const std::vector<int>& label) {
  ScoredSet s;
  s.score = score;
  s.label = label;
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "token-to-subspace dynamic alignment: transport solver, losses, "
            "training, and evaluation";

  // ---- data containers -----------------------------------------------------
  py::class_<TokenGrid>(m, "TokenGrid")
      .def(py::init<>())
      .def_readwrite("tokens", &TokenGrid::tokens)
      .def_readwrite("h", &TokenGrid::h)
      .def_readwrite("w", &TokenGrid::w)
      .def_readwrite("global_embedding", &TokenGrid::global_embedding)
      .def("pooled", &TokenGrid::pooled)
      .def("validate", &TokenGrid::validate);

  py::class_<LabeledSample>(m, "LabeledSample")
      .def(py::init<>())
      .def_readwrite("grid", &LabeledSample::grid)
      .def_readwrite("mask", &LabeledSample::mask)
      .def_readwrite("label", &LabeledSample::label)
      .def("validate", &LabeledSample::validate);

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("n_train", &SyntheticSpec::n_train)
      .def_readwrite("n_test", &SyntheticSpec::n_test)
      .def_readwrite("h", &SyntheticSpec::h)
      .def_readwrite("w", &SyntheticSpec::w)
      .def_readwrite("d", &SyntheticSpec::d)
      .def_readwrite("s", &SyntheticSpec::s)
      .def_readwrite("anomaly_rate", &SyntheticSpec::anomaly_rate)
      .def_readwrite("rect_min", &SyntheticSpec::rect_min)
      .def_readwrite("rect_max", &SyntheticSpec::rect_max)
      .def_readwrite("shift_magnitude", &SyntheticSpec::shift_magnitude)
      .def_readwrite("noise_scale", &SyntheticSpec::noise_scale)
      .def_readwrite("n_normal_clusters", &SyntheticSpec::n_normal_clusters)
      .def_readwrite("seed", &SyntheticSpec::seed);

  py::class_<Dataset>(m, "Dataset")
      .def_readwrite("spec", &Dataset::spec)
      .def_readwrite("train", &Dataset::train)
      .def_readwrite("test", &Dataset::test);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("q", &TrainConfig::q)
      .def_readwrite("k", &TrainConfig::k)
      .def_readwrite("epsilon", &TrainConfig::epsilon)
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("sinkhorn_iters", &TrainConfig::sinkhorn_iters)
      .def_readwrite("sinkhorn_tol", &TrainConfig::sinkhorn_tol)
      .def_readwrite("tau", &TrainConfig::tau)
      .def_readwrite("gamma", &TrainConfig::gamma)
      .def_readwrite("smooth", &TrainConfig::smooth)
      .def_readwrite("delta_minus", &TrainConfig::delta_minus)
      .def_readwrite("delta_plus", &TrainConfig::delta_plus)
      .def_readwrite("eta", &TrainConfig::eta)
      .def_readwrite("xi", &TrainConfig::xi)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("literal_hinge", &TrainConfig::literal_hinge)
      .def_readwrite("enable_da", &TrainConfig::enable_da)
      .def("validate", &TrainConfig::validate);

  py::class_<SubspaceModel>(m, "SubspaceModel")
      .def_readonly("d", &SubspaceModel::d)
      .def_readonly("q", &SubspaceModel::q);

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("global_", &LossBreakdown::global)
      .def_readonly("base", &LossBreakdown::base)
      .def_readonly("da", &LossBreakdown::da)
      .def_readonly("hinge", &LossBreakdown::hinge)
      .def_readonly("reg", &LossBreakdown::reg)
      .def_readonly("total", &LossBreakdown::total);

  py::class_<AssignmentMatrix>(m, "AssignmentMatrix")
      .def_readonly("a", &AssignmentMatrix::a)
      .def_readonly("k", &AssignmentMatrix::k)
      .def_readonly("epsilon", &AssignmentMatrix::epsilon);

  // ---- transport solver ----------------------------------------------------
  m.def(
      "cost_matrix",
      [](const Mat& tokens, const Mat& subspaces) { return build_cost_matrix(tokens, subspaces).c; },
      py::arg("tokens"), py::arg("subspaces"),
      "1 - cosine similarity between token rows and subspace rows, clamped to [0, 2]");

  m.def(
      "sinkhorn",
      [](const Mat& cost, double lambda, int max_iters, double tol) {
        CostMatrix c{cost};
        Marginals mg = Marginals::uniform(c.n(), c.q());
        TransportPlan p = tokenclip::sinkhorn(c, mg, {lambda, max_iters, tol});
        return py::make_tuple(p.t, p.iters, p.residual);
      },
      py::arg("cost"), py::arg("lambda_") = 0.01, py::arg("max_iters") = 100,
      py::arg("tol") = 1e-9,
      "entropic transport with uniform marginals; returns (plan, sweeps, residual)");

  m.def(
      "entropic_objective",
      [](const Mat& plan, const Mat& cost, double lambda) {
        return entropic_objective(plan, CostMatrix{cost}, lambda);
      },
      py::arg("plan"), py::arg("cost"), py::arg("lambda_"));

  m.def(
      "exact_ot_bruteforce",
      [](const Mat& cost, int grid_steps) {
        CostMatrix c{cost};
        return exact_ot_bruteforce(c, Marginals::uniform(c.n(), c.q()), grid_steps);
      },
      py::arg("cost"), py::arg("grid_steps") = 24,
      "grid-search optimum for instances up to 3x3 with uniform marginals");

  m.def(
      "marginal_residual",
      [](const Mat& plan) {
        return marginal_residual(plan, Marginals::uniform(static_cast<int>(plan.rows()),
                                                          static_cast<int>(plan.cols())));
      },
      py::arg("plan"));

  // ---- assignment ----------------------------------------------------------
  m.def(
      "sparsify_topk",
      [](const Mat& plan, int k, double epsilon) { return sparsify_topk(plan, k, epsilon).a; },
      py::arg("plan"), py::arg("k"), py::arg("epsilon"),
      "row-normalize, keep the top k entries (> epsilon), renormalize");

  m.def(
      "van_assignment", [](const Mat& sim) { return van_assignment(sim).a; }, py::arg("sim"),
      "one-hot argmax assignment");

  m.def("bilinear_upsample", &bilinear_upsample, py::arg("src"), py::arg("th"), py::arg("tw"));

  // ---- metrics ---------------------------------------------------------------
  m.def(
      "auroc",
      [](const std::vector<double>& score, const std::vector<int>& label) {
        return auroc(make_scored(score, label));
      },
      py::arg("score"), py::arg("label"));
  m.def(
      "average_precision",
      [](const std::vector<double>& score, const std::vector<int>& label) {
        return average_precision(make_scored(score, label));
      },
      py::arg("score"), py::arg("label"));
  m.def("aupro", &aupro, py::arg("scores"), py::arg("masks"), py::arg("fpr_limit") = 0.3);

  // ---- model, losses, training ----------------------------------------------
  m.def("init_model", &init_model, py::arg("d"), py::arg("q"), py::arg("seed"),
        py::arg("noise") = 0.1);

  m.def(
      "forward_losses",
      [](const SubspaceModel& model, const LabeledSample& s, const TrainConfig& cfg) {
        return forward_losses(model, s, cfg).losses;
      },
      py::arg("model"), py::arg("sample"), py::arg("config"));

  m.def("finite_diff_check",
        [](const SubspaceModel& model, const LabeledSample& s, const TrainConfig& cfg,
           double step) { return finite_diff_check(model, s, cfg, {}, step); },
        py::arg("model"), py::arg("sample"), py::arg("config"), py::arg("step") = 1e-5);

  m.def("generate_synthetic", &generate_synthetic, py::arg("spec"));

  m.def(
      "train",
      [](const std::vector<LabeledSample>& data, const TrainConfig& cfg) {
        TrainResult tr = tokenclip::train(data, cfg);
        return py::make_tuple(tr.model, tr.history);
      },
      py::arg("data"), py::arg("config"), "returns (model, per-epoch loss history)");

  m.def(
      "evaluate",
      [](const SubspaceModel& model, const std::vector<LabeledSample>& test,
         const TrainConfig& cfg, bool use_van, const std::string& formula, double fpr_limit) {
        ScoreOptions opt;
        opt.use_van = use_van;
        opt.formula =
            formula == "balanced" ? ImageScoreFormula::Balanced : ImageScoreFormula::Damped;
        EvalResult ev = tokenclip::evaluate(model, test, cfg, opt, fpr_limit);
        py::dict out;
        out["image_auroc"] = ev.image_auroc;
        out["image_ap"] = ev.image_ap;
        out["pixel_auroc"] = ev.pixel_auroc;
        out["pixel_aupro"] = ev.pixel_aupro;
        out["usage_support"] = ev.usage_support;
        out["usage_argmax"] = ev.usage_argmax;
        out["usage_entropy"] = ev.usage_entropy;
        return out;
      },
      py::arg("model"), py::arg("test"), py::arg("config"), py::arg("use_van") = false,
      py::arg("formula") = "damped", py::arg("fpr_limit") = 0.3);

  m.def(
      "score_sample",
      [](const SubspaceModel& model, const TokenGrid& grid, const TrainConfig& cfg, int th,
         int tw, bool use_van) {
        ScoreOptions opt;
        opt.use_van = use_van;
        SampleScore sc = tokenclip::score_sample(model, grid, cfg, th, tw, opt);
        py::dict out;
        out["pixel"] = sc.pixel;
        out["image"] = sc.image;
        out["p_a_global"] = sc.p_a_global;
        out["a_n"] = sc.a_n;
        out["a_a"] = sc.a_a;
        return out;
      },
      py::arg("model"), py::arg("grid"), py::arg("config"), py::arg("th"), py::arg("tw"),
      py::arg("use_van") = false);

  // ---- persistence -----------------------------------------------------------
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("model"),
        py::arg("config"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"),
        "returns (model, config) as saved");
  m.def("save_dataset", &save_dataset, py::arg("dir"), py::arg("dataset"));
  m.def("load_dataset", &load_dataset, py::arg("dir"));
  m.def("save_token_file", &save_token_file, py::arg("path"), py::arg("grid"));
  m.def("load_token_file", &load_token_file, py::arg("path"));
  m.def("save_mask_pgm", &save_mask_pgm, py::arg("path"), py::arg("mask"));
  m.def("load_mask_pgm", &load_mask_pgm, py::arg("path"));
}
