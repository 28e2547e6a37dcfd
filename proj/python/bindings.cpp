#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mscib/error.hpp"
#include "mscib/experiment.hpp"

namespace py = pybind11;
using namespace mscib;

namespace {

py::dict report_dict(const ClusterReport& r) {
  py::dict d;
  d["labels"] = r.labels;
  d["acc"] = r.acc;
  d["nmi"] = r.nmi;
  d["ari"] = r.ari;
  d["inertia"] = r.inertia;
  d["runs"] = r.runs;
  return d;
}

py::dict breakdown_dict(const LossBreakdown& l) {
  py::dict d;
  d["rec"] = l.rec;
  d["ib"] = l.ib;
  d["sem"] = l.sem;
  d["reg"] = l.reg;
  d["total"] = l.total;
  return d;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed,
                             std::optional<std::filesystem::path> out) {
  auto c = read_experiment_config(path);
  if (seed) c.set_seed(*seed);
  if (out) c.out_dir = *out;
  return c;
}

}  // namespace

PYBIND11_MODULE(_mscib, m) {
  m.doc() = "Multi-view clustering core (C++)";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());

  m.def(
      "generate_synthetic",
      [](Eigen::Index n_samples, int n_clusters, Eigen::Index latent_dim, std::vector<Eigen::Index> view_dims,
         double separation, std::vector<double> noise, std::uint64_t seed) {
        SyntheticSpec s;
        s.n_samples = n_samples;
        s.n_clusters = n_clusters;
        s.latent_dim = latent_dim;
        s.view_dims = std::move(view_dims);
        s.cluster_separation = separation;
        s.noise_sigmas = std::move(noise);
        s.seed = seed;
        const auto ds = generate_synthetic(s);
        return py::make_tuple(ds.views(), *ds.labels());
      },
      py::arg("n_samples") = 300, py::arg("n_clusters") = 3, py::arg("latent_dim") = 10,
      py::arg("view_dims") = std::vector<Eigen::Index>{20, 30}, py::arg("separation") = 10.0,
      py::arg("noise") = std::vector<double>{0.1, 0.5}, py::arg("seed") = 0,
      "Returns (views, labels) for a Gaussian-mixture multi-view dataset.");

  m.def(
      "normalize",
      [](std::vector<Matrix> views, const std::string& mode) {
        return normalize_views(MultiViewDataset(std::move(views)), parse_normalization(mode)).views();
      },
      py::arg("views"), py::arg("mode") = "min-max");

  m.def("clustering_accuracy", [](const Labels& t, const Labels& p) { return clustering_accuracy(t, p); });
  m.def("nmi", [](const Labels& t, const Labels& p) { return nmi(t, p); });
  m.def("ari", [](const Labels& t, const Labels& p) { return ari(t, p); });

  m.def(
      "kmeans",
      [](const Matrix& x, int k, int restarts, int max_iters, double tol, std::uint64_t seed) {
        const auto r = kmeans(x, k, {restarts, max_iters, tol}, seed);
        return py::make_tuple(r.labels, r.inertia);
      },
      py::arg("points"), py::arg("k"), py::arg("restarts") = 10, py::arg("max_iters") = 300,
      py::arg("tol") = 1e-4, py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const Matrix& x, const Labels& truth, int k, int runs, std::uint64_t seed) {
        return report_dict(evaluate_representation(x, truth, k, runs, seed));
      },
      py::arg("points"), py::arg("truth"), py::arg("k"), py::arg("runs") = 10, py::arg("seed") = 0);

  m.def("gaussian_kl", &gaussian_kl, py::arg("mu"), py::arg("sigma"));
  m.def("pair_contrastive", &pair_contrastive, py::arg("q_m"), py::arg("q_n"), py::arg("tau") = 1.0);
  m.def("consistent_contrastive", &consistent_contrastive, py::arg("q_m"), py::arg("q_c"),
        py::arg("tau") = 1.0);
  m.def(
      "entropy_regularizer", [](const std::vector<Matrix>& q) { return entropy_regularizer(q); },
      py::arg("q"));
  m.def(
      "semantic_loss",
      [](const std::vector<Matrix>& q, const Matrix& q_c, double tau) { return semantic_loss(q, q_c, tau); },
      py::arg("q_views"), py::arg("q_c"), py::arg("tau") = 1.0);

  m.def(
      "train",
      [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out) {
        const auto c = load_config(config, seed, out);
        TrainArtifacts art;
        {
          py::gil_scoped_release release;
          art = cmd_train(c);
        }
        py::list history;
        for (const auto& e : art.train_history.epochs) {
          py::dict d = breakdown_dict(e.loss);
          d["epoch"] = e.epoch;
          if (e.eval) {
            d["acc"] = e.eval->acc;
            d["nmi"] = e.eval->nmi;
            d["ari"] = e.eval->ari;
          }
          history.append(d);
        }
        py::dict result;
        result["checkpoint"] = art.checkpoint;
        result["history_file"] = art.history;
        result["metrics_file"] = art.metrics ? py::cast(*art.metrics) : py::none();
        result["history"] = history;
        result["converged"] = art.train_history.converged;
        return result;
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      "Pretrain and train from a key-value config file; returns artifact paths and the history.");

  m.def(
      "evaluate_checkpoint",
      [](const std::filesystem::path& config, const std::filesystem::path& checkpoint,
         std::optional<std::filesystem::path> out) {
        return cmd_eval(load_config(config, std::nullopt, out), checkpoint);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out") = py::none());

  m.def(
      "embed",
      [](const std::filesystem::path& config, const std::filesystem::path& checkpoint, const std::string& which,
         std::optional<std::filesystem::path> out) {
        return read_matrix(cmd_embed(load_config(config, std::nullopt, out), checkpoint, which));
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("which") = "Z", py::arg("out") = py::none(),
      "Writes the embedding file and returns it as an array.");
}
