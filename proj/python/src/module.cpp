#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "siamgcn/app.hpp"
#include "siamgcn/checkpoint.hpp"
#include "siamgcn/evaluation.hpp"
#include "siamgcn/objective.hpp"
#include "siamgcn/spectral.hpp"
#include "siamgcn/training.hpp"

namespace py = pybind11;
using namespace siamgcn;

namespace {

LambdaMaxMethod parse_lambda_method(const std::string& name) {
  if (name == "exact") return LambdaMaxMethod::exact;
  if (name == "power") return LambdaMaxMethod::power_iteration;
  if (name == "bound") return LambdaMaxMethod::upper_bound;
  throw ValidationError("lambda_max method must be exact, power or bound");
}

Adjacency as_adjacency(const Matrix& w) {
  Adjacency a{w};
  a.validate();
  return a;
}

std::vector<std::uint8_t> as_flags(const std::vector<int>& v) { return {v.begin(), v.end()}; }

py::dict summary_dict(const MetricSummary& s) {
  py::dict d;
  d["auc"] = s.auc;
  d["knn_accuracy"] = s.knn_accuracy;
  d["knn_accuracy_same_site"] = s.knn_accuracy_same_site;
  d["p_value"] = s.p_value;
  d["mean_distance_matching"] = s.mean_distance_matching;
  d["mean_distance_non_matching"] = s.mean_distance_non_matching;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["n_subjects"] = r.n_subjects;
  d["n_pairs"] = r.n_pairs;
  d["n_matching"] = r.n_matching;
  d["knn_k"] = r.knn_k;
  d["pca_components"] = r.pca_components;
  d["learned"] = summary_dict(r.learned);
  d["baseline"] = summary_dict(r.baseline);
  py::list sites;
  for (const auto& s : r.sites) {
    py::dict site;
    site["site_id"] = s.site_id;
    site["n_subjects"] = s.n_subjects;
    site["n_pairs"] = s.n_pairs;
    site["learned"] = summary_dict(s.learned);
    site["baseline"] = summary_dict(s.baseline);
    sites.append(site);
  }
  d["sites"] = sites;
  return d;
}

py::object run_command(const std::string& command, const std::filesystem::path& workdir,
                       const std::optional<std::filesystem::path>& config_path,
                       const std::map<std::string, std::string>& overrides,
                       const std::optional<std::filesystem::path>& distances, const std::string& column) {
  RunConfig config;
  if (config_path) load_config(*config_path, config);
  for (const auto& [k, v] : overrides) config.set(k, v);
  py::gil_scoped_release release;
  if (command == "synth") {
    app::cmd_synth(config, workdir);
  } else if (command == "preprocess") {
    app::cmd_preprocess(config, workdir);
  } else if (command == "train") {
    app::cmd_train(config, workdir);
  } else if (command == "evaluate") {
    const EvalReport report = app::cmd_evaluate(config, workdir);
    py::gil_scoped_acquire acquire;
    return report_dict(report);
  } else if (command == "baseline") {
    app::cmd_baseline(config, workdir);
  } else if (command == "permtest") {
    if (!distances) throw ValidationError("permtest needs distances=");
    const double p = app::cmd_permtest(config, workdir, *distances, column);
    py::gil_scoped_acquire acquire;
    return py::float_(p);
  } else {
    throw ValidationError("unknown command '" + command + "'");
  }
  py::gil_scoped_acquire acquire;
  return py::none();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Siamese spectral graph convolutional network for graph similarity metric learning";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "normalized_laplacian",
      [](const Matrix& adjacency, const std::string& lambda_max) {
        const Laplacian l = normalized_laplacian(as_adjacency(adjacency), parse_lambda_method(lambda_max));
        return py::make_tuple(l.l, l.lambda_max);
      },
      py::arg("adjacency"), py::arg("lambda_max") = "exact",
      "Returns (L, lambda_max) for L = I - D^-1/2 A D^-1/2.");
  m.def(
      "rescale_laplacian",
      [](const Matrix& laplacian, double lambda_max) {
        Laplacian l{laplacian, lambda_max};
        l.lambda_max = safe_lambda_max(l);
        return rescale_laplacian(l);
      },
      py::arg("laplacian"), py::arg("lambda_max"), "2 L / lambda_max - I.");
  m.def(
      "symmetric_eig",
      [](const Matrix& a) {
        const auto d = symmetric_eig(a);
        return py::make_tuple(d.eigenvalues, d.eigenvectors);
      },
      py::arg("matrix"), "Jacobi eigendecomposition: (ascending eigenvalues, eigenvectors as columns).");
  m.def(
      "chebyshev_filter",
      [](const Matrix& l_scaled, const Vector& signal, const std::vector<double>& theta) {
        return chebyshev_filter(l_scaled, signal, ChebCoeffs{theta});
      },
      py::arg("l_scaled"), py::arg("signal"), py::arg("theta"), "sum_k theta_k T_k(l_scaled) signal.");
  m.def(
      "spectral_filter",
      [](const Matrix& laplacian, double lambda_max, const Vector& signal, const std::vector<double>& theta) {
        return spectral_filter_oracle(symmetric_eig(laplacian), signal, ChebCoeffs{theta}, lambda_max);
      },
      py::arg("laplacian"), py::arg("lambda_max"), py::arg("signal"), py::arg("theta"),
      "The same filter evaluated in the Laplacian eigenbasis.");
  m.def(
      "graph_hash", [](const Matrix& adjacency) { return graph_hash(Adjacency{adjacency}); },
      py::arg("adjacency"));

  m.def("pearson_profiles", &pearson_profiles, py::arg("timeseries"),
        "R x R Pearson correlations of a T x R time-series matrix.");
  m.def(
      "synth_cohort",
      [](int n_subjects, int rois, int timepoints, double effect, std::uint64_t seed) {
        py::list out;
        for (const auto& rec : synth_cohort(n_subjects, rois, timepoints, effect, seed)) {
          py::dict d;
          d["subject_id"] = rec.subject_id;
          d["label"] = rec.label;
          d["site_id"] = rec.site_id;
          d["timeseries"] = rec.timeseries;
          out.append(d);
        }
        return out;
      },
      py::arg("n_subjects"), py::arg("rois"), py::arg("timepoints"), py::arg("effect"), py::arg("seed") = 1);

  m.def(
      "global_loss",
      [](const std::vector<double>& similarities, const std::vector<int>& match, double margin, double lambda) {
        LossConfig cfg;
        cfg.margin = margin;
        cfg.lambda_weight = lambda;
        const LossValue v = global_loss(similarities, as_flags(match), cfg);
        return py::make_tuple(v.loss, v.d_similarity);
      },
      py::arg("similarities"), py::arg("match"), py::arg("margin") = 0.6, py::arg("lambda_") = 0.35,
      "Returns (loss, d loss / d similarity).");
  m.def(
      "sample_pairs",
      [](const std::vector<int>& labels, const std::vector<std::string>& sites, std::size_t budget,
         std::uint64_t seed) {
        if (labels.size() != sites.size()) throw ValidationError("labels and sites differ in length");
        std::vector<GraphSignal> cohort(labels.size());
        std::vector<std::size_t> members(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
          cohort[i].subject_id = std::to_string(i);
          cohort[i].label = labels[i];
          cohort[i].site_id = sites[i];
          members[i] = i;
        }
        std::vector<std::tuple<std::size_t, std::size_t, bool, bool>> out;
        for (const auto& p : sample_pairs(cohort, members, budget, seed).pairs) {
          out.emplace_back(p.a, p.b, p.match, p.same_site);
        }
        return out;
      },
      py::arg("labels"), py::arg("sites"), py::arg("budget"), py::arg("seed") = 1,
      "Balanced pair sample as (a, b, match, same_site) tuples.");

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return roc_auc(scores, as_flags(labels)).auc;
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "knn_classify",
      [](const Matrix& distances, const std::vector<int>& labels, int k) { return knn_classify(distances, labels, k); },
      py::arg("distances"), py::arg("reference_labels"), py::arg("k") = 3);
  m.def("pca_euclidean_baseline", &pca_euclidean_baseline, py::arg("train"), py::arg("test"),
        py::arg("variance_keep") = 0.99);
  m.def(
      "permutation_test",
      [](const std::vector<double>& a, const std::vector<double>& b, int n_perm, std::uint64_t seed) {
        return permutation_test(a, b, n_perm, seed);
      },
      py::arg("a"), py::arg("b"), py::arg("n_perm") = 10000, py::arg("seed") = 1);

  py::class_<SiameseModel>(m, "Model")
      .def_static(
          "init",
          [](const Matrix& l_scaled, int input_features, const std::vector<int>& widths, int k_order,
             std::uint64_t seed) { return init_model(l_scaled, ModelSpec{input_features, widths, k_order}, seed); },
          py::arg("l_scaled"), py::arg("input_features"), py::arg("widths") = std::vector<int>{64, 64},
          py::arg("k_order") = 3, py::arg("seed") = 1)
      .def_property_readonly("num_nodes", &SiameseModel::num_nodes)
      .def_property_readonly("k_order", &SiameseModel::k_order)
      .def_property_readonly("parameter_count", &SiameseModel::parameter_count)
      .def_readwrite("fc_bias", &SiameseModel::fc_bias)
      .def_readwrite("fc_weights", &SiameseModel::fc_weights)
      .def_readonly("l_scaled", &SiameseModel::l_scaled)
      .def(
          "similarity",
          [](const SiameseModel& self, const Matrix& a, const Matrix& b, bool same_site) {
            return similarity(self, a, b, same_site);
          },
          py::arg("a"), py::arg("b"), py::arg("same_site") = false)
      .def(
          "embed", [](const SiameseModel& self, const Matrix& x) { return embed(self, x); }, py::arg("x"))
      .def(
          "save",
          [](const SiameseModel& self, const std::filesystem::path& path, const std::string& hash,
             std::uint64_t seed, int epoch) { save_checkpoint(path, Checkpoint{self, hash, seed, epoch}); },
          py::arg("path"), py::arg("graph_hash") = "", py::arg("seed") = 0, py::arg("epoch") = 0);
  m.def(
      "load_checkpoint", [](const std::filesystem::path& path) { return load_checkpoint(path).model; },
      py::arg("path"));

  m.def("run", &run_command, py::arg("command"), py::arg("workdir") = ".", py::arg("config") = py::none(),
        py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("distances") = py::none(),
        py::arg("column") = "learned_distance",
        "Runs a pipeline step (synth, preprocess, train, evaluate, baseline, permtest) in workdir.");
}
