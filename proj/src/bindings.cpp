#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fedefc/datagen.hpp"
#include "fedefc/fed.hpp"
#include "fedefc/harness.hpp"
#include "fedefc/label_noise.hpp"
#include "fedefc/loss_correction.hpp"
#include "fedefc/nn.hpp"
#include "fedefc/noise_estimation.hpp"

namespace py = pybind11;
using namespace fedefc;

namespace {

using Nested = std::vector<std::vector<double>>;

Nested to_nested(const SquareMatrix<double>& m) {
  Nested out(m.size(), std::vector<double>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) out[i][j] = m(i, j);
  return out;
}

TransitionMatrix to_transition(const Nested& rows) {
  TransitionMatrix m(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw std::invalid_argument("matrix must be square");
    for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

CountMatrix to_counts(const std::vector<std::vector<std::int64_t>>& rows) {
  CountMatrix m(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw std::invalid_argument("matrix must be square");
    for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

std::vector<std::vector<std::int64_t>> from_counts(const CountMatrix& m) {
  std::vector<std::vector<std::int64_t>> out(m.size(), std::vector<std::int64_t>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) out[i][j] = m(i, j);
  return out;
}

RowMatrix to_rows(const Nested& rows) {
  if (rows.empty()) return {};
  RowMatrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw std::invalid_argument("ragged probability table");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

py::dict summary_dict(const harness::Summary& s) {
  py::dict d;
  d["method"] = s.method;
  d["seed"] = s.seed;
  d["rounds"] = s.rounds;
  d["final_test_acc"] = s.final_test_acc;
  d["best_test_acc"] = s.best_test_acc;
  d["prestop_round"] = s.prestop_round;
  d["prestop_A_t"] = s.prestop_a_t;
  d["mean_cos_sim_phase2"] = s.mean_cos_sim_phase2;
  d["singular_estimates"] = s.singular_estimates;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated learning with prestopping and forward loss correction";

  py::class_<nn::ModelSpec>(m, "ModelSpec")
      .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t classes) {
             nn::ModelSpec s{input_dim, std::move(hidden), classes, nn::Activation::relu};
             s.validate();
             return s;
           }),
           py::arg("input_dim"), py::arg("hidden_dims"), py::arg("num_classes"))
      .def_readonly("input_dim", &nn::ModelSpec::input_dim)
      .def_readonly("hidden_dims", &nn::ModelSpec::hidden_dims)
      .def_readonly("num_classes", &nn::ModelSpec::num_classes)
      .def("param_count", &nn::ModelSpec::param_count);

  py::class_<nn::ModelParams>(m, "ModelParams")
      .def(py::init([](nn::ModelSpec spec, std::vector<double> values) {
             if (values.size() != spec.param_count()) throw std::invalid_argument("length does not match spec");
             return nn::ModelParams{std::move(spec), std::move(values)};
           }),
           py::arg("spec"), py::arg("values"))
      .def_readonly("spec", &nn::ModelParams::spec)
      .def_readwrite("values", &nn::ModelParams::values)
      .def("__len__", &nn::ModelParams::size);

  m.def("init_params", &nn::init_params, py::arg("spec"), py::arg("seed"));
  m.def("forward", [](const nn::ModelParams& p, std::vector<double> x) { return nn::forward(p, x); },
        py::arg("params"), py::arg("x"));
  m.def("softmax", [](std::vector<double> z) { return nn::softmax(z); }, py::arg("logits"));
  m.def("weighted_average",
        [](std::vector<nn::ModelParams> ps, std::vector<double> w) { return nn::weighted_average(ps, w); },
        py::arg("params"), py::arg("weights"));
  m.def("loss_and_grad",
        [](const nn::ModelParams& p, std::vector<double> features, std::vector<int> labels,
           std::optional<Nested> transition) {
          const nn::Batch batch{features, labels};
          if (transition) {
            const correction::ForwardCorrectedLoss loss(to_transition(*transition));
            auto r = nn::loss_and_grad(p, batch, loss);
            return py::make_tuple(r.loss, r.grad);
          }
          auto r = nn::loss_and_grad(p, batch, nn::CrossEntropyLoss{});
          return py::make_tuple(r.loss, r.grad);
        },
        py::arg("params"), py::arg("features"), py::arg("labels"), py::arg("transition") = py::none(),
        "Mean loss and gradient over a row-major batch; pass a transition matrix for the corrected loss.");

  m.def("build_true_transition",
        [](double rho, double zeta, std::uint64_t seed, std::size_t classes) {
          return to_nested(noise::build_true_transition({rho, zeta, seed}, classes));
        },
        py::arg("rho"), py::arg("zeta"), py::arg("seed"), py::arg("num_classes"));
  m.def("flip_target_count", &noise::flip_target_count, py::arg("zeta"), py::arg("num_classes"));
  m.def("gaussian_mixture_noisy_labels",
        [](std::size_t classes, std::size_t dim, std::size_t per_class, double separation,
           std::uint64_t seed, const Nested& transition, std::uint64_t noise_seed) {
          auto ds = data::gen_gaussian_mixture(classes, dim, per_class, separation, seed);
          ds = noise::apply_noise(std::move(ds), to_transition(transition), noise_seed);
          return py::make_tuple(ds.clean_labels, ds.observed_labels);
        },
        py::arg("num_classes"), py::arg("dim"), py::arg("per_class"), py::arg("separation"),
        py::arg("seed"), py::arg("transition"), py::arg("noise_seed"),
        "Generate a mixture, corrupt it with `transition`, and return (clean, observed) labels.");
  m.def("realized_flip_rate",
        [](std::vector<int> clean, std::vector<int> observed, std::size_t classes) {
          return noise::realized_stats(clean, observed, classes).flip_rate;
        },
        py::arg("clean"), py::arg("observed"), py::arg("num_classes"));
  m.def("partition_indices",
        [](std::vector<int> labels, std::size_t classes, std::size_t clients, double alpha, double p,
           std::uint64_t seed) {
          data::Dataset ds;
          ds.features = RowMatrix(labels.size(), 1);
          ds.clean_labels = labels;
          ds.observed_labels = labels;
          ds.num_classes = classes;
          return data::partition(ds, {clients, alpha, p, seed}).assignments;
        },
        py::arg("labels"), py::arg("num_classes"), py::arg("num_clients"), py::arg("alpha_dir"),
        py::arg("p"), py::arg("seed"), "Index sets per client for the given label vector.");

  m.def("class_thresholds",
        [](const Nested& probs, std::vector<int> observed) {
          auto t = estimation::class_thresholds(to_rows(probs), observed);
          std::vector<std::optional<double>> out(t.tau.size());
          for (std::size_t j = 0; j < out.size(); ++j) if (t.defined[j]) out[j] = t.tau[j];
          return out;
        },
        py::arg("probs"), py::arg("observed"));
  m.def("count_matrix",
        [](const Nested& probs, std::vector<int> observed) {
          const auto table = to_rows(probs);
          return from_counts(estimation::count_matrix(
              table, observed, estimation::class_thresholds(table, observed)));
        },
        py::arg("probs"), py::arg("observed"));
  m.def("transition_from_counts",
        [](const std::vector<std::vector<std::int64_t>>& c) {
          return to_nested(estimation::transition_from_counts(to_counts(c)));
        },
        py::arg("counts"));
  m.def("weighted_transition",
        [](const std::vector<std::vector<std::int64_t>>& c, std::vector<double> priors) {
          return to_nested(estimation::weighted_transition(to_counts(c), priors));
        },
        py::arg("counts"), py::arg("priors"));
  m.def("percentile_transition",
        [](const Nested& probs, double pct) {
          return to_nested(estimation::percentile_transition(to_rows(probs), pct));
        },
        py::arg("probs"), py::arg("percentile") = 97.0);
  m.def("cosine_similarity",
        [](const Nested& a, const Nested& b) {
          return estimation::cosine_similarity(to_transition(a), to_transition(b));
        },
        py::arg("a"), py::arg("b"));

  m.def("corrected_probs",
        [](const Nested& q, std::vector<double> p) { return correction::corrected_probs(to_transition(q), p); },
        py::arg("transition"), py::arg("clean_probs"));
  m.def("forward_loss",
        [](const Nested& q, std::vector<double> p, std::size_t label, double eps) {
          return correction::ForwardCorrectedLoss(to_transition(q), eps).forward_loss(p, label);
        },
        py::arg("transition"), py::arg("clean_probs"), py::arg("observed_label"),
        py::arg("epsilon_clip") = correction::kDefaultEpsilonClip);
  m.def("forward_loss_grad",
        [](const Nested& q, std::vector<double> logits, std::size_t label, double eps) {
          return correction::ForwardCorrectedLoss(to_transition(q), eps).forward_loss_grad(logits, label);
        },
        py::arg("transition"), py::arg("logits"), py::arg("observed_label"),
        py::arg("epsilon_clip") = correction::kDefaultEpsilonClip);

  py::class_<fed::PrestopMonitor>(m, "PrestopMonitor")
      .def(py::init<int, int>(), py::arg("gamma_thr"), py::arg("warmup_rounds") = 0)
      .def("step",
           [](fed::PrestopMonitor& mon, double a_t, int t) -> std::optional<int> {
             const auto d = mon.step(a_t, t);
             if (d.triggered) return d.prestop_round;
             return std::nullopt;
           },
           py::arg("a_t"), py::arg("t"), "Returns the prestopping round when this step fires, else None.")
      .def_property_readonly("a_max", &fed::PrestopMonitor::a_max)
      .def_property_readonly("patience", &fed::PrestopMonitor::patience)
      .def_property_readonly("triggered", &fed::PrestopMonitor::triggered);
  m.def("estimate_accuracy", [](std::vector<double> a) { return fed::estimate_accuracy(a); },
        py::arg("accuracies"));

  py::class_<harness::ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("rounds", &harness::ExperimentConfig::rounds)
      .def_readwrite("num_clients", &harness::ExperimentConfig::num_clients)
      .def_readwrite("client_fraction", &harness::ExperimentConfig::client_fraction)
      .def_readwrite("local_epochs", &harness::ExperimentConfig::local_epochs)
      .def_readwrite("per_class", &harness::ExperimentConfig::per_class)
      .def_readwrite("rho", &harness::ExperimentConfig::rho)
      .def_readwrite("zeta", &harness::ExperimentConfig::zeta)
      .def_readwrite("seed", &harness::ExperimentConfig::seed)
      .def_readwrite("workers", &harness::ExperimentConfig::workers)
      .def_property_readonly("method",
                             [](const harness::ExperimentConfig& c) { return harness::to_string(c.method); });
  m.def("parse_config_text", &harness::parse_config_text, py::arg("text"));
  m.def("parse_config", [](const std::filesystem::path& p) { return harness::parse_config(p); },
        py::arg("path"));
  m.def("run_experiment",
        [](const harness::ExperimentConfig& cfg, std::optional<std::filesystem::path> out) {
          harness::ExperimentRun run;
          {
            py::gil_scoped_release release;
            run = harness::run_experiment(cfg, out);
          }
          py::list rows;
          for (const auto& r : run.table.records) {
            py::dict d;
            d["round"] = r.round;
            d["phase"] = fed::to_string(r.phase);
            d["A_t"] = r.a_t;
            d["tau_p"] = r.tau_p;
            d["test_acc"] = r.test_accuracy;
            d["cos_sim"] = r.cos_sim;
            rows.append(d);
          }
          return py::make_tuple(rows, summary_dict(run.table.summary));
        },
        py::arg("config"), py::arg("csv_out") = py::none(),
        "Run one experiment; returns (round records, summary).");
  m.def("compare_report",
        [](std::vector<std::filesystem::path> paths) {
          py::list out;
          for (const auto& r : harness::compare_report(paths)) {
            out.append(py::make_tuple(r.method, r.trials, r.mean, r.std));
          }
          return out;
        },
        py::arg("csv_paths"));

  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<harness::SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<estimation::EmptyCountMatrixError>(m, "EmptyCountMatrixError", PyExc_ValueError);

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
