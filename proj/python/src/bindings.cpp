#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "attnlab/cli.hpp"
#include "attnlab/corpus.hpp"
#include "attnlab/error.hpp"
#include "attnlab/metrics.hpp"
#include "attnlab/nn.hpp"
#include "attnlab/trainer.hpp"
#include "attnlab/tuner.hpp"

namespace py = pybind11;
using namespace attnlab;

namespace {

PredictionSet prediction_set(const Matrix& probs, const Matrix& truths, double threshold) {
  return PredictionSet{probs, truths, threshold};
}

}  // namespace

PYBIND11_MODULE(_attnlab, m) {
  m.doc() = "CNN / CAML multi-label text classifiers";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<VocabularyMismatch>(m, "VocabularyMismatch", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());

  py::enum_<Arch>(m, "Arch").value("CNN", Arch::kCnn).value("CAML", Arch::kCaml);

  py::class_<Hyperparams>(m, "Hyperparams")
      .def(py::init([](int d_c, int k, double q, double eta) { return Hyperparams{d_c, k, q, eta}; }),
           py::arg("d_c") = 50, py::arg("k") = 10, py::arg("q") = 0.2, py::arg("eta") = 0.0001)
      .def_readwrite("d_c", &Hyperparams::d_c)
      .def_readwrite("k", &Hyperparams::k)
      .def_readwrite("q", &Hyperparams::q)
      .def_readwrite("eta", &Hyperparams::eta)
      .def("__eq__", [](const Hyperparams& a, const Hyperparams& b) { return a == b; })
      .def("__repr__", [](const Hyperparams& h) {
        std::ostringstream s;
        s << "Hyperparams(d_c=" << h.d_c << ", k=" << h.k << ", q=" << h.q << ", eta=" << h.eta << ")";
        return s.str();
      });

  py::class_<Document>(m, "Document")
      .def_readonly("id", &Document::id)
      .def_readonly("tokens", &Document::tokens)
      .def_readonly("labels", &Document::labels);

  py::class_<Corpus>(m, "Corpus")
      .def_readonly("docs", &Corpus::docs)
      .def_property_readonly("num_labels", &Corpus::num_labels)
      .def_property_readonly("vocab_size", [](const Corpus& c) { return c.vocab.size(); })
      .def_property_readonly("label_names", [](const Corpus& c) {
        const auto names = c.labels.names();
        return std::vector<std::string>(names.begin(), names.end());
      })
      .def("__len__", [](const Corpus& c) { return c.docs.size(); });

  m.def("load_corpus", py::overload_cast<const std::filesystem::path&, std::size_t>(&load_corpus),
        py::arg("path"), py::arg("max_tokens") = kDefaultMaxTokens);
  m.def(
      "load_corpus_like",
      [](const std::filesystem::path& path, const Corpus& train, std::size_t max_tokens) {
        return load_corpus(path, train.vocab, train.labels, max_tokens);
      },
      py::arg("path"), py::arg("train"), py::arg("max_tokens") = kDefaultMaxTokens,
      "Load a corpus with the vocabulary and label set of `train`.");
  m.def(
      "label_matrix", [](const std::vector<Document>& docs, std::size_t num_labels) { return label_matrix(docs, num_labels); },
      py::arg("docs"), py::arg("num_labels"));
  m.def(
      "label_matrix", [](const Corpus& c) { return label_matrix(c.docs, c.num_labels()); }, py::arg("corpus"));

  m.def(
      "micro_f1",
      [](const Matrix& p, const Matrix& t, double threshold) { return micro_f1(prediction_set(p, t, threshold)); },
      py::arg("probabilities"), py::arg("truths"), py::arg("threshold") = 0.5);
  m.def(
      "macro_f1",
      [](const Matrix& p, const Matrix& t, double threshold) {
        const MacroF1 r = macro_f1_both(prediction_set(p, t, threshold));
        return py::make_tuple(r.standard, r.of_means);
      },
      py::arg("probabilities"), py::arg("truths"), py::arg("threshold") = 0.5,
      "Returns (mean of per-class F1, F1 of macro precision and macro recall).");
  m.def(
      "precision_at_n",
      [](const Matrix& p, const Matrix& t, std::size_t n) { return precision_at_n(prediction_set(p, t, 0.5), n); },
      py::arg("probabilities"), py::arg("truths"), py::arg("n"));

  py::class_<ModelParams>(m, "Model")
      .def_property_readonly("arch", [](const ModelParams& p) { return p.arch; })
      .def_readonly("embedding", &ModelParams::embedding)
      .def_readonly("conv_weight", &ModelParams::conv_weight)
      .def_readonly("conv_bias", &ModelParams::conv_bias)
      .def_readonly("attention_u", &ModelParams::attention_u)
      .def_readonly("output_w", &ModelParams::output_w)
      .def_readonly("output_bias", &ModelParams::output_bias)
      .def("predict", py::overload_cast<const ModelParams&, const Corpus&>(&predict), py::arg("corpus"))
      .def("save", [](const ModelParams& p, const std::filesystem::path& path) { save_checkpoint(path, p); });
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "train",
      [](Arch arch, const Hyperparams& hp, const Corpus& train, const Corpus& valid, std::uint64_t seed,
         std::size_t max_epochs, std::size_t patience, std::size_t embed_dim) {
        TrainConfig config;
        config.seed = seed;
        config.max_epochs = max_epochs;
        config.patience = patience;
        config.validate();
        FitResult r;
        {
          py::gil_scoped_release release;
          Rng rng(seed);
          ModelParams model = build_model(arch, hp, train, {std::nullopt, embed_dim}, rng);
          r = fit(std::move(model), hp, train.docs, valid.docs, train.num_labels(), config, rng);
        }
        std::vector<double> scores;
        for (const auto& e : r.history) scores.push_back(e.valid_score);
        return py::make_tuple(round_to_float32(r.best), r.best_epoch, scores);
      },
      py::arg("arch"), py::arg("hyperparams"), py::arg("train"), py::arg("valid"), py::arg("seed") = 1337,
      py::arg("max_epochs") = 200, py::arg("patience") = 10, py::arg("embed_dim") = kDefaultEmbeddingDim,
      "Fit with early stopping; returns (best model, best epoch, validation P@5 per epoch).");

  m.def(
      "enumerate_grid",
      [](std::vector<int> d_c, std::vector<int> k, std::vector<double> q, std::vector<double> eta) {
        GridSpec spec;
        if (!d_c.empty()) spec.d_c_values = std::move(d_c);
        if (!k.empty()) spec.k_values = std::move(k);
        if (!q.empty()) spec.q_values = std::move(q);
        if (!eta.empty()) spec.eta_values = std::move(eta);
        return enumerate_grid(spec);
      },
      py::arg("d_c") = std::vector<int>{}, py::arg("k") = std::vector<int>{}, py::arg("q") = std::vector<double>{},
      py::arg("eta") = std::vector<double>{}, "Canonical grid order; empty lists keep the defaults.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run `attnlab <args>`; returns (exit code, stdout, stderr).");
}
