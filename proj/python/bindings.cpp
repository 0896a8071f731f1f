// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations: corpus generation, training,
// scoring/planning, pruning, and evaluation. The extension wraps the model as
// an opaque handle; numerical work stays in C++.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mucrasp/allocator.hpp"
#include "mucrasp/attribution.hpp"
#include "mucrasp/checkpoint.hpp"
#include "mucrasp/common.hpp"
#include "mucrasp/corpus.hpp"
#include "mucrasp/evaluation.hpp"
#include "mucrasp/model.hpp"
#include "mucrasp/pivots.hpp"
#include "mucrasp/serialize.hpp"
#include "mucrasp/tokenizer.hpp"
#include "mucrasp/train.hpp"
#include "mucrasp/units.hpp"

namespace py = pybind11;
using namespace mucrasp;

namespace {

struct PyModel {
  ModelConfig cfg;
  ModelWeights w;
};

struct PyPlan {
  PruningPlan plan;
};

PruningConfig make_config(double ratio, const std::string& mode,
                          const std::string& pivot, bool cmds,
                          const std::string& allocation, int window,
                          double gamma_base, double rho, int min_markers,
                          bool attn_qo_only, uint64_t seed, int jobs) {
  PruningConfig c;
  c.S = ratio;
  c.scoring = scoring_from_name(mode);
  c.pivot_mode = pivot_mode_from_name(pivot);
  c.cmds_enabled = cmds;
  c.allocation = allocation_from_name(allocation);
  c.half_width = window;
  c.gamma_base = gamma_base;
  c.rho = rho;
  c.min_markers = min_markers;
  c.attn_qo_only = attn_qo_only;
  c.seed = seed;
  c.jobs = jobs;
  c.validate();
  return c;
}

py::dict unit_to_dict(const StructuralUnit& u) {
  py::dict d;
  d["kind"] = unit_kind_name(u.kind);
  d["layer"] = u.layer;
  d["index"] = u.index;
  d["cost"] = u.cost;
  return d;
}

}  // namespace

PYBIND11_MODULE(_mucrasp, m) {
  m.doc() = "Structured pruning for a toy multimodal decoder transformer";

  py::register_exception<MucraspError>(m, "MucraspError", PyExc_ValueError);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def_readonly("n_layers", &ModelConfig::n_layers)
      .def_readonly("d_model", &ModelConfig::d_model)
      .def_readonly("n_q_heads", &ModelConfig::n_q_heads)
      .def_readonly("n_kv_groups", &ModelConfig::n_kv_groups)
      .def_readonly("head_dim", &ModelConfig::head_dim)
      .def_readonly("d_mlp", &ModelConfig::d_mlp)
      .def_readonly("vocab_size", &ModelConfig::vocab_size)
      .def_readonly("max_seq", &ModelConfig::max_seq)
      .def_readonly("n_vision_tokens", &ModelConfig::n_vision_tokens)
      .def_readonly("layer_kv_groups", &ModelConfig::layer_kv_groups)
      .def_readonly("layer_d_mlp", &ModelConfig::layer_d_mlp)
      .def("to_json", [](const ModelConfig& c) { return config_to_json(c); })
      .def("__repr__", [](const ModelConfig& c) {
        return "<ModelConfig layers=" + std::to_string(c.n_layers) +
               " d_model=" + std::to_string(c.d_model) + ">";
      });

  py::class_<Corpus>(m, "Corpus")
      .def_readonly("seed", &Corpus::seed)
      .def("__len__", [](const Corpus& c) { return c.samples.size(); })
      .def("prompt", [](const Corpus& c, size_t i) {
        return c.samples.at(i).prompt_text;
      })
      .def("response", [](const Corpus& c, size_t i) {
        return c.samples.at(i).response_text;
      })
      .def("save", [](const Corpus& c, const std::string& path) {
        save_corpus(c, path);
      });

  py::class_<PyModel>(m, "Model")
      .def_property_readonly("config",
                             [](const PyModel& s) { return s.cfg; })
      .def("total_params",
           [](const PyModel& s) { return total_params(s.cfg); })
      .def("save", [](const PyModel& s, const std::string& path) {
        save_checkpoint(path, s.cfg, s.w);
      });

  py::class_<PyPlan>(m, "Plan")
      .def_property_readonly(
          "budget", [](const PyPlan& s) { return s.plan.budget; })
      .def_property_readonly(
          "kept_params", [](const PyPlan& s) { return s.plan.kept_params; })
      .def_property_readonly(
          "prunable_params",
          [](const PyPlan& s) { return s.plan.prunable_params_total; })
      .def_property_readonly(
          "fallback_used",
          [](const PyPlan& s) { return s.plan.fallback_used; })
      .def_property_readonly("kept",
                             [](const PyPlan& s) { return s.plan.kept; })
      .def("units",
           [](const PyPlan& s) {
             py::list out;
             for (const StructuralUnit& u : s.plan.units)
               out.append(unit_to_dict(u));
             return out;
           })
      .def("to_json", [](const PyPlan& s) { return plan_to_json(s.plan); })
      .def_static("from_json", [](const std::string& text) {
        return PyPlan{plan_from_json(text)};
      });

  m.def("toy_config", &ModelConfig::toy_default,
        "Default toy architecture description");

  m.def(
      "generate_corpus",
      [](uint64_t seed, int n, const ModelConfig* cfg) {
        return generate_synthetic_corpus(
            seed, n, cfg ? *cfg : ModelConfig::toy_default());
      },
      py::arg("seed") = 42, py::arg("n") = 128, py::arg("config") = nullptr,
      "Deterministic synthetic calibration corpus");

  m.def("load_corpus", &load_corpus, py::arg("path"));

  m.def(
      "init_model",
      [](const ModelConfig* cfg, uint64_t seed) {
        ModelConfig c = cfg ? *cfg : ModelConfig::toy_default();
        c.validate();
        return PyModel{c, init_weights(c, seed)};
      },
      py::arg("config") = nullptr, py::arg("seed") = 42);

  m.def(
      "load_model",
      [](const std::string& path) {
        auto [cfg, w] = load_checkpoint(path);
        return PyModel{std::move(cfg), std::move(w)};
      },
      py::arg("path"));

  m.def(
      "train",
      [](PyModel& model, const Corpus& corpus, int steps, double lr,
         int batch_size, uint64_t seed) {
        TrainOptions opts;
        opts.steps = steps;
        opts.lr = lr;
        opts.batch_size = batch_size;
        opts.seed = seed;
        const TrainStats stats = train(model.w, model.cfg, corpus, opts);
        py::dict d;
        d["initial_perplexity"] = stats.initial_perplexity;
        d["final_perplexity"] = stats.final_perplexity;
        d["step_losses"] = stats.step_losses;
        d["moving_average"] = stats.moving_average;
        return d;
      },
      py::arg("model"), py::arg("corpus"), py::arg("steps") = 500,
      py::arg("lr") = 0.5, py::arg("batch_size") = 2, py::arg("seed") = 42);

  m.def("tokenize", [](const std::string& text) {
    return tok::tokenize(text).ids;
  });
  m.def("detokenize", [](const std::vector<int>& ids) {
    return tok::detokenize(ids);
  });

  m.def(
      "detect_pivots",
      [](const std::string& response_text, int half_width, int min_markers) {
        const tok::Tokenized t = tok::tokenize(response_text);
        const PivotMask mask =
            detect_pivots(response_text, t.char_to_token, half_width,
                          min_markers);
        py::dict d;
        d["pivot_indices"] = mask.pivot_indices;
        d["window"] = mask.window;
        d["source"] = mask.source == PivotSource::markers
                          ? "markers"
                          : mask.source == PivotSource::fallback_thirds
                                ? "fallback_thirds"
                                : "random";
        return d;
      },
      py::arg("response_text"), py::arg("half_width") = 8,
      py::arg("min_markers") = 2,
      "Pivot positions within a response, token-indexed from its start");

  m.def(
      "enumerate_units",
      [](const PyModel& model) {
        py::list out;
        for (const StructuralUnit& u : enumerate_units(model.cfg))
          out.append(unit_to_dict(u));
        return out;
      },
      py::arg("model"));

  m.def(
      "build_plan",
      [](const PyModel& model, const Corpus& corpus, double ratio,
         const std::string& mode, const std::string& pivot, bool cmds,
         const std::string& allocation, int window, double gamma_base,
         double rho, int min_markers, bool attn_qo_only, uint64_t seed,
         int jobs) {
        const PruningConfig c =
            make_config(ratio, mode, pivot, cmds, allocation, window,
                        gamma_base, rho, min_markers, attn_qo_only, seed, jobs);
        return PyPlan{build_plan(model.w, model.cfg, corpus, c)};
      },
      py::arg("model"), py::arg("corpus"), py::arg("ratio"),
      py::arg("mode") = "mucrasp", py::arg("pivot") = "real",
      py::arg("cmds") = true, py::arg("allocation") = "global",
      py::arg("window") = 8, py::arg("gamma_base") = 0.4, py::arg("rho") = 2.0,
      py::arg("min_markers") = 2, py::arg("attn_qo_only") = false,
      py::arg("seed") = 42, py::arg("jobs") = 1);

  m.def(
      "apply_prune",
      [](const PyModel& model, const PyPlan& plan) {
        auto [cfg, w] = apply_prune(model.cfg, model.w, plan_keep_set(plan.plan));
        return PyModel{std::move(cfg), std::move(w)};
      },
      py::arg("model"), py::arg("plan"));

  m.def(
      "perplexity",
      [](const PyModel& model, const Corpus& corpus, int jobs) {
        return perplexity(model.w, model.cfg, corpus, jobs);
      },
      py::arg("model"), py::arg("corpus"), py::arg("jobs") = 1);

  m.def(
      "mean_kl",
      [](const PyModel& dense, const PyModel& pruned, const Corpus& corpus,
         int jobs) {
        return kl_report(dense.w, dense.cfg, pruned.w, pruned.cfg, corpus, jobs)
            .mean_kl;
      },
      py::arg("dense"), py::arg("pruned"), py::arg("corpus"),
      py::arg("jobs") = 1,
      "Mean per-position KL(dense || pruned) over masked response positions");
}
