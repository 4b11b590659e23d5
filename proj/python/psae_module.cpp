#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "psae/checkpoint.hpp"
#include "psae/error.hpp"
#include "psae/logit_lens.hpp"
#include "psae/ps_eval.hpp"
#include "psae/run_config.hpp"
#include "psae/shard.hpp"
#include "psae/synthetic.hpp"
#include "psae/trainer.hpp"

namespace py = pybind11;
using namespace psae;

namespace {

using F32Rows = py::array_t<float, py::array::c_style | py::array::forcecast>;

ActivationShard shard_from_array(const F32Rows& rows, const std::string& model_name,
                                 std::int64_t layer_index, const std::string& component) {
  if (rows.ndim() != 2) throw DimensionError("activations must be a 2-D array");
  ShardHeader h;
  h.model_name = model_name;
  h.layer_index = layer_index;
  h.component_kind = component_from_string(component);
  h.n_rows = static_cast<std::size_t>(rows.shape(0));
  h.d_model = static_cast<std::size_t>(rows.shape(1));
  std::vector<float> data(rows.data(), rows.data() + rows.size());
  return ActivationShard(std::move(h), std::move(data));
}

py::array_t<float> shard_array(const ActivationShard& s) {
  py::array_t<float> out({s.rows(), s.cols()});
  std::copy(s.data().begin(), s.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["tp"] = m.counts.tp;
  d["fp"] = m.counts.fp;
  d["fn"] = m.counts.fn;
  d["tn"] = m.counts.tn;
  d["abstained"] = m.counts.abstained;
  d["accuracy"] = m.accuracy;
  d["recall"] = m.recall;
  d["precision"] = m.precision;
  d["specificity"] = m.specificity;
  d["sensitivity"] = m.sensitivity;
  d["s_f1"] = m.s_f1;
  d["d_f1"] = m.d_f1;
  d["average_f1"] = m.average_f1;
  return d;
}

}  // namespace

PYBIND11_MODULE(_psae, m) {
  m.doc() = "Sparse autoencoder training and polysemy evaluation";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<ShardHeader>(m, "ShardHeader")
      .def_readonly("model_name", &ShardHeader::model_name)
      .def_readonly("layer_index", &ShardHeader::layer_index)
      .def_property_readonly("component_kind",
                             [](const ShardHeader& h) { return to_string(h.component_kind); })
      .def_readonly("d_model", &ShardHeader::d_model)
      .def_readonly("n_rows", &ShardHeader::n_rows)
      .def_readonly("dtype", &ShardHeader::dtype);

  py::class_<ActivationShard>(m, "ActivationShard")
      .def(py::init(&shard_from_array), py::arg("rows"), py::arg("model_name") = "unknown",
           py::arg("layer_index") = 0, py::arg("component_kind") = "residual")
      .def_property_readonly("header", &ActivationShard::header)
      .def_property_readonly("rows", &shard_array)
      .def("__len__", &ActivationShard::rows);

  m.def("read_shard", &read_shard, py::arg("path"));
  m.def("write_shard", &write_shard, py::arg("path"), py::arg("shard"));

  py::class_<ActivationSpec>(m, "ActivationSpec")
      .def(py::init([](const std::string& label) { return ActivationSpec::parse_label(label); }),
           py::arg("label") = "relu")
      .def_property_readonly("kind", [](const ActivationSpec& a) { return to_string(a.kind); })
      .def_readwrite("k", &ActivationSpec::k)
      .def_readwrite("theta", &ActivationSpec::theta)
      .def_readwrite("ste_bandwidth", &ActivationSpec::ste_bandwidth)
      .def_property_readonly("label", &ActivationSpec::label);

  py::class_<SaeConfig>(m, "SaeConfig")
      .def(py::init<>())
      .def_readwrite("d_in", &SaeConfig::d_in)
      .def_readwrite("expand_ratio", &SaeConfig::expand_ratio)
      .def_readwrite("lambda_", &SaeConfig::lambda)
      .def_readwrite("activation", &SaeConfig::activation)
      .def_readwrite("alpha", &SaeConfig::alpha)
      .def_readwrite("k_aux", &SaeConfig::k_aux)
      .def_readwrite("dead_token_threshold", &SaeConfig::dead_token_threshold)
      .def_readwrite("dead_step_window", &SaeConfig::dead_step_window)
      .def_property_readonly("n_features", &SaeConfig::n_features);

  py::class_<SaeModel>(m, "SaeModel")
      .def_readonly("config", &SaeModel::config)
      .def_readwrite("w_enc", &SaeModel::w_enc)
      .def_readwrite("b_enc", &SaeModel::b_enc)
      .def_readwrite("w_dec", &SaeModel::w_dec)
      .def_readwrite("b_dec", &SaeModel::b_dec)
      .def_readwrite("theta", &SaeModel::theta)
      .def("encode", [](const SaeModel& s, const Vector& x) { return encode(s, x); })
      .def("decode", [](const SaeModel& s, const Vector& f) { return decode(s, f); })
      .def("forward", [](const SaeModel& s, const Matrix& batch) {
        auto out = forward(s, batch);
        return py::make_tuple(out.features, out.recon);
      });

  m.def("init_model", &init_model, py::arg("config"), py::arg("seed") = 0);
  m.def("read_checkpoint", &read_checkpoint, py::arg("path"));
  m.def("write_checkpoint", &write_checkpoint, py::arg("path"), py::arg("model"));
  m.def("l0_count", &l0_count, py::arg("features"));

  py::class_<TrainerConfig>(m, "TrainerConfig")
      .def(py::init<>())
      .def_static("desk_profile", &TrainerConfig::desk_profile)
      .def_static("full_profile", &TrainerConfig::full_profile)
      .def_readwrite("batch_size", &TrainerConfig::batch_size)
      .def_readwrite("total_steps", &TrainerConfig::total_steps)
      .def_readwrite("learning_rate", &TrainerConfig::learning_rate)
      .def_readwrite("adam_beta1", &TrainerConfig::adam_beta1)
      .def_readwrite("adam_beta2", &TrainerConfig::adam_beta2)
      .def_readwrite("adam_eps", &TrainerConfig::adam_eps)
      .def_readwrite("seed", &TrainerConfig::seed)
      .def_readwrite("log_every", &TrainerConfig::log_every);

  m.def(
      "train",
      [](const SaeModel& model, const std::vector<ActivationShard>& shards,
         const TrainerConfig& config) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(model, shards, config);
        }
        py::list log;
        for (const auto& row : r.log.rows) {
          py::dict d;
          d["step"] = row.step;
          d["mse"] = row.mse;
          d["l1"] = row.l1;
          d["l0"] = row.l0;
          d["l0_normalized"] = row.l0_normalized;
          d["dead_1000"] = row.dead_1000;
          d["aux"] = row.aux;
          log.append(d);
        }
        return py::make_tuple(r.model, log, r.log.to_csv());
      },
      py::arg("model"), py::arg("shards"), py::arg("config"),
      "Returns (trained model, list of log rows, log CSV text).");

  m.def(
      "generate_synthetic",
      [](std::size_t d_in, std::size_t n_true, double avg_active, std::size_t n_samples,
         std::uint64_t seed) {
        SyntheticSpec spec{d_in, n_true, avg_active, n_samples, seed, false};
        auto data = generate_synthetic(spec);
        return py::make_tuple(data.shard, data.dictionary);
      },
      py::arg("d_in"), py::arg("n_true_features"), py::arg("avg_active"), py::arg("n_samples"),
      py::arg("seed") = 0);
  m.def("mean_max_cosine", &mean_max_cosine, py::arg("true_dictionary"), py::arg("learned_decoder"));

  m.def("max_feature", &max_feature, py::arg("features"));
  m.def("cosine_distance", &cosine_distance, py::arg("a"), py::arg("b"));
  m.def(
      "compute_metrics",
      [](double tp, double fp, double fn, double tn) {
        return metrics_dict(compute_metrics({tp, fp, fn, tn, 0}));
      },
      py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));
  m.def(
      "random_baseline",
      [](std::size_t n_features, std::size_t n_pairs, std::size_t n_same) {
        const auto b = random_baseline(n_features, n_pairs, n_same);
        auto d = metrics_dict(b.metrics);
        d["p_same"] = b.p_same;
        d["p_diff"] = b.p_diff;
        return d;
      },
      py::arg("n_features"), py::arg("n_pairs"), py::arg("n_same"));
  m.def(
      "evaluate",
      [](const SaeModel& model, const ActivationShard& eval_shard,
         const std::filesystem::path& eval_set_path) {
        const auto set = read_eval_set(eval_set_path, eval_shard.rows());
        const auto report = compute_metrics(evaluate_pairs(model, eval_shard, set.pairs));
        const auto dist = polysemous_distinction(model, eval_shard, set.pairs);
        auto d = metrics_dict(report);
        d["distinction_llm_mean"] = dist.llm_mean;
        d["distinction_sae_mean"] = dist.sae_mean;
        return d;
      },
      py::arg("model"), py::arg("eval_shard"), py::arg("eval_set_path"),
      "PS-Eval confusion counts and metrics for a JSON-lines evaluation set.");

  m.def(
      "lens",
      [](const SaeModel& model, const ActivationShard& unembedding,
         const std::vector<std::string>& tokens, const Vector& x, std::size_t top_k) {
        std::vector<std::pair<std::size_t, std::string>> entries;
        for (std::size_t i = 0; i < tokens.size(); ++i) entries.emplace_back(i, tokens[i]);
        const auto r = lens(model, unembedding, VocabTable(std::move(entries)), x, top_k);
        py::list out;
        for (const auto& e : r.entries) out.append(py::make_tuple(e.token_id, e.token, e.logit));
        return py::make_tuple(r.feature_index, out);
      },
      py::arg("model"), py::arg("unembedding"), py::arg("tokens"), py::arg("x"), py::arg("top_k") = 7,
      "Returns (max feature index, [(token_id, token, logit), ...]).");
}
