// Python bindings for the fdi core library.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fdi/errors.hpp"
#include "fdi/records.hpp"
#include "fdi/report.hpp"

namespace py = pybind11;
using namespace fdi;

namespace {

py::dict dataset_dict(const Dataset& ds) {
    const std::size_t n = ds.size();
    const std::size_t c = n ? ds.samples[0].channels : 0;
    const std::size_t t = n ? ds.samples[0].length : 0;
    py::array_t<double> values({n, c, t});
    auto v = values.mutable_unchecked<3>();
    std::vector<std::string> ids;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = ds.samples[i];
        if (s.channels != c || s.length != t) throw ArgumentError("dataset samples differ in shape");
        for (std::size_t a = 0; a < c; ++a)
            for (std::size_t b = 0; b < t; ++b) v(i, a, b) = s.at(a, b);
        ids.push_back(s.id);
        labels.push_back(s.label);
    }
    py::dict d;
    d["ids"] = ids;
    d["labels"] = labels;
    d["channel_names"] = ds.channel_names;
    d["values"] = values;
    return d;
}

py::dict metrics_dict(const MetricReport& m) {
    py::dict d;
    d["accuracy"] = m.accuracy;
    d["precision"] = std::vector<std::optional<double>>(m.precision.begin(), m.precision.end());
    d["recall"] = std::vector<std::optional<double>>(m.recall.begin(), m.recall.end());
    return d;
}

py::dict result_dict(const ExperimentResult& r) {
    py::dict d;
    d["name"] = r.config.name;
    d["model"] = std::string(to_string(r.config.model));
    d["treatment"] = r.config.treatment();
    d["best_trial"] = r.best_trial;
    d["best_objective"] = r.best().objective;
    d["best_parameters"] = r.best().parameters;
    std::vector<double> objectives;
    std::vector<std::size_t> parameters;
    for (const auto& t : r.trials) {
        objectives.push_back(t.objective);
        parameters.push_back(t.parameters);
    }
    d["objectives"] = objectives;
    d["parameters"] = parameters;
    d["fold_mounted_precision"] = fold_values(r, MetricSelector::MountedPrecision);
    d["fold_jammed_recall"] = fold_values(r, MetricSelector::JammedRecall);
    d["test"] = metrics_dict(r.test.metrics);
    d["test_ids"] = r.test_ids;
    d["fold_fingerprint"] = r.fold_fingerprint;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Failure detection and isolation for screw assembly time series";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<DegenerateInputError>(m, "DegenerateInputError", PyExc_ValueError);
    py::register_exception<IngestionError>(m, "IngestionError", PyExc_OSError);

    m.def(
        "simulate",
        [](std::array<std::size_t, 3> counts, std::size_t length, double noise, std::uint64_t seed,
           std::size_t corrupted) {
            SimulatorConfig cfg;
            cfg.counts = counts;
            cfg.length = length;
            cfg.noise = noise;
            cfg.seed = seed;
            cfg.corrupted = corrupted;
            cfg.validate();
            return dataset_dict(simulate(cfg));
        },
        py::arg("counts") = std::array<std::size_t, 3>{306, 112, 61}, py::arg("length") = 256,
        py::arg("noise") = 0.1, py::arg("seed") = 0, py::arg("corrupted") = 0,
        "Simulated dataset as a dict with ids, labels, channel_names and values [N, C, T].");

    m.def(
        "ingest",
        [](const std::filesystem::path& manifest) { return dataset_dict(ingest_csv(manifest)); },
        py::arg("manifest"));

    m.def(
        "class_weights", [](std::array<std::size_t, 3> counts) { return class_weights(counts); },
        py::arg("counts"));

    m.def(
        "confusion",
        [](const std::vector<int>& truth, const std::vector<int>& predicted) {
            return confusion(truth, predicted).counts;
        },
        py::arg("truth"), py::arg("predicted"), "3x3 counts, rows true class, columns predicted class.");

    m.def(
        "metrics",
        [](const std::vector<int>& truth, const std::vector<int>& predicted) {
            return metrics_dict(metrics(confusion(truth, predicted)));
        },
        py::arg("truth"), py::arg("predicted"), "Undefined precision or recall is None.");

    m.def(
        "paired_ttest",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const auto r = paired_ttest(a, b);
            py::dict d;
            d["t"] = r.t;
            d["df"] = r.degrees_of_freedom;
            d["p"] = r.p_value;
            d["mean_difference"] = r.mean_difference;
            return d;
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "parameter_count",
        [](const std::string& kind, std::uint64_t seed, std::size_t channels, std::size_t length) {
            const HyperParams hp = sample_hyperparams(parse_model_kind(kind), seed);
            return count_parameters(build_model(hp, {channels, length}, seed));
        },
        py::arg("kind"), py::arg("seed"), py::arg("channels") = 6, py::arg("length") = 64,
        "Parameter count of the configuration sampled for `seed`.");

    m.def(
        "run",
        [](const std::string& config_json, std::optional<std::uint64_t> seed, std::size_t jobs) {
            std::vector<ExperimentConfig> configs = parse_experiment_configs(config_json, seed);
            py::list out;
            for (const auto& cfg : configs) {
                OptimizeOptions opts;
                opts.jobs = jobs;
                ExperimentResult r;
                {
                    py::gil_scoped_release release;
                    r = optimize(cfg, opts);
                }
                out.append(result_dict(r));
            }
            return out;
        },
        py::arg("config_json"), py::arg("seed") = py::none(), py::arg("jobs") = 1,
        "Runs every experiment in a config (JSON text) in memory and returns one dict per experiment.");

    m.def(
        "load_result", [](const std::filesystem::path& dir) { return result_dict(load_result(dir)); },
        py::arg("dir"), "Reads an experiment directory written by `fdi run`.");
}
