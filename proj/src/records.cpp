#include "fdi/records.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fdi/checkpoint.hpp"
#include "fdi/errors.hpp"
#include "fdi/rng.hpp"

namespace fdi {

using json = nlohmann::ordered_json;

namespace {

// Object reader that remembers its field path and rejects unknown keys.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& what) {
        throw ConfigError(path + ": " + what);
    }

    std::string at(const std::string& key) const { return path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return nullptr;
        return &*it;
    }

    const json& require(const std::string& key) {
        const json* v = get(key);
        if (!v) fail(at(key), "required field missing");
        return *v;
    }

    template <class T>
    void read(const std::string& key, T& out) {
        if (const json* v = get(key)) out = convert<T>(*v, at(key));
    }

    template <class T>
    void read(const std::string& key, std::optional<T>& out) {
        if (const json* v = get(key)) out = convert<T>(*v, at(key));
    }

    Obj child(const std::string& key) { return Obj(require(key), at(key)); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
    }

    template <class T>
    static T convert(const json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(path, "expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(path, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
                fail(path, "expected a non-negative integer");
            return static_cast<T>(v.get<std::uint64_t>());
        } else {
            if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity"))
                return std::numeric_limits<double>::infinity();
            if (!v.is_number()) fail(path, "expected a number");
            return v.get<double>();
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json number_or_inf(double v) { return std::isfinite(v) ? json(v) : json("inf"); }

IntDomain parse_domain(const json& v, const std::string& path) {
    if (v.is_number_integer()) return IntDomain::set({v.get<std::int64_t>()});
    Obj o(v, path);
    const json* range = o.get("range");
    const json* set = o.get("set");
    o.finish();
    if ((range != nullptr) == (set != nullptr)) Obj::fail(path, "give exactly one of range or set");
    std::vector<std::int64_t> values;
    const json& arr = range ? *range : *set;
    if (!arr.is_array()) Obj::fail(path, "expected an array of integers");
    for (const auto& e : arr) {
        if (!e.is_number_integer()) Obj::fail(path, "expected an array of integers");
        values.push_back(e.get<std::int64_t>());
    }
    if (range) {
        if (values.size() != 2 || values[0] > values[1]) Obj::fail(path + ".range", "expected [lo, hi] with lo <= hi");
        return IntDomain::range(values[0], values[1]);
    }
    if (values.empty()) Obj::fail(path + ".set", "empty set");
    return IntDomain::set(std::move(values));
}

json domain_json(const IntDomain& d) {
    if (!d.choices.empty()) return json{{"set", d.choices}};
    return json{{"range", {d.lo, d.hi}}};
}

SearchSpace parse_space(ModelKind kind, const json& v, const std::string& path) {
    SearchSpace s = SearchSpace::table(kind);
    Obj o(v, path);
    auto dom = [&](const char* key, IntDomain& out) {
        if (const json* e = o.get(key)) out = parse_domain(*e, o.at(key));
    };
    auto opt_dom = [&](const char* key, std::optional<IntDomain>& out) {
        if (const json* e = o.get(key)) {
            if (!out) Obj::fail(o.at(key), "not used by " + std::string(to_string(kind)));
            out = parse_domain(*e, o.at(key));
        }
    };
    dom("fc_layers", s.fc_layers);
    dom("fc_units", s.fc_units);
    o.read("dropout_max", s.dropout_max);
    if (const json* e = o.get("l2")) {
        if (!s.l2) Obj::fail(o.at("l2"), "not used by " + std::string(to_string(kind)));
        if (!e->is_array() || e->size() != 2 || !(*e)[0].is_number() || !(*e)[1].is_number())
            Obj::fail(o.at("l2"), "expected [lo, hi]");
        s.l2 = {{(*e)[0].get<double>(), (*e)[1].get<double>()}};
    }
    opt_dom("depth", s.depth);
    opt_dom("kernel", s.kernel);
    opt_dom("pool", s.pool);
    opt_dom("embedding", s.embedding);
    o.finish();
    try {
        s.validate();
    } catch (const ConfigError& e) {
        Obj::fail(path, e.what());
    }
    return s;
}

json space_json(const SearchSpace& s) {
    json j{{"fc_layers", domain_json(s.fc_layers)}, {"fc_units", domain_json(s.fc_units)}, {"dropout_max", s.dropout_max}};
    if (s.l2) j["l2"] = {s.l2->first, s.l2->second};
    if (s.depth) j["depth"] = domain_json(*s.depth);
    if (s.kernel) j["kernel"] = domain_json(*s.kernel);
    if (s.pool) j["pool"] = domain_json(*s.pool);
    if (s.embedding) j["embedding"] = domain_json(*s.embedding);
    return j;
}

SimulatorConfig parse_simulator(const json& v, const std::string& path) {
    SimulatorConfig c;
    Obj o(v, path);
    if (const json* counts = o.get("counts")) {
        if (!counts->is_array() || counts->size() != kNumClasses) Obj::fail(o.at("counts"), "expected three class counts");
        for (int i = 0; i < kNumClasses; ++i)
            c.counts[i] = Obj::convert<std::size_t>((*counts)[i], o.at("counts") + "[" + std::to_string(i) + "]");
    }
    o.read("length", c.length);
    o.read("noise", c.noise);
    o.read("ramp_peak", c.ramp_peak);
    o.read("plateau_level", c.plateau_level);
    o.read("spike_height", c.spike_height);
    o.read("spike_position", c.spike_position);
    o.read("corrupted", c.corrupted);
    o.read("seed", c.seed);
    o.finish();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        Obj::fail(path, e.what());
    }
    return c;
}

json simulator_json(const SimulatorConfig& c) {
    return json{{"counts", c.counts},           {"length", c.length},
                {"noise", c.noise},             {"ramp_peak", c.ramp_peak},
                {"plateau_level", c.plateau_level}, {"spike_height", c.spike_height},
                {"spike_position", c.spike_position}, {"corrupted", c.corrupted},
                {"seed", c.seed}};
}

struct Grid {
    std::vector<ModelKind> models;
    std::vector<std::string> treatments;
    std::vector<bool> rotation;
};

std::vector<ExperimentConfig> parse_configs(const json& root, std::optional<std::uint64_t> seed_override) {
    Obj o(root, "config");
    const json& version = o.require("schema_version");
    if (!version.is_number_integer() || version.get<int>() != kConfigSchemaVersion)
        Obj::fail("config.schema_version", "unsupported version (expected " + std::to_string(kConfigSchemaVersion) + ")");

    ExperimentConfig base;
    o.read("name", base.name);
    if (base.name.empty() || base.name.find_first_of("/\\") != std::string::npos)
        Obj::fail("config.name", "must be a non-empty name without path separators");
    o.read("seed", base.seed);
    if (seed_override) base.seed = *seed_override;

    {
        Obj d = o.child("data");
        std::optional<std::string> manifest;
        d.read("manifest", manifest);
        std::optional<json> sim_json;
        bool explicit_seed = false;
        if (const json* s = d.get("simulate")) {
            sim_json = *s;
            explicit_seed = s->is_object() && s->contains("seed");
        }
        d.finish();
        if (manifest.has_value() == sim_json.has_value())
            Obj::fail("config.data", "give exactly one of manifest or simulate");
        if (manifest) base.data.manifest = *manifest;
        if (sim_json) {
            base.data.simulator = parse_simulator(*sim_json, "config.data.simulate");
            if (!explicit_seed || seed_override) base.data.simulator->seed = derive_seed(base.seed, "data");
        }
    }

    if (o.has("preprocess")) {
        Obj p = o.child("preprocess");
        p.read("z_threshold", base.preprocess.z_threshold);
        p.read("target_length", base.preprocess.target_length);
        p.read("segments", base.preprocess.segments);
        p.read("include_rotation", base.preprocess.include_rotation);
        p.finish();
    } else {
        o.get("preprocess");
    }

    std::optional<std::string> treatment;
    o.read("treatment", treatment);
    std::optional<std::string> variant;
    std::optional<std::string> imbalance;
    o.read("variant", variant);
    o.read("imbalance", imbalance);
    o.read("variant_multiplier", base.variant.multiplier);
    if (treatment && (variant || imbalance)) Obj::fail("config.treatment", "give either treatment or variant/imbalance");
    try {
        if (treatment) apply_treatment(base, *treatment);
        if (variant) base.variant.variant = parse_variant(*variant);
        if (imbalance) {
            if (*imbalance == "none") base.imbalance = ImbalanceMode::None;
            else if (*imbalance == "class_weights") base.imbalance = ImbalanceMode::ClassWeights;
            else if (*imbalance == "smote") base.imbalance = ImbalanceMode::Smote;
            else Obj::fail("config.imbalance", "expected none, class_weights or smote");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        Obj::fail("config.variant", e.what());
    }

    std::optional<std::string> model;
    o.read("model", model);
    std::optional<json> spaces;
    if (const json* s = o.get("search_space")) spaces = *s;
    o.read("trials", base.trials);
    o.read("folds", base.folds);
    o.read("test_fraction", base.test_fraction);
    o.read("smote_k", base.smote_k);
    if (o.has("training")) {
        Obj t = o.child("training");
        t.read("epochs", base.training.epochs);
        t.read("batch_size", base.training.batch_size);
        t.read("learning_rate", base.training.learning_rate);
        t.finish();
    } else {
        o.get("training");
    }

    std::optional<Grid> grid;
    if (o.has("grid")) {
        Obj g = o.child("grid");
        Grid gr;
        auto strings = [&](const char* key, auto&& each) {
            const json* v = g.get(key);
            if (!v) return false;
            if (!v->is_array() || v->empty()) Obj::fail(g.at(key), "expected a non-empty array");
            for (std::size_t i = 0; i < v->size(); ++i) each((*v)[i], g.at(key) + "[" + std::to_string(i) + "]");
            return true;
        };
        if (!strings("models", [&](const json& e, const std::string& p) {
                try {
                    gr.models.push_back(parse_model_kind(Obj::convert<std::string>(e, p)));
                } catch (const ConfigError& err) {
                    Obj::fail(p, err.what());
                }
            }))
            gr.models.assign(std::begin(kAllModels), std::end(kAllModels));
        if (!strings("treatments", [&](const json& e, const std::string& p) {
                gr.treatments.push_back(Obj::convert<std::string>(e, p));
            }))
            gr.treatments = {"original", "CW", "balanced", "synthetic"};
        if (!strings("include_rotation", [&](const json& e, const std::string& p) {
                gr.rotation.push_back(Obj::convert<bool>(e, p));
            }))
            gr.rotation = {false, true};
        g.finish();
        grid = std::move(gr);
    } else {
        o.get("grid");
    }
    o.finish();

    auto finalize = [&](ExperimentConfig cfg, const std::string& path) {
        if (spaces) {
            Obj s(*spaces, "config.search_space");
            const std::string key(to_string(cfg.model));
            if (const json* v = s.get(key)) cfg.search_space = parse_space(cfg.model, *v, s.at(key));
            for (ModelKind k : kAllModels) s.get(std::string(to_string(k)));
            s.finish();
        }
        try {
            cfg.validate();
        } catch (const ConfigError& e) {
            Obj::fail(path, e.what());
        }
        return cfg;
    };

    std::vector<ExperimentConfig> out;
    if (!grid) {
        if (!model) Obj::fail("config.model", "required field missing");
        try {
            base.model = parse_model_kind(*model);
        } catch (const ConfigError& e) {
            Obj::fail("config.model", e.what());
        }
        out.push_back(finalize(base, "config"));
        return out;
    }
    if (model || treatment || variant || imbalance)
        Obj::fail("config.grid", "model and treatment come from the grid; remove them from the top level");
    for (bool rot : grid->rotation)
        for (ModelKind m : grid->models)
            for (const auto& t : grid->treatments) {
                ExperimentConfig cfg = base;
                cfg.model = m;
                cfg.preprocess.include_rotation = rot;
                try {
                    apply_treatment(cfg, t);
                } catch (const ConfigError& e) {
                    Obj::fail("config.grid.treatments", e.what());
                }
                cfg.name = base.name + "_" + std::string(to_string(m)) + "_" + t + (rot ? "_rot" : "_norot");
                out.push_back(finalize(cfg, "config.grid[" + cfg.name + "]"));
            }
    return out;
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + ": invalid JSON: " + e.what());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError(path.string(), 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

json hyperparams_json(const HyperParams& hp) {
    return json{{"kind", std::string(to_string(hp.kind))},
                {"fc_layers", hp.fc_layers},
                {"fc_units", hp.fc_units},
                {"dropout", hp.dropout},
                {"l2", opt_json(hp.l2)},
                {"depth", opt_json(hp.depth)},
                {"kernel", opt_json(hp.kernel)},
                {"pool", opt_json(hp.pool)},
                {"embedding", opt_json(hp.embedding)}};
}

HyperParams hyperparams_from(const json& j) {
    auto opt_size = [&](const char* key) -> std::optional<std::size_t> {
        if (j.at(key).is_null()) return std::nullopt;
        return j.at(key).get<std::size_t>();
    };
    HyperParams hp;
    hp.kind = parse_model_kind(j.at("kind").get<std::string>());
    hp.fc_layers = j.at("fc_layers").get<std::size_t>();
    hp.fc_units = j.at("fc_units").get<std::size_t>();
    hp.dropout = j.at("dropout").get<double>();
    if (!j.at("l2").is_null()) hp.l2 = j.at("l2").get<double>();
    hp.depth = opt_size("depth");
    hp.kernel = opt_size("kernel");
    hp.pool = opt_size("pool");
    hp.embedding = opt_size("embedding");
    return hp;
}

template <std::size_t N>
json optional_array(const std::array<std::optional<double>, N>& a) {
    json arr = json::array();
    for (const auto& v : a) arr.push_back(opt_json(v));
    return arr;
}

json fold_json(const FoldReport& f) {
    json cm = json::array();
    for (const auto& row : f.confusion.counts) cm.push_back(row);
    return json{{"confusion", cm},
                {"accuracy", opt_json(f.metrics.accuracy)},
                {"precision", optional_array(f.metrics.precision)},
                {"recall", optional_array(f.metrics.recall)}};
}

bool same(const std::optional<double>& a, const json& b) {
    if (!a) return b.is_null();
    return b.is_number() && b.get<double>() == *a;
}

FoldReport fold_from(const json& j) {
    FoldReport f;
    const json& cm = j.at("confusion");
    if (!cm.is_array() || cm.size() != kNumClasses) throw std::runtime_error("confusion must be 3x3");
    for (int r = 0; r < kNumClasses; ++r) {
        if (!cm[r].is_array() || cm[r].size() != kNumClasses) throw std::runtime_error("confusion must be 3x3");
        for (int c = 0; c < kNumClasses; ++c) f.confusion.counts[r][c] = cm[r][c].get<std::size_t>();
    }
    f.metrics = metrics(f.confusion);
    bool ok = same(f.metrics.accuracy, j.at("accuracy"));
    for (int c = 0; c < kNumClasses; ++c)
        ok = ok && same(f.metrics.precision[c], j.at("precision").at(c)) && same(f.metrics.recall[c], j.at("recall").at(c));
    if (!ok) throw std::runtime_error("stored metrics disagree with the confusion matrix");
    return f;
}

json counts_json(const ClassCounts& c) { return json(c); }

}  // namespace

std::vector<ExperimentConfig> parse_experiment_configs(const std::string& text) {
    return parse_configs(parse_json(text, "config"), std::nullopt);
}

std::vector<ExperimentConfig> load_experiment_configs(const std::filesystem::path& path,
                                                      std::optional<std::uint64_t> seed) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto cfgs = parse_experiment_configs(ss.str(), seed);
    for (auto& c : cfgs)
        if (c.data.manifest && c.data.manifest->is_relative())
            c.data.manifest = std::filesystem::absolute(path).parent_path() / *c.data.manifest;
    return cfgs;
}

std::vector<ExperimentConfig> parse_experiment_configs(const std::string& text, std::optional<std::uint64_t> seed) {
    return parse_configs(parse_json(text, "config"), seed);
}

SimulatorConfig parse_simulator_config(const std::string& text) {
    const json root = parse_json(text, "config");
    if (!root.is_object()) Obj::fail("config", "expected an object");
    if (root.contains("simulate")) {
        Obj o(root, "config");
        const json& version = o.require("schema_version");
        if (!version.is_number_integer() || version.get<int>() != kConfigSchemaVersion)
            Obj::fail("config.schema_version", "unsupported version");
        SimulatorConfig c = parse_simulator(o.require("simulate"), "config.simulate");
        o.finish();
        return c;
    }
    const auto cfgs = parse_configs(root, std::nullopt);
    if (!cfgs.front().data.simulator) Obj::fail("config.data", "gen-data needs a simulate section");
    return *cfgs.front().data.simulator;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json data;
    if (cfg.data.manifest) data["manifest"] = cfg.data.manifest->string();
    if (cfg.data.simulator) data["simulate"] = simulator_json(*cfg.data.simulator);
    json pre{{"z_threshold", number_or_inf(cfg.preprocess.z_threshold)},
             {"segments", cfg.preprocess.segments},
             {"include_rotation", cfg.preprocess.include_rotation}};
    if (cfg.preprocess.target_length) pre["target_length"] = *cfg.preprocess.target_length;
    json j{{"schema_version", kConfigSchemaVersion},
           {"name", cfg.name},
           {"seed", cfg.seed},
           {"data", data},
           {"preprocess", pre},
           {"variant", std::string(to_string(cfg.variant.variant))},
           {"variant_multiplier", cfg.variant.multiplier},
           {"imbalance", std::string(to_string(cfg.imbalance))},
           {"model", std::string(to_string(cfg.model))},
           {"search_space", {{std::string(to_string(cfg.model)), space_json(cfg.effective_search_space())}}},
           {"trials", cfg.trials},
           {"folds", cfg.folds},
           {"test_fraction", cfg.test_fraction},
           {"smote_k", cfg.smote_k},
           {"training",
            {{"epochs", cfg.training.epochs},
             {"batch_size", cfg.training.batch_size},
             {"learning_rate", cfg.training.learning_rate}}}};
    return j.dump(2);
}

std::string trial_to_json_line(const TrialRecord& r) {
    json folds = json::array();
    for (const auto& f : r.folds) folds.push_back(fold_json(f));
    json j{{"schema", kTrialSchema},
           {"index", r.index},
           {"seed", r.seed},
           {"hyperparams", hyperparams_json(r.hyperparams)},
           {"folds", folds},
           {"objective", r.objective},
           {"parameters", r.parameters},
           {"duration_s", r.duration_s},
           {"failed", r.failed},
           {"error", r.error}};
    return j.dump();
}

TrialRecord trial_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    if (j.at("schema").get<std::string>() != kTrialSchema)
        throw std::runtime_error("unsupported trial schema " + j.at("schema").get<std::string>());
    TrialRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.hyperparams = hyperparams_from(j.at("hyperparams"));
    for (const auto& f : j.at("folds")) r.folds.push_back(fold_from(f));
    r.objective = j.at("objective").get<double>();
    r.parameters = j.at("parameters").get<std::size_t>();
    r.duration_s = j.at("duration_s").get<double>();
    r.failed = j.at("failed").get<bool>();
    r.error = j.at("error").get<std::string>();
    if (!r.failed) {
        std::vector<MetricReport> reports;
        for (const auto& f : r.folds) reports.push_back(f.metrics);
        if (objective(reports) != r.objective) throw std::runtime_error("objective disagrees with the fold reports");
    }
    return r;
}

TrialLog::TrialLog(const std::filesystem::path& path) : path_(path) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot open " + path_.string() + " for appending");
}

void TrialLog::append(const TrialRecord& r) {
    std::ofstream out(path_, std::ios::app);
    out << trial_to_json_line(r) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path_.string());
}

void write_summary(const ExperimentResult& result, const std::filesystem::path& dir) {
    json j{{"schema", kSummarySchema},
           {"config", json::parse(config_to_json(result.config))},
           {"trial_count", result.trials.size()},
           {"best_trial", result.best_trial},
           {"best_objective", result.best().objective},
           {"best_hyperparams", hyperparams_json(result.best().hyperparams)},
           {"best_parameters", result.best().parameters},
           {"test", fold_json(result.test)},
           {"test_ids", result.test_ids},
           {"fold_validation_ids", result.fold_validation_ids},
           {"fold_fingerprint", result.fold_fingerprint},
           {"train_counts", counts_json(result.train_counts)},
           {"test_counts", counts_json(result.test_counts)},
           {"removed_outliers", result.removed_outliers}};
    std::ofstream out(dir / "summary.json");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + (dir / "summary.json").string());
    if (result.final_model) nn::save_checkpoint(dir / "model.ckpt", result.final_model->model);
}

ExperimentResult load_result(const std::filesystem::path& dir) {
    const auto summary_path = dir / "summary.json";
    const auto trials_path = dir / "trials.jsonl";
    ExperimentResult r;
    json j;
    try {
        j = json::parse(read_file(summary_path));
    } catch (const json::exception& e) {
        throw IngestionError(summary_path.string(), 0, std::string("corrupt summary: ") + e.what());
    }
    try {
        if (j.at("schema").get<std::string>() != kSummarySchema) throw std::runtime_error("unsupported summary schema");
        r.config = parse_configs(j.at("config"), std::nullopt).front();
        r.best_trial = j.at("best_trial").get<std::size_t>();
        r.test = fold_from(j.at("test"));
        r.test_ids = j.at("test_ids").get<std::vector<std::string>>();
        r.fold_validation_ids = j.at("fold_validation_ids").get<std::vector<std::vector<std::string>>>();
        r.fold_fingerprint = j.at("fold_fingerprint").get<std::string>();
        r.train_counts = j.at("train_counts").get<ClassCounts>();
        r.test_counts = j.at("test_counts").get<ClassCounts>();
        r.removed_outliers = j.at("removed_outliers").get<std::vector<std::string>>();
        if (fingerprint(r.fold_validation_ids) != r.fold_fingerprint) throw std::runtime_error("fold fingerprint mismatch");
    } catch (const IngestionError&) {
        throw;
    } catch (const std::exception& e) {
        throw IngestionError(summary_path.string(), 0, std::string("corrupt summary: ") + e.what());
    }

    std::ifstream in(trials_path);
    if (!in) throw IngestionError(trials_path.string(), 0, "cannot open file");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            r.trials.push_back(trial_from_json_line(line));
        } catch (const std::exception& e) {
            throw IngestionError(trials_path.string(), lineno, std::string("corrupt trial record: ") + e.what());
        }
        if (r.trials.back().index != r.trials.size() - 1)
            throw IngestionError(trials_path.string(), lineno, "trial records out of order");
    }
    if (r.trials.size() != j.at("trial_count").get<std::size_t>())
        throw IngestionError(trials_path.string(), lineno, "expected " + std::to_string(j.at("trial_count").get<std::size_t>()) +
                                                               " trial records, found " + std::to_string(r.trials.size()));
    if (r.best_trial >= r.trials.size() || select_best(r.trials) != r.best_trial)
        throw IngestionError(summary_path.string(), 0, "best_trial does not match the trial records");
    return r;
}

}  // namespace fdi
