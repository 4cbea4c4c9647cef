#include "fdi/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "fdi/errors.hpp"
#include "fdi/optimizer.hpp"
#include "fdi/rng.hpp"

namespace fdi {

std::string_view to_string(ImbalanceMode m) {
    switch (m) {
        case ImbalanceMode::None: return "none";
        case ImbalanceMode::ClassWeights: return "class_weights";
        case ImbalanceMode::Smote: return "smote";
    }
    return "none";
}

SearchSpace ExperimentConfig::effective_search_space() const {
    return search_space ? *search_space : SearchSpace::table(model);
}

std::string ExperimentConfig::treatment() const {
    if (imbalance == ImbalanceMode::ClassWeights) return "CW";
    return std::string(to_string(variant.variant));
}

void apply_treatment(ExperimentConfig& cfg, std::string_view treatment) {
    if (treatment == "original") {
        cfg.variant.variant = Variant::Original;
        cfg.imbalance = ImbalanceMode::None;
    } else if (treatment == "CW") {
        cfg.variant.variant = Variant::Original;
        cfg.imbalance = ImbalanceMode::ClassWeights;
    } else if (treatment == "balanced" || treatment == "synthetic") {
        cfg.variant.variant = parse_variant(treatment);
        cfg.imbalance = ImbalanceMode::Smote;
    } else {
        throw ConfigError("unknown treatment '" + std::string(treatment) +
                          "' (expected original, CW, balanced or synthetic)");
    }
}

void ExperimentConfig::validate() const {
    if (data.manifest.has_value() == data.simulator.has_value())
        throw ConfigError("data: exactly one of manifest or simulate must be given");
    if (data.simulator) data.simulator->validate();
    if (imbalance == ImbalanceMode::ClassWeights && variant.variant != Variant::Original)
        throw ConfigError("imbalance: class_weights requires variant original");
    if (imbalance == ImbalanceMode::Smote && variant.variant == Variant::Original)
        throw ConfigError("imbalance: smote requires variant balanced or synthetic");
    if (imbalance == ImbalanceMode::None && variant.variant != Variant::Original)
        throw ConfigError("imbalance: variant " + std::string(to_string(variant.variant)) + " requires mode smote");
    if (variant.multiplier < 1) throw ConfigError("variant.multiplier must be at least 1");
    if (trials == 0) throw ConfigError("trials must be positive");
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0,1)");
    if (smote_k == 0) throw ConfigError("smote_k must be positive");
    if (training.epochs == 0 || training.batch_size == 0) throw ConfigError("training: epochs and batch_size must be positive");
    if (!(training.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be positive");
    if (!(preprocess.z_threshold > 0.0)) throw ConfigError("preprocess.z_threshold must be positive");
    if (preprocess.segments == 0) throw ConfigError("preprocess.segments must be positive");
    if (preprocess.target_length && *preprocess.target_length < preprocess.segments)
        throw ConfigError("preprocess.target_length must be at least preprocess.segments");
    if (search_space) {
        if (search_space->kind != model) throw ConfigError("search_space kind differs from model");
        search_space->validate();
    }
}

ad::Tensor make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ArgumentError("make_batch: empty batch");
    const auto& first = ds.samples.at(indices.front());
    const std::size_t per = first.values.size();
    std::vector<double> values(indices.size() * per);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& s = ds.samples.at(indices[i]);
        if (s.values.size() != per) throw ArgumentError("make_batch: samples differ in shape");
        std::copy(s.values.begin(), s.values.end(), values.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return ad::Tensor::constant({indices.size(), first.channels, first.length}, std::move(values));
}

double train_model(nn::Model& model, const Dataset& train, const ClassWeights& weights, const TrainingBudget& budget,
                   double l2, std::uint64_t seed) {
    if (train.samples.empty()) throw ArgumentError("train_model: empty training set");
    Rng rng(seed);
    nn::OptimizerState state;
    state.learning_rate = budget.learning_rate;
    state.l2 = l2;
    std::vector<std::size_t> order(train.samples.size());
    std::iota(order.begin(), order.end(), 0);
    nn::ForwardContext ctx{true, &rng};
    auto& params = model.parameters();
    double epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < budget.epochs; ++epoch) {
        rng.shuffle(order);
        epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += budget.batch_size) {
            const std::size_t end = std::min(order.size(), start + budget.batch_size);
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<int> labels;
            labels.reserve(idx.size());
            for (std::size_t i : idx) labels.push_back(train.samples[i].label);
            const ad::Tensor logits = model.forward(make_batch(train, idx), ctx);
            const ad::Tensor loss = ad::weighted_cross_entropy(logits, labels, weights);
            if (!std::isfinite(loss.item())) throw NumericError("training diverged: non-finite loss");
            for (auto& p : params) p.tensor.zero_grad();
            ad::backward(loss);
            nn::optimizer_step(state, params);
            epoch_loss += loss.item() * static_cast<double>(idx.size());
        }
        epoch_loss /= static_cast<double>(order.size());
    }
    return epoch_loss;
}

std::vector<int> predict(const nn::Model& model, const Dataset& ds) {
    ad::NoGradGuard guard;
    std::vector<int> out;
    out.reserve(ds.samples.size());
    constexpr std::size_t chunk = 128;
    for (std::size_t start = 0; start < ds.samples.size(); start += chunk) {
        std::vector<std::size_t> idx(std::min(chunk, ds.samples.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const ad::Tensor logits = model.forward(make_batch(ds, idx));
        const std::size_t k = logits.shape()[1];
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto row = logits.values().subspan(i * k, k);
            for (double v : row)
                if (!std::isfinite(v)) throw NumericError("non-finite logits at inference");
            out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
    }
    return out;
}

PreparedData prepare_data(const ExperimentConfig& cfg, const Dataset& raw) {
    raw.validate();
    if (raw.samples.empty()) throw ArgumentError("dataset is empty");
    const auto [train_idx, test_idx] = stratified_split_indices(raw.labels(), cfg.test_fraction, derive_seed(cfg.seed, "split"));
    Dataset train = select_channels(raw.select(train_idx), cfg.preprocess.include_rotation);
    Dataset test = select_channels(raw.select(test_idx), cfg.preprocess.include_rotation);

    PreparedData out;
    if (std::isfinite(cfg.preprocess.z_threshold)) {
        CleanResult cleaned = clean_outliers(train, cfg.preprocess.z_threshold);
        train = std::move(cleaned.data);
        out.removed = std::move(cleaned.removed);
    }
    std::size_t target = std::numeric_limits<std::size_t>::max();
    for (const auto& s : train.samples) target = std::min(target, s.length);
    if (cfg.preprocess.target_length) target = *cfg.preprocess.target_length;
    if (cfg.preprocess.segments > target)
        throw ConfigError("preprocess.segments (" + std::to_string(cfg.preprocess.segments) +
                          ") exceeds the truncation length " + std::to_string(target));
    out.target_length = target;
    out.train = paa(truncate(train, target), cfg.preprocess.segments);
    out.test = paa(truncate(test, target), cfg.preprocess.segments);
    out.folds = stratified_kfold(out.train, cfg.folds, derive_seed(cfg.seed, "folds"));
    return out;
}

FoldData prepare_fold(const ExperimentConfig& cfg, const Dataset& train, const Dataset& evaluation, std::uint64_t seed) {
    FoldData fd;
    fd.stats = fit_normalizer(train);
    fd.train = apply_normalizer(fd.stats, train);
    fd.evaluation = apply_normalizer(fd.stats, evaluation);
    if (cfg.imbalance == ImbalanceMode::Smote) fd.train = build_variant(fd.train, cfg.variant, cfg.smote_k, seed);
    if (cfg.imbalance == ImbalanceMode::ClassWeights) fd.weights = class_weights(train.class_counts());
    return fd;
}

TrialRecord run_trial(const ExperimentConfig& cfg, const HyperParams& hp, const Dataset& train,
                      const std::vector<Fold>& folds, std::size_t index, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    TrialRecord rec;
    rec.index = index;
    rec.hyperparams = hp;
    rec.seed = seed;
    try {
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const std::uint64_t fseed = derive_seed(seed, f);
            const FoldData fd = prepare_fold(cfg, train.select(folds[f].train), train.select(folds[f].validation),
                                             derive_seed(fseed, "augment"));
            const auto& first = fd.train.samples.front();
            ModelInstance m = build_model(hp, {first.channels, first.length}, derive_seed(fseed, "init"));
            rec.parameters = count_parameters(m);
            train_model(m.model, fd.train, fd.weights, cfg.training, hp.l2.value_or(0.0), derive_seed(fseed, "train"));
            const auto pred = predict(m.model, fd.evaluation);
            FoldReport report;
            report.confusion = confusion(fd.evaluation.labels(), pred);
            report.metrics = metrics(report.confusion);
            rec.folds.push_back(report);
        }
        std::vector<MetricReport> reports;
        for (const auto& f : rec.folds) reports.push_back(f.metrics);
        rec.objective = objective(reports);
    } catch (const ConfigError& e) {
        rec.failed = true;
        rec.error = std::string("configuration: ") + e.what();
    } catch (const NumericError& e) {
        rec.failed = true;
        rec.error = std::string("numeric: ") + e.what();
    }
    if (rec.failed) rec.objective = 0.0;
    rec.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

std::size_t select_best(const std::vector<TrialRecord>& trials) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& t = trials[i];
        if (t.failed) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& b = trials[*best];
        if (t.objective > b.objective || (t.objective == b.objective && t.parameters < b.parameters)) best = i;
    }
    if (!best) throw std::runtime_error("experiment failed: every trial failed");
    return *best;
}

std::string fingerprint(const std::vector<std::vector<std::string>>& groups) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ULL;
    };
    for (const auto& g : groups) {
        for (const auto& id : g) {
            for (unsigned char c : id) feed(c);
            feed(0x1f);
        }
        feed(0x1e);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Dataset load_data(const DataSource& source) {
    if (source.manifest) return ingest_csv(*source.manifest);
    if (source.simulator) return simulate(*source.simulator);
    throw ConfigError("data: no source configured");
}

ExperimentResult optimize(const ExperimentConfig& cfg, const OptimizeOptions& options) {
    cfg.validate();
    return optimize(cfg, load_data(cfg.data), options);
}

ExperimentResult optimize(const ExperimentConfig& cfg, const Dataset& raw, const OptimizeOptions& options) {
    cfg.validate();
    const PreparedData data = prepare_data(cfg, raw);
    std::shared_ptr<HyperParamSampler> sampler =
        options.sampler ? options.sampler : std::make_shared<RandomSampler>(cfg.effective_search_space());

    const std::uint64_t trial_root = derive_seed(cfg.seed, "trials");
    std::vector<std::uint64_t> seeds(cfg.trials);
    std::vector<HyperParams> hps(cfg.trials);
    for (std::size_t i = 0; i < cfg.trials; ++i) {
        seeds[i] = derive_seed(trial_root, i);
        hps[i] = sampler->sample(i, derive_seed(seeds[i], "hyperparams"));
    }

    std::vector<std::optional<TrialRecord>> records(cfg.trials);
    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, cfg.trials));
    if (jobs == 1) {
        for (std::size_t i = 0; i < cfg.trials; ++i) {
            records[i] = run_trial(cfg, hps[i], data.train, data.folds, i, seeds[i]);
            if (options.on_trial) options.on_trial(*records[i]);
        }
    } else {
        std::mutex mu;
        std::condition_variable cv;
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < cfg.trials;) {
                    try {
                        TrialRecord r = run_trial(cfg, hps[i], data.train, data.folds, i, seeds[i]);
                        std::lock_guard lock(mu);
                        records[i] = std::move(r);
                    } catch (...) {
                        std::lock_guard lock(mu);
                        if (!failure) failure = std::current_exception();
                        next = cfg.trials;
                    }
                    cv.notify_all();
                }
            });
        }
        for (std::size_t emitted = 0; emitted < cfg.trials;) {
            std::unique_lock lock(mu);
            cv.wait(lock, [&] { return failure || records[emitted].has_value(); });
            if (failure) break;
            const TrialRecord& r = *records[emitted++];
            lock.unlock();
            if (options.on_trial) options.on_trial(r);
        }
        for (auto& t : workers) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    ExperimentResult result;
    result.config = cfg;
    for (auto& r : records) result.trials.push_back(std::move(*r));
    result.best_trial = select_best(result.trials);
    for (const auto& f : data.folds) {
        std::vector<std::string> ids;
        for (std::size_t i : f.validation) ids.push_back(data.train.samples[i].id);
        result.fold_validation_ids.push_back(std::move(ids));
    }
    result.fold_fingerprint = fingerprint(result.fold_validation_ids);
    for (const auto& s : data.test.samples) result.test_ids.push_back(s.id);
    for (const auto& r : data.removed) result.removed_outliers.push_back(r.sample_id);
    result.train_counts = data.train.class_counts();
    result.test_counts = data.test.class_counts();

    // Final model: best configuration retrained on the whole training split,
    // evaluated once on the untouched test split.
    const std::uint64_t final_seed = derive_seed(cfg.seed, "final");
    const FoldData fd = prepare_fold(cfg, data.train, data.test, derive_seed(final_seed, "augment"));
    const auto& first = fd.train.samples.front();
    const HyperParams& hp = result.best().hyperparams;
    auto model = std::make_shared<ModelInstance>(build_model(hp, {first.channels, first.length}, derive_seed(final_seed, "init")));
    train_model(model->model, fd.train, fd.weights, cfg.training, hp.l2.value_or(0.0), derive_seed(final_seed, "train"));
    const auto pred = predict(model->model, fd.evaluation);
    result.test.confusion = confusion(fd.evaluation.labels(), pred);
    result.test.metrics = metrics(result.test.confusion);
    result.final_model = std::move(model);
    return result;
}

MetricSelector parse_metric(std::string_view name) {
    if (name == "mounted-precision") return MetricSelector::MountedPrecision;
    if (name == "jammed-recall") return MetricSelector::JammedRecall;
    throw ConfigError("unknown metric '" + std::string(name) + "' (expected mounted-precision or jammed-recall)");
}

std::string_view to_string(MetricSelector m) {
    return m == MetricSelector::MountedPrecision ? "mounted-precision" : "jammed-recall";
}

std::vector<double> fold_values(const ExperimentResult& r, MetricSelector metric) {
    std::vector<double> out;
    for (const auto& f : r.best().folds)
        out.push_back((metric == MetricSelector::MountedPrecision ? f.metrics.mounted_precision() : f.metrics.jammed_recall())
                          .value_or(0.0));
    return out;
}

std::vector<PairwiseComparison> compare(const std::vector<ExperimentResult>& results, MetricSelector metric) {
    if (results.size() < 2) throw ArgumentError("compare: need at least two results");
    for (const auto& r : results)
        if (r.fold_fingerprint != results.front().fold_fingerprint)
            throw ArgumentError("compare: results '" + r.config.name + "' and '" + results.front().config.name +
                                "' use different fold definitions");
    std::vector<PairwiseComparison> out;
    for (std::size_t i = 0; i < results.size(); ++i)
        for (std::size_t j = i + 1; j < results.size(); ++j) {
            PairwiseComparison c{i, j, std::nullopt, {}};
            try {
                c.result = paired_ttest(fold_values(results[i], metric), fold_values(results[j], metric));
            } catch (const DegenerateInputError& e) {
                c.error = e.what();
            }
            out.push_back(std::move(c));
        }
    return out;
}

}  // namespace fdi
