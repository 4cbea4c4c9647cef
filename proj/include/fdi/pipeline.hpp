#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fdi/dataset.hpp"
#include "fdi/evaluation.hpp"
#include "fdi/imbalance.hpp"
#include "fdi/models.hpp"
#include "fdi/preprocess.hpp"

namespace fdi {

enum class ImbalanceMode { None, ClassWeights, Smote };

std::string_view to_string(ImbalanceMode m);

struct TrainingBudget {
    std::size_t epochs = 60;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
};

struct DataSource {
    std::optional<std::filesystem::path> manifest;
    std::optional<SimulatorConfig> simulator;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DataSource data;
    PreprocessConfig preprocess;
    VariantSpec variant;
    ImbalanceMode imbalance = ImbalanceMode::None;
    ModelKind model = ModelKind::MLP;
    /// Defaults to the full table for `model`; overrides must be sub-ranges.
    std::optional<SearchSpace> search_space;
    std::size_t trials = 100;
    std::size_t folds = 10;
    double test_fraction = 0.2;
    std::size_t smote_k = 5;
    TrainingBudget training;
    std::uint64_t seed = 0;

    SearchSpace effective_search_space() const;
    /// Treatment label: original, CW, balanced or synthetic.
    std::string treatment() const;
    /// Throws ConfigError on inconsistent combinations.
    void validate() const;
};

/// Sets variant and imbalance mode from a treatment label.
void apply_treatment(ExperimentConfig& cfg, std::string_view treatment);

/// Produces hyperparameters for trial `index`; the default draws uniformly
/// from the search space.
class HyperParamSampler {
public:
    virtual ~HyperParamSampler() = default;
    virtual HyperParams sample(std::size_t index, std::uint64_t seed) = 0;
};

class RandomSampler final : public HyperParamSampler {
public:
    explicit RandomSampler(SearchSpace space) : space_(std::move(space)) {}
    HyperParams sample(std::size_t, std::uint64_t seed) override { return sample_hyperparams(space_, seed); }

private:
    SearchSpace space_;
};

// --- training ------------------------------------------------------------

/// Stacks samples into a [B, channels, length] tensor.
ad::Tensor make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);

/// Mini-batch Adam on the weighted cross-entropy. Returns the mean loss of
/// the final epoch; throws NumericError on divergence.
double train_model(nn::Model& model, const Dataset& train, const ClassWeights& weights, const TrainingBudget& budget,
                   double l2, std::uint64_t seed);

std::vector<int> predict(const nn::Model& model, const Dataset& ds);

// --- experiment ---------------------------------------------------------

struct FoldReport {
    ConfusionMatrix confusion;
    MetricReport metrics;
};

struct TrialRecord {
    std::size_t index = 0;
    HyperParams hyperparams;
    std::vector<FoldReport> folds;
    double objective = 0.0;
    double duration_s = 0.0;
    std::size_t parameters = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
};

/// Training split after channel selection, outlier cleaning, truncation and
/// PAA; the test split after the same deterministic per-sample steps.
struct PreparedData {
    Dataset train;
    Dataset test;
    std::vector<Fold> folds;
    std::vector<Removal> removed;
    std::size_t target_length = 0;
};

PreparedData prepare_data(const ExperimentConfig& cfg, const Dataset& raw);

/// Normalized, augmented training portion and normalized evaluation portion.
struct FoldData {
    Dataset train;
    Dataset evaluation;
    NormalizationStats stats;
    ClassWeights weights{1.0, 1.0, 1.0};
};

/// Fits normalization on `train` only, then builds the variant from it.
FoldData prepare_fold(const ExperimentConfig& cfg, const Dataset& train, const Dataset& evaluation,
                      std::uint64_t seed);

/// k-fold evaluation of one configuration. Configuration errors and training
/// divergence mark the trial failed with objective 0.
TrialRecord run_trial(const ExperimentConfig& cfg, const HyperParams& hp, const Dataset& train,
                      const std::vector<Fold>& folds, std::size_t index, std::uint64_t seed);

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<TrialRecord> trials;
    std::size_t best_trial = 0;
    FoldReport test;
    std::vector<std::string> test_ids;
    std::vector<std::vector<std::string>> fold_validation_ids;
    std::string fold_fingerprint;
    ClassCounts train_counts{};
    ClassCounts test_counts{};
    std::vector<std::string> removed_outliers;
    std::shared_ptr<ModelInstance> final_model;  // absent when loaded from disk

    const TrialRecord& best() const { return trials.at(best_trial); }
};

/// Index of the best successful trial: highest objective, then fewer
/// parameters, then lower index. Throws when every trial failed.
std::size_t select_best(const std::vector<TrialRecord>& trials);

struct OptimizeOptions {
    std::size_t jobs = 1;
    std::function<void(const TrialRecord&)> on_trial;  // called from the coordinator, in index order
    std::shared_ptr<HyperParamSampler> sampler;        // defaults to RandomSampler
};

ExperimentResult optimize(const ExperimentConfig& cfg, const Dataset& raw, const OptimizeOptions& options = {});
/// Loads the configured data source first.
ExperimentResult optimize(const ExperimentConfig& cfg, const OptimizeOptions& options = {});

Dataset load_data(const DataSource& source);

enum class MetricSelector { MountedPrecision, JammedRecall };

MetricSelector parse_metric(std::string_view name);
std::string_view to_string(MetricSelector m);

/// Per-fold values of the selected metric for the best trial; undefined
/// values count as 0.
std::vector<double> fold_values(const ExperimentResult& r, MetricSelector metric);

struct PairwiseComparison {
    std::size_t first = 0;
    std::size_t second = 0;
    std::optional<PairedTTestResult> result;
    std::string error;  // set when the test is degenerate
};

/// Paired t-test for every pair of results. ArgumentError when fold
/// definitions differ.
std::vector<PairwiseComparison> compare(const std::vector<ExperimentResult>& results, MetricSelector metric);

std::string fingerprint(const std::vector<std::vector<std::string>>& groups);

}  // namespace fdi
