#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fdi/pipeline.hpp"

namespace fdi {

struct Summary {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, 0 for fewer than two values
    std::size_t n = 0;

    double standard_error() const;
};

Summary summarize(const std::vector<double>& values);

/// One experiment: best-trial fold statistics plus held-out test values.
struct MetricRow {
    std::string experiment;
    ModelKind model = ModelKind::MLP;
    std::string treatment;
    bool rotation = false;
    Summary mounted_precision;
    Summary jammed_recall;
    std::optional<double> test_mounted_precision;
    std::optional<double> test_jammed_recall;
    std::size_t best_trial = 0;
    std::size_t parameters = 0;
};

MetricRow metric_row(const ExperimentResult& r);

/// Flat table, one row per experiment.
std::string metric_table_csv(const std::vector<MetricRow>& rows);
/// One block per rotation condition: models down, treatments across.
std::string metric_table_markdown(const std::vector<MetricRow>& rows);

/// Every trial of every experiment with its parameter count.
std::string parameter_table_csv(const std::vector<ExperimentResult>& results);
/// Per experiment: best-trial count and the range over all trials.
std::string parameter_table_markdown(const std::vector<ExperimentResult>& results);

std::string comparison_table_markdown(const std::vector<ExperimentResult>& results,
                                      const std::vector<PairwiseComparison>& comparisons, MetricSelector metric);
std::string comparison_table_csv(const std::vector<ExperimentResult>& results,
                                 const std::vector<PairwiseComparison>& comparisons, MetricSelector metric);

/// Grouped bars of mean mounted precision with standard-error whiskers,
/// y axis fixed to [0, 1].
std::string precision_chart_svg(const std::vector<MetricRow>& rows, const std::string& title);

/// Writes metrics.{md,csv}, parameters.{md,csv}, one chart per rotation
/// condition present and, when at least two results share folds,
/// comparisons.{md,csv}. Returns the written paths.
std::vector<std::filesystem::path> write_report(const std::vector<ExperimentResult>& results,
                                                const std::filesystem::path& dir);

}  // namespace fdi
