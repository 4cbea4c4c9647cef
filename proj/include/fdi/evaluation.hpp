#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "fdi/dataset.hpp"

namespace fdi {

/// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
    std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

    std::size_t total() const;
    std::size_t true_positives(int c) const { return counts[c][c]; }
    std::size_t false_positives(int c) const;
    std::size_t false_negatives(int c) const;
    std::size_t true_negatives(int c) const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted);

/// Metrics with a zero denominator are nullopt rather than NaN.
struct MetricReport {
    std::optional<double> accuracy;
    std::array<std::optional<double>, kNumClasses> precision;
    std::array<std::optional<double>, kNumClasses> recall;

    std::optional<double> mounted_precision() const { return precision[0]; }
    std::optional<double> jammed_recall() const { return recall[2]; }
};

MetricReport metrics(const ConfusionMatrix& cm);

/// Mean mounted precision over folds, an undefined fold counting as 0.
double objective(std::span<const MetricReport> folds);

struct PairedTTestResult {
    double t = 0.0;
    std::size_t degrees_of_freedom = 0;
    double p_value = 1.0;
    double mean_difference = 0.0;
};

/// Two-tailed paired t-test of a - b.
PairedTTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_tailed(double t, double df);

}  // namespace fdi
