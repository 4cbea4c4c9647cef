#include "fdi/evaluation.hpp"

#include <cmath>
#include <limits>

#include "fdi/errors.hpp"

namespace fdi {

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
        for (std::size_t v : row) n += v;
    return n;
}

std::size_t ConfusionMatrix::false_positives(int c) const {
    std::size_t n = 0;
    for (int r = 0; r < kNumClasses; ++r)
        if (r != c) n += counts[r][c];
    return n;
}

std::size_t ConfusionMatrix::false_negatives(int c) const {
    std::size_t n = 0;
    for (int p = 0; p < kNumClasses; ++p)
        if (p != c) n += counts[c][p];
    return n;
}

std::size_t ConfusionMatrix::true_negatives(int c) const {
    return total() - true_positives(c) - false_positives(c) - false_negatives(c);
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size())
        throw ArgumentError("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                            std::to_string(predicted.size()) + " predictions");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= kNumClasses || predicted[i] < 0 || predicted[i] >= kNumClasses)
            throw ArgumentError("confusion: label out of range at index " + std::to_string(i));
        ++cm.counts[truth[i]][predicted[i]];
    }
    return cm;
}

namespace {
std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

MetricReport metrics(const ConfusionMatrix& cm) {
    MetricReport r;
    std::size_t trace = 0;
    for (int c = 0; c < kNumClasses; ++c) trace += cm.counts[c][c];
    r.accuracy = ratio(trace, cm.total());
    for (int c = 0; c < kNumClasses; ++c) {
        const std::size_t tp = cm.true_positives(c);
        r.precision[c] = ratio(tp, tp + cm.false_positives(c));
        r.recall[c] = ratio(tp, tp + cm.false_negatives(c));
    }
    return r;
}

double objective(std::span<const MetricReport> folds) {
    if (folds.empty()) throw ArgumentError("objective: no fold reports");
    double acc = 0.0;
    for (const auto& f : folds) acc += f.mounted_precision().value_or(0.0);
    return acc / static_cast<double>(folds.size());
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw ArgumentError("incomplete_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError("incomplete_beta: x must be in [0,1]");
    if (x == 0.0 || x == 1.0) return x;
    // Continued fraction (modified Lentz) converges fast for x < (a+1)/(a+b+2);
    // use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
    if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double f = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        f *= d * c;
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < eps) return std::exp(log_front) * f / a;
    }
    throw NumericError("incomplete_beta: continued fraction did not converge");
}

double student_t_two_tailed(double t, double df) {
    if (!(df > 0.0)) throw ArgumentError("student_t: degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

PairedTTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("paired_ttest: samples differ in length");
    const std::size_t n = a.size();
    if (n < 2) throw ArgumentError("paired_ttest: need at least two pairs");
    std::vector<double> d(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = a[i] - b[i];
        mean += d[i];
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double var = ss / static_cast<double>(n - 1);
    // Differences that are constant up to rounding carry no spread.
    const double scale = std::max(1.0, std::abs(mean));
    if (!(var > 1e-24 * scale * scale)) throw DegenerateInputError("paired_ttest: differences have zero variance");

    PairedTTestResult r;
    r.mean_difference = mean;
    r.degrees_of_freedom = n - 1;
    r.t = mean / std::sqrt(var / static_cast<double>(n));
    r.p_value = student_t_two_tailed(r.t, static_cast<double>(r.degrees_of_freedom));
    return r;
}

}  // namespace fdi
