#include "fdi/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fdi {

namespace {

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

std::string pm(const Summary& s) { return fmt(s.mean) + " ± " + fmt(s.sd); }

const char* rotation_label(bool rot) { return rot ? "with rotation" : "without rotation"; }

const std::vector<std::string>& treatment_order() {
    static const std::vector<std::string> order{"original", "CW", "balanced", "synthetic"};
    return order;
}

std::vector<std::string> treatments_present(const std::vector<MetricRow>& rows) {
    std::vector<std::string> out;
    for (const auto& t : treatment_order())
        if (std::any_of(rows.begin(), rows.end(), [&](const MetricRow& r) { return r.treatment == t; })) out.push_back(t);
    return out;
}

std::vector<ModelKind> models_present(const std::vector<MetricRow>& rows) {
    std::vector<ModelKind> out;
    for (ModelKind m : kAllModels)
        if (std::any_of(rows.begin(), rows.end(), [&](const MetricRow& r) { return r.model == m; })) out.push_back(m);
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

double Summary::standard_error() const { return n == 0 ? 0.0 : sd / std::sqrt(static_cast<double>(n)); }

Summary summarize(const std::vector<double>& values) {
    Summary s;
    s.n = values.size();
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

MetricRow metric_row(const ExperimentResult& r) {
    MetricRow row;
    row.experiment = r.config.name;
    row.model = r.config.model;
    row.treatment = r.config.treatment();
    row.rotation = r.config.preprocess.include_rotation;
    row.mounted_precision = summarize(fold_values(r, MetricSelector::MountedPrecision));
    row.jammed_recall = summarize(fold_values(r, MetricSelector::JammedRecall));
    row.test_mounted_precision = r.test.metrics.mounted_precision();
    row.test_jammed_recall = r.test.metrics.jammed_recall();
    row.best_trial = r.best_trial;
    row.parameters = r.best().parameters;
    return row;
}

std::string metric_table_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "experiment,model,treatment,rotation,folds,mounted_precision_mean,mounted_precision_sd,"
           "jammed_recall_mean,jammed_recall_sd,test_mounted_precision,test_jammed_recall,best_trial,parameters\n";
    for (const auto& r : rows) {
        out << csv_field(r.experiment) << ',' << to_string(r.model) << ',' << r.treatment << ','
            << (r.rotation ? "on" : "off") << ',' << r.mounted_precision.n << ',' << fmt(r.mounted_precision.mean, 6) << ','
            << fmt(r.mounted_precision.sd, 6) << ',' << fmt(r.jammed_recall.mean, 6) << ',' << fmt(r.jammed_recall.sd, 6)
            << ',' << (r.test_mounted_precision ? fmt(*r.test_mounted_precision, 6) : "") << ','
            << (r.test_jammed_recall ? fmt(*r.test_jammed_recall, 6) : "") << ',' << r.best_trial << ',' << r.parameters
            << '\n';
    }
    return out.str();
}

std::string metric_table_markdown(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    for (bool rot : {false, true}) {
        std::vector<MetricRow> subset;
        std::copy_if(rows.begin(), rows.end(), std::back_inserter(subset), [&](const MetricRow& r) { return r.rotation == rot; });
        if (subset.empty()) continue;
        const auto treatments = treatments_present(subset);
        out << "### Mounted precision (Pr) and jammed recall (Re), " << rotation_label(rot) << "\n\n";
        out << "Cross-validation values are means ± standard deviation over the folds of the best trial; "
               "test values come from the final model on the held-out split.\n\n";
        out << "| Model |";
        for (const auto& t : treatments) out << ' ' << t << " Pr | " << t << " Re |";
        out << "\n|---|";
        for (std::size_t i = 0; i < treatments.size(); ++i) out << "---|---|";
        out << '\n';
        for (ModelKind m : models_present(subset)) {
            out << "| " << to_string(m) << " |";
            for (const auto& t : treatments) {
                auto it = std::find_if(subset.begin(), subset.end(),
                                       [&](const MetricRow& r) { return r.model == m && r.treatment == t; });
                if (it == subset.end()) {
                    out << " | |";
                    continue;
                }
                out << ' ' << pm(it->mounted_precision) << " | " << pm(it->jammed_recall) << " |";
            }
            out << '\n';
        }
        out << "\n| Model | Treatment | Test Pr | Test Re |\n|---|---|---|---|\n";
        for (const auto& r : subset)
            out << "| " << to_string(r.model) << " | " << r.treatment << " | " << fmt(r.test_mounted_precision) << " | "
                << fmt(r.test_jammed_recall) << " |\n";
        out << '\n';
    }
    return out.str();
}

std::string parameter_table_csv(const std::vector<ExperimentResult>& results) {
    std::ostringstream out;
    out << "experiment,model,trial,parameters,objective,failed\n";
    for (const auto& r : results)
        for (const auto& t : r.trials)
            out << csv_field(r.config.name) << ',' << to_string(r.config.model) << ',' << t.index << ',' << t.parameters
                << ',' << fmt(t.objective, 6) << ',' << (t.failed ? "true" : "false") << '\n';
    return out.str();
}

std::string parameter_table_markdown(const std::vector<ExperimentResult>& results) {
    std::ostringstream out;
    out << "| Experiment | Model | Best trial | Parameters (best) | Min | Max |\n|---|---|---|---|---|---|\n";
    for (const auto& r : results) {
        std::size_t lo = std::numeric_limits<std::size_t>::max();
        std::size_t hi = 0;
        for (const auto& t : r.trials) {
            if (t.parameters == 0) continue;
            lo = std::min(lo, t.parameters);
            hi = std::max(hi, t.parameters);
        }
        if (hi == 0) lo = 0;
        out << "| " << r.config.name << " | " << to_string(r.config.model) << " | " << r.best_trial << " | "
            << r.best().parameters << " | " << lo << " | " << hi << " |\n";
    }
    return out.str();
}

std::string comparison_table_markdown(const std::vector<ExperimentResult>& results,
                                      const std::vector<PairwiseComparison>& comparisons, MetricSelector metric) {
    std::ostringstream out;
    out << "Paired t-tests on per-fold " << to_string(metric) << " of each best trial.\n\n";
    out << "| A | B | mean(A-B) | t | df | p |\n|---|---|---|---|---|---|\n";
    for (const auto& c : comparisons) {
        out << "| " << results[c.first].config.name << " | " << results[c.second].config.name << " | ";
        if (c.result)
            out << fmt(c.result->mean_difference) << " | " << fmt(c.result->t) << " | " << c.result->degrees_of_freedom
                << " | " << fmt(c.result->p_value) << " |\n";
        else
            out << "degenerate: " << c.error << " | | | |\n";
    }
    return out.str();
}

std::string comparison_table_csv(const std::vector<ExperimentResult>& results,
                                 const std::vector<PairwiseComparison>& comparisons, MetricSelector metric) {
    std::ostringstream out;
    out << "metric,a,b,mean_difference,t,df,p_value,error\n";
    for (const auto& c : comparisons) {
        out << to_string(metric) << ',' << csv_field(results[c.first].config.name) << ','
            << csv_field(results[c.second].config.name) << ',';
        if (c.result) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%zu,%.17g,", c.result->mean_difference, c.result->t,
                          c.result->degrees_of_freedom, c.result->p_value);
            out << buf << '\n';
        } else {
            out << ",,,," << csv_field(c.error) << '\n';
        }
    }
    return out.str();
}

std::string precision_chart_svg(const std::vector<MetricRow>& rows, const std::string& title) {
    const auto models = models_present(rows);
    const auto treatments = treatments_present(rows);
    static const char* colors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52"};

    const double left = 60, right = 20, top = 40, bottom = 60, plot_h = 300;
    const double bar_w = 18, group_gap = 24;
    const double group_w = bar_w * static_cast<double>(std::max<std::size_t>(1, treatments.size())) + group_gap;
    const double plot_w = group_w * static_cast<double>(std::max<std::size_t>(1, models.size()));
    const double width = left + plot_w + right + 110, height = top + plot_h + bottom;
    auto y_of = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

    std::ostringstream s;
    s << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << fmt(width, 0) << R"(" height=")" << fmt(height, 0)
      << R"(" font-family="sans-serif" font-size="12">)" << '\n';
    s << R"(<text x=")" << fmt(left, 0) << R"(" y="20" font-size="14">)" << title << "</text>\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        s << R"(<line x1=")" << fmt(left, 1) << R"(" x2=")" << fmt(left + plot_w, 1) << R"(" y1=")" << fmt(y_of(v), 1)
          << R"(" y2=")" << fmt(y_of(v), 1) << R"(" stroke="#ddd"/>)" << '\n';
        s << R"(<text x=")" << fmt(left - 8, 1) << R"(" y=")" << fmt(y_of(v) + 4, 1) << R"(" text-anchor="end">)"
          << fmt(v, 1) << "</text>\n";
    }
    s << R"(<line x1=")" << fmt(left, 1) << R"(" x2=")" << fmt(left, 1) << R"(" y1=")" << fmt(y_of(1), 1) << R"(" y2=")"
      << fmt(y_of(0), 1) << R"(" stroke="#000"/>)" << '\n';
    s << "<text transform=\"translate(16 " << fmt(top + plot_h / 2, 1)
      << ") rotate(-90)\" text-anchor=\"middle\">Mounted precision</text>\n";

    for (std::size_t g = 0; g < models.size(); ++g) {
        const double gx = left + group_gap / 2 + static_cast<double>(g) * group_w;
        for (std::size_t b = 0; b < treatments.size(); ++b) {
            auto it = std::find_if(rows.begin(), rows.end(),
                                   [&](const MetricRow& r) { return r.model == models[g] && r.treatment == treatments[b]; });
            if (it == rows.end()) continue;
            const double x = gx + static_cast<double>(b) * bar_w;
            const double m = it->mounted_precision.mean;
            const double se = it->mounted_precision.standard_error();
            s << R"(<rect x=")" << fmt(x, 1) << R"(" y=")" << fmt(y_of(m), 1) << R"(" width=")" << fmt(bar_w - 2, 1)
              << R"(" height=")" << fmt(y_of(0) - y_of(m), 1) << R"(" fill=")" << colors[b % 4] << R"("/>)" << '\n';
            const double cx = x + (bar_w - 2) / 2;
            s << R"(<line x1=")" << fmt(cx, 1) << R"(" x2=")" << fmt(cx, 1) << R"(" y1=")" << fmt(y_of(m - se), 1)
              << R"(" y2=")" << fmt(y_of(m + se), 1) << R"(" stroke="#000"/>)" << '\n';
        }
        s << R"(<text x=")" << fmt(gx + bar_w * static_cast<double>(treatments.size()) / 2, 1) << R"(" y=")"
          << fmt(y_of(0) + 18, 1) << R"(" text-anchor="middle">)" << to_string(models[g]) << "</text>\n";
    }
    for (std::size_t b = 0; b < treatments.size(); ++b) {
        const double ly = top + 16 * static_cast<double>(b);
        s << R"(<rect x=")" << fmt(left + plot_w + 20, 1) << R"(" y=")" << fmt(ly, 1) << R"(" width="10" height="10" fill=")"
          << colors[b % 4] << R"("/>)" << '\n';
        s << R"(<text x=")" << fmt(left + plot_w + 36, 1) << R"(" y=")" << fmt(ly + 9, 1) << R"(">)" << treatments[b]
          << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::vector<std::filesystem::path> write_report(const std::vector<ExperimentResult>& results,
                                                const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<MetricRow> rows;
    for (const auto& r : results) rows.push_back(metric_row(r));
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text(dir / name, text);
        written.push_back(dir / name);
    };
    emit("metrics.md", metric_table_markdown(rows));
    emit("metrics.csv", metric_table_csv(rows));
    emit("parameters.md", parameter_table_markdown(results));
    emit("parameters.csv", parameter_table_csv(results));
    for (bool rot : {false, true}) {
        std::vector<MetricRow> subset;
        std::copy_if(rows.begin(), rows.end(), std::back_inserter(subset), [&](const MetricRow& r) { return r.rotation == rot; });
        if (subset.empty()) continue;
        emit(rot ? "precision_rotation.svg" : "precision_no_rotation.svg",
             precision_chart_svg(subset, std::string("Mean mounted precision and standard error, ") + rotation_label(rot)));
    }

    // Paired tests only make sense between runs that share folds.
    std::vector<std::string> prints;
    std::map<std::string, std::vector<ExperimentResult>> groups;
    for (const auto& r : results) {
        auto& g = groups[r.fold_fingerprint];
        if (g.empty()) prints.push_back(r.fold_fingerprint);
        g.push_back(r);
    }
    std::string md, csv;
    for (const auto& fp : prints) {
        const auto& g = groups[fp];
        if (g.size() < 2) continue;
        for (MetricSelector metric : {MetricSelector::MountedPrecision, MetricSelector::JammedRecall}) {
            const auto comps = compare(g, metric);
            md += comparison_table_markdown(g, comps, metric) + "\n";
            const std::string part = comparison_table_csv(g, comps, metric);
            csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
        }
    }
    if (!md.empty()) {
        emit("comparisons.md", md);
        emit("comparisons.csv", csv);
    }
    return written;
}

}  // namespace fdi
