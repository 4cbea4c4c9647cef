#include "fdi/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fdi/errors.hpp"
#include "fdi/rng.hpp"

namespace fdi {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = 0;
        while (start < cell.size() && cell[start] == ' ') ++start;
        out.push_back(cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void require_classes(const ClassCounts& counts, std::size_t minimum, const std::string& what) {
    for (int c = 0; c < kNumClasses; ++c)
        if (counts[c] > 0 && counts[c] < minimum)
            throw ArgumentError(what + ": class " + std::string(label_name(c)) + " has " + std::to_string(counts[c]) +
                                " samples, needs at least " + std::to_string(minimum));
}

ClassCounts count_labels(const std::vector<int>& labels) {
    ClassCounts counts{};
    for (int l : labels) {
        if (l < 0 || l >= kNumClasses) throw ArgumentError("label out of range: " + std::to_string(l));
        ++counts[l];
    }
    return counts;
}

ScrewingSample make_sample(const SimulatorConfig& cfg, int label, std::size_t index, Rng& rng) {
    const std::size_t n = cfg.length;
    const double s = cfg.noise;
    ScrewingSample out;
    out.id = std::string(label_name(label)) + "-" + std::to_string(index);
    out.label = label;
    out.channels = 8;
    out.length = n;
    out.values.assign(8 * n, 0.0);

    // Per-sample variability, zero when noise is zero. Draws are bounded so
    // that channel means have no Gaussian tails for outlier cleaning to trip on.
    auto u = [&] { return rng.uniform(-1.0, 1.0); };
    const double phase = s * kPi * u();
    const double peak = cfg.ramp_peak * (1.0 + 0.3 * s * u());
    const double plateau = cfg.plateau_level * (1.0 + 0.3 * s * u());
    const double height = cfg.spike_height * (1.0 + 0.3 * s * u());
    // Late jams look much like a finished tightening; this is where classes overlap.
    const double onset = std::clamp(cfg.spike_position + 0.45 * s * rng.uniform(), 0.05, 0.95);
    const double press = -20.0 * (1.0 + 0.05 * s * u());
    const double turns = 5.0 * (1.0 + 0.15 * s * u());
    static constexpr double kScale[8] = {0.5, 0.5, 2.0, 0.05, 0.05, 0.5, 0.5, 0.5};
    double bias[8];
    for (std::size_t c = 0; c < 8; ++c) bias[c] = s * kScale[c] * u();

    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        double tz = 0.0, dz = 0.0, rot = 0.0, fz = press;
        switch (static_cast<Outcome>(label)) {
            case Outcome::Mounted:
                tz = peak * t * t;
                dz = 6.0 * t;
                rot = 2.0 * kPi * turns * t;
                fz -= 5.0 * t * t;
                break;
            case Outcome::NotMounted:
                tz = plateau * (1.0 - std::exp(-t / 0.05));
                dz = 0.5 * t;
                rot = 2.0 * kPi * turns * t;
                break;
            case Outcome::Jammed: {
                const double tt = std::min(t, onset);
                tz = peak * tt * tt;
                if (t > onset) tz += (height - peak * onset * onset) * (1.0 - std::exp(-(t - onset) / 0.01));
                dz = 6.0 * tt;
                rot = 2.0 * kPi * turns * tt;
                fz -= 5.0 * tt * tt;
                break;
            }
        }
        // Lateral ripple follows the commanded spindle angle, which keeps
        // turning after a jam; the measured rotation stalls.
        const double angle = 2.0 * kPi * turns * t + phase;
        const double fx = 0.8 * std::sin(angle);
        const double fy = 0.8 * std::cos(angle);
        const double row[8] = {fx, fy, fz, 0.05 * fy, -0.05 * fx, tz, dz, rot};
        for (std::size_t c = 0; c < 8; ++c) out.at(c, i) = row[c] + bias[c] + s * kScale[c] * rng.normal();
    }
    return out;
}

std::vector<std::size_t> corrupted_indices(const SimulatorConfig& cfg) {
    const std::size_t total = cfg.counts[0] + cfg.counts[1] + cfg.counts[2];
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(cfg.seed, "corruption"));
    rng.shuffle(idx);
    idx.resize(std::min(cfg.corrupted, total));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

std::string_view label_name(int label) {
    switch (label) {
        case 0: return "mounted";
        case 1: return "not_mounted";
        case 2: return "jammed";
        default: return "invalid";
    }
}

std::optional<int> parse_label(std::string_view name) {
    for (int c = 0; c < kNumClasses; ++c)
        if (name == label_name(c)) return c;
    return std::nullopt;
}

ClassCounts Dataset::class_counts() const {
    ClassCounts counts{};
    for (const auto& s : samples) ++counts.at(static_cast<std::size_t>(s.label));
    return counts;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

Dataset Dataset::select(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.channel_names = channel_names;
    out.source = source;
    out.seed = seed;
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) out.samples.push_back(samples.at(i));
    return out;
}

void Dataset::validate() const {
    std::set<std::string> ids;
    for (const auto& s : samples) {
        if (!ids.insert(s.id).second) throw ArgumentError("duplicate sample id " + s.id);
        if (s.channels != channel_names.size())
            throw ArgumentError("sample " + s.id + " has " + std::to_string(s.channels) + " channels, dataset has " +
                                std::to_string(channel_names.size()));
        if (s.length == 0 || s.values.size() != s.channels * s.length)
            throw ArgumentError("sample " + s.id + " has inconsistent shape");
        if (s.label < 0 || s.label >= kNumClasses) throw ArgumentError("sample " + s.id + " has invalid label");
    }
}

const std::vector<std::string>& default_channel_names() {
    static const std::vector<std::string> names{"Fx", "Fy", "Fz", "Tx", "Ty", "Tz", "Dz", "Rot"};
    return names;
}

void SimulatorConfig::validate() const {
    if (length < 8) throw ConfigError("simulator: length must be at least 8");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("simulator: noise must be non-negative");
    if (!(spike_position > 0.0 && spike_position < 1.0)) throw ConfigError("simulator: spike_position must be in (0,1)");
    for (double v : {ramp_peak, plateau_level, spike_height})
        if (!std::isfinite(v)) throw ConfigError("simulator: signature parameters must be finite");
    if (corrupted > counts[0] + counts[1] + counts[2]) throw ConfigError("simulator: more corrupted samples than samples");
}

Dataset simulate(const SimulatorConfig& config) {
    config.validate();
    Dataset ds;
    ds.channel_names = default_channel_names();
    ds.source = "simulated";
    ds.seed = config.seed;
    for (int c = 0; c < kNumClasses; ++c) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(c)));
        for (std::size_t i = 0; i < config.counts[c]; ++i) ds.samples.push_back(make_sample(config, c, i, rng));
    }
    for (std::size_t i : corrupted_indices(config))
        for (std::size_t t = 0; t < config.length; ++t) ds.samples[i].at(2, t) += 400.0;
    return ds;
}

std::vector<std::string> corrupted_ids(const SimulatorConfig& config) {
    std::vector<std::string> ids;
    std::vector<std::pair<int, std::size_t>> flat;
    for (int c = 0; c < kNumClasses; ++c)
        for (std::size_t i = 0; i < config.counts[c]; ++i) flat.emplace_back(c, i);
    for (std::size_t i : corrupted_indices(config))
        ids.push_back(std::string(label_name(flat[i].first)) + "-" + std::to_string(flat[i].second));
    return ids;
}

Dataset ingest_csv(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IngestionError(manifest.string(), 0, "cannot open manifest");
    const auto base = manifest.parent_path();
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw IngestionError(manifest.string(), 1, "empty manifest");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "path" || header[1] != "label")
        throw IngestionError(manifest.string(), 1, "manifest header must start with path,label");
    const bool has_provenance = header.size() > 2 && header[2] == "provenance";

    Dataset ds;
    ds.source = "ingested";
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() < 2) throw IngestionError(manifest.string(), lineno, "expected path,label");
        const auto label = parse_label(cells[1]);
        if (!label) throw IngestionError(manifest.string(), lineno, "unknown label '" + cells[1] + "'");
        std::filesystem::path path = cells[0];
        if (path.is_relative()) path = base / path;

        std::ifstream sf(path);
        if (!sf) throw IngestionError(path.string(), 0, "missing sample file (manifest line " + std::to_string(lineno) + ")");
        std::string sline;
        if (!std::getline(sf, sline)) throw IngestionError(path.string(), 1, "empty sample file");
        const auto names = split_csv_line(sline);
        if (ds.channel_names.empty()) {
            if (names.size() != 6 && names.size() != 8)
                throw IngestionError(path.string(), 1, "expected 6 or 8 channels, got " + std::to_string(names.size()));
            ds.channel_names = names;
        } else if (names != ds.channel_names) {
            throw IngestionError(path.string(), 1, "channel header differs from the first sample");
        }
        const std::size_t nc = names.size();
        std::vector<std::vector<double>> rows;
        std::size_t sl = 1;
        while (std::getline(sf, sline)) {
            ++sl;
            if (sline.empty() || sline == "\r") continue;
            const auto vals = split_csv_line(sline);
            if (vals.size() != nc)
                throw IngestionError(path.string(), sl, "ragged row: " + std::to_string(vals.size()) + " cells, expected " +
                                                            std::to_string(nc));
            std::vector<double> row(nc);
            for (std::size_t c = 0; c < nc; ++c) {
                const auto& cell = vals[c];
                auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), row[c]);
                if (ec != std::errc() || ptr != cell.data() + cell.size())
                    throw IngestionError(path.string(), sl, "column " + names[c] + ": cannot parse '" + cell + "'");
                if (!std::isfinite(row[c]))
                    throw IngestionError(path.string(), sl, "column " + names[c] + ": non-finite value '" + cell + "'");
            }
            rows.push_back(std::move(row));
        }
        if (rows.empty()) throw IngestionError(path.string(), sl, "no data rows");

        ScrewingSample s;
        s.id = path.stem().string();
        if (!ids.insert(s.id).second) throw IngestionError(manifest.string(), lineno, "duplicate sample id " + s.id);
        s.label = *label;
        s.channels = nc;
        s.length = rows.size();
        s.values.resize(nc * rows.size());
        for (std::size_t t = 0; t < rows.size(); ++t)
            for (std::size_t c = 0; c < nc; ++c) s.at(c, t) = rows[t][c];
        if (has_provenance && cells.size() > 2) s.provenance.synthetic = cells[2] == "synthetic";
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "samples");
    const bool with_provenance =
        std::any_of(ds.samples.begin(), ds.samples.end(), [](const auto& s) { return s.provenance.synthetic; });
    std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
    if (!manifest) throw ArgumentError("cannot write " + (dir / "manifest.csv").string());
    manifest << (with_provenance ? "path,label,provenance\n" : "path,label\n");
    for (const auto& s : ds.samples) {
        const std::string rel = "samples/" + s.id + ".csv";
        std::ofstream out(dir / rel, std::ios::binary);
        if (!out) throw ArgumentError("cannot write " + (dir / rel).string());
        for (std::size_t c = 0; c < ds.channel_names.size(); ++c) out << (c ? "," : "") << ds.channel_names[c];
        out << '\n';
        for (std::size_t t = 0; t < s.length; ++t) {
            for (std::size_t c = 0; c < s.channels; ++c) out << (c ? "," : "") << format_double(s.at(c, t));
            out << '\n';
        }
        manifest << rel << ',' << label_name(s.label);
        if (with_provenance) manifest << ',' << (s.provenance.synthetic ? "synthetic" : "original");
        manifest << '\n';
    }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(const std::vector<int>& labels,
                                                                                       double test_fraction,
                                                                                       std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ArgumentError("test_fraction must be in (0,1)");
    const ClassCounts counts = count_labels(labels);
    require_classes(counts, 2, "stratified_split");

    const std::size_t n = labels.size();
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    ClassCounts quota{};
    std::array<double, kNumClasses> remainder{};
    std::size_t assigned = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        const double exact = static_cast<double>(counts[c]) * test_fraction;
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - std::floor(exact);
        assigned += quota[c];
    }
    std::array<int, kNumClasses> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
        if (quota[order[i]] < counts[order[i]]) {
            ++quota[order[i]];
            ++assigned;
        }
    }

    std::vector<std::size_t> train, test;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (labels[i] == c) members.push_back(i);
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
        rng.shuffle(members);
        test.insert(test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
        train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    auto [train, test] = stratified_split_indices(ds.labels(), test_fraction, seed);
    return {ds.select(train), ds.select(test)};
}

std::vector<Fold> stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ArgumentError("stratified_kfold: k must be at least 2");
    const ClassCounts counts = count_labels(labels);
    require_classes(counts, k, "stratified_kfold");

    // Deal class-by-class shuffled members round-robin with a running offset,
    // so both per-class and total fold sizes differ by at most one.
    std::vector<std::vector<std::size_t>> validation(k);
    std::size_t position = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) members.push_back(i);
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
        rng.shuffle(members);
        for (std::size_t i : members) validation[position++ % k].push_back(i);
    }
    std::vector<Fold> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(validation[f].begin(), validation[f].end());
        folds[f].validation = validation[f];
        for (std::size_t g = 0; g < k; ++g)
            if (g != f) folds[f].train.insert(folds[f].train.end(), validation[g].begin(), validation[g].end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

std::vector<Fold> stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    return stratified_kfold(ds.labels(), k, seed);
}

}  // namespace fdi
