#include "fdi/imbalance.hpp"

#include <algorithm>
#include <numeric>

#include "fdi/errors.hpp"
#include "fdi/rng.hpp"

namespace fdi {

namespace {

double squared_distance(const ScrewingSample& a, const ScrewingSample& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double e = a.values[i] - b.values[i];
        d += e * e;
    }
    return d;
}

}  // namespace

std::vector<std::vector<std::size_t>> nearest_neighbors(const Dataset& ds, std::size_t k) {
    const std::size_t n = ds.samples.size();
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && ds.samples[j].label == ds.samples[i].label)
                cand.emplace_back(squared_distance(ds.samples[i], ds.samples[j]), j);
        const std::size_t m = std::min(k, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(m), cand.end());
        for (std::size_t q = 0; q < m; ++q) out[i].push_back(cand[q].second);
    }
    return out;
}

Dataset smote_oversample(const Dataset& train, const SmoteConfig& cfg) {
    if (cfg.k == 0) throw ArgumentError("smote: k must be positive");
    const ClassCounts counts = train.class_counts();
    for (int c = 0; c < kNumClasses; ++c) {
        if (cfg.targets[c] < counts[c])
            throw ArgumentError("smote: target " + std::to_string(cfg.targets[c]) + " for class " +
                                std::string(label_name(c)) + " is below its count " + std::to_string(counts[c]));
        if (cfg.targets[c] > counts[c] && counts[c] < cfg.k + 1)
            throw ArgumentError("smote: class " + std::string(label_name(c)) + " has " + std::to_string(counts[c]) +
                                " samples, needs at least k+1 = " + std::to_string(cfg.k + 1));
    }
    for (const auto& s : train.samples)
        if (s.values.size() != train.samples.front().values.size())
            throw ArgumentError("smote: samples must share one shape");

    Dataset out = train;
    bool any = false;
    for (int c = 0; c < kNumClasses; ++c) any = any || cfg.targets[c] > counts[c];
    if (!any) return out;

    const auto neighbors = nearest_neighbors(train, cfg.k);
    for (int c = 0; c < kNumClasses; ++c) {
        if (cfg.targets[c] == counts[c]) continue;
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < train.samples.size(); ++i)
            if (train.samples[i].label == c) members.push_back(i);
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(c)));
        for (std::size_t n = 0; n < cfg.targets[c] - counts[c]; ++n) {
            const std::size_t base = members[rng.index(members.size())];
            const auto& nn = neighbors[base];
            const std::size_t other = nn[rng.index(nn.size())];
            const double r = rng.uniform();
            const auto& a = train.samples[base];
            const auto& b = train.samples[other];
            ScrewingSample s;
            s.id = "smote-" + std::string(label_name(c)) + "-" + std::to_string(n);
            s.label = c;
            s.channels = a.channels;
            s.length = a.length;
            s.values.resize(a.values.size());
            for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = a.values[i] + r * (b.values[i] - a.values[i]);
            s.provenance = {true, a.id, b.id, r};
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Original: return "original";
        case Variant::Balanced: return "balanced";
        case Variant::Synthetic: return "synthetic";
    }
    return "original";
}

Variant parse_variant(std::string_view name) {
    if (name == "original") return Variant::Original;
    if (name == "balanced") return Variant::Balanced;
    if (name == "synthetic") return Variant::Synthetic;
    throw ConfigError("unknown dataset variant '" + std::string(name) + "'");
}

ClassCounts variant_targets(const ClassCounts& counts, const VariantSpec& spec) {
    if (spec.multiplier < 1) throw ConfigError("variant multiplier must be at least 1");
    if (spec.variant == Variant::Original) return counts;
    const std::size_t majority = *std::max_element(counts.begin(), counts.end());
    const std::size_t per_class = spec.variant == Variant::Balanced ? majority : majority * spec.multiplier;
    ClassCounts t{};
    for (int c = 0; c < kNumClasses; ++c) t[c] = counts[c] > 0 ? per_class : 0;
    return t;
}

Dataset build_variant(const Dataset& train, const VariantSpec& spec, std::size_t k, std::uint64_t seed) {
    const ClassCounts targets = variant_targets(train.class_counts(), spec);
    if (spec.variant == Variant::Original) return train;
    return smote_oversample(train, {k, targets, seed});
}

ClassWeights class_weights(const ClassCounts& counts) {
    std::size_t total = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        if (counts[c] == 0) throw ArgumentError("class_weights: class " + std::string(label_name(c)) + " has no samples");
        total += counts[c];
    }
    ClassWeights w{};
    for (int c = 0; c < kNumClasses; ++c)
        w[c] = static_cast<double>(total) / (static_cast<double>(kNumClasses) * static_cast<double>(counts[c]));
    return w;
}

}  // namespace fdi
