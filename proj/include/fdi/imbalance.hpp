#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "fdi/dataset.hpp"

namespace fdi {

struct SmoteConfig {
    std::size_t k = 5;
    ClassCounts targets{};
    std::uint64_t seed = 0;
};

/// SMOTE over the flattened [channels * length] vectors. For each class with
/// target above its count, repeatedly picks a random original sample, one of
/// its k nearest same-class originals (Euclidean), and r in [0,1), and appends
/// x + r (neighbor - x). Originals come first, unchanged and in order.
Dataset smote_oversample(const Dataset& train, const SmoteConfig& cfg);

/// k nearest same-class neighbours (indices into `ds`) of every sample; ties
/// broken by lower index.
std::vector<std::vector<std::size_t>> nearest_neighbors(const Dataset& ds, std::size_t k);

enum class Variant { Original, Balanced, Synthetic };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct VariantSpec {
    Variant variant = Variant::Original;
    std::size_t multiplier = 4;
};

/// Class targets a variant produces from training counts.
ClassCounts variant_targets(const ClassCounts& counts, const VariantSpec& spec);

Dataset build_variant(const Dataset& train, const VariantSpec& spec, std::size_t k, std::uint64_t seed);

using ClassWeights = std::array<double, kNumClasses>;

/// w_c = N / (3 n_c); every class then carries the same total weight.
ClassWeights class_weights(const ClassCounts& counts);

}  // namespace fdi
