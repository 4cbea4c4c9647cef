#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fdi/layers.hpp"

namespace fdi {

enum class ModelKind { MLP, CNN, LSTM, Transformer, ViT };

inline constexpr ModelKind kAllModels[] = {ModelKind::MLP, ModelKind::CNN, ModelKind::LSTM, ModelKind::Transformer,
                                           ModelKind::ViT};

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// One sampled configuration. Fields a model kind does not use are empty.
struct HyperParams {
    ModelKind kind = ModelKind::MLP;
    std::size_t fc_layers = 1;    // dense layer count
    std::size_t fc_units = 1;     // neurons per dense layer
    double dropout = 0.0;         // in [0, 0.5)
    std::optional<double> l2;     // dense-layer L2 coefficient
    std::optional<std::size_t> depth;      // conv / recurrent / attention block count
    std::optional<std::size_t> kernel;     // conv kernel or patch size
    std::optional<std::size_t> pool;       // pooling size
    std::optional<std::size_t> embedding;  // attention width

    bool operator==(const HyperParams&) const = default;
};

/// Integer domain: either the closed range [lo, hi] or an explicit set.
struct IntDomain {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    std::vector<std::int64_t> choices;

    static IntDomain range(std::int64_t lo, std::int64_t hi) { return {lo, hi, {}}; }
    static IntDomain set(std::vector<std::int64_t> values) { return {0, 0, std::move(values)}; }
    bool contains(std::int64_t v) const;
    bool subset_of(const IntDomain& other) const;
};

struct SearchSpace {
    ModelKind kind = ModelKind::MLP;
    IntDomain fc_layers;
    IntDomain fc_units;
    double dropout_max = 0.5;  // dropout ~ U[0, dropout_max)
    std::optional<std::pair<double, double>> l2;  // log-uniform bounds
    std::optional<IntDomain> depth;
    std::optional<IntDomain> kernel;
    std::optional<IntDomain> pool;
    std::optional<IntDomain> embedding;

    /// Hyperparameter ranges searched for each architecture.
    static SearchSpace table(ModelKind kind);
    /// Throws ConfigError unless every domain lies inside the full table.
    void validate() const;
    bool contains(const HyperParams& hp) const;
};

HyperParams sample_hyperparams(const SearchSpace& space, std::uint64_t seed);
HyperParams sample_hyperparams(ModelKind kind, std::uint64_t seed);

/// Fixed architectural constants that the search space leaves open.
inline constexpr std::size_t kConvFilters = 32;
inline constexpr std::size_t kLstmHidden = 32;
inline constexpr std::size_t kMaxPositions = 512;

std::size_t attention_heads(std::size_t width);

struct ModelInstance {
    HyperParams hyperparams;
    nn::Shape input_shape;  // [channels, length]
    nn::Model model;
};

/// Layer list for `hp` on inputs of shape [channels, length].
std::vector<nn::LayerSpec> architecture(const HyperParams& hp, const nn::Shape& input_shape);

/// Throws ConfigError when the configuration cannot be built (e.g. pooling
/// collapses the sequence).
ModelInstance build_model(const HyperParams& hp, const nn::Shape& input_shape, std::uint64_t init_seed);

std::size_t count_parameters(const ModelInstance& m);

}  // namespace fdi
