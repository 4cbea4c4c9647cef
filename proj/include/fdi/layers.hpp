#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fdi/autodiff.hpp"
#include "fdi/rng.hpp"

namespace fdi::nn {

using ad::Shape;
using ad::Tensor;

enum class LayerKind {
    Dense,
    Conv1d,
    MaxPool1d,
    AvgPool1d,
    Dropout,
    LayerNorm,
    MultiHeadAttention,
    Lstm,
    Flatten,
    Softmax,
    // Structural helpers needed to wire the attention and recurrent models.
    ToTokens,            // [C,L] -> [L,C]
    PositionalEmbedding, // learned additive table
    EncoderBlock,        // attention + norm + feed-forward, residual
    SequenceMean,        // [T,D] -> [D]
};

enum class Activation { None, Relu };

std::string_view to_string(LayerKind kind);

/// Declarative description of one layer. Only the fields relevant to
/// `kind` are read.
struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::size_t units = 0;          // dense output width, lstm hidden width
    std::size_t filters = 0;        // conv1d output channels
    std::size_t kernel = 0;         // conv1d kernel
    std::size_t stride = 1;         // conv1d stride
    std::size_t padding = 0;        // conv1d zero padding per side
    std::size_t pool = 0;           // pooling window
    double dropout = 0.0;           // dropout probability
    std::size_t heads = 0;          // attention heads
    std::size_t width = 0;          // attention/embedding width
    std::size_t ffn_width = 0;      // encoder feed-forward width
    std::size_t max_positions = 0;  // positional table rows
    bool return_sequences = false;  // lstm: emit all steps or just the last
    Activation activation = Activation::None;
    bool l2 = false;                // dense: weight takes part in L2 regularization

    static LayerSpec dense(std::size_t units, Activation act = Activation::None, bool l2 = false);
    static LayerSpec conv1d(std::size_t filters, std::size_t kernel, std::size_t stride = 1,
                            std::size_t padding = 0, Activation act = Activation::None);
    static LayerSpec max_pool1d(std::size_t pool);
    static LayerSpec avg_pool1d(std::size_t pool);
    static LayerSpec dropout_layer(double p);
    static LayerSpec layer_norm();
    static LayerSpec attention(std::size_t heads);
    static LayerSpec lstm(std::size_t hidden, bool return_sequences);
    static LayerSpec flatten();
    static LayerSpec softmax();
    static LayerSpec to_tokens();
    static LayerSpec positional(std::size_t max_positions);
    static LayerSpec encoder(std::size_t heads, std::size_t ffn_width, double dropout);
    static LayerSpec sequence_mean();
};

struct Parameter {
    std::string name;
    Tensor tensor;
    bool l2 = false;
};

struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, ForwardContext& ctx) const = 0;
    virtual void collect(std::vector<Parameter>& out, const std::string& prefix) const {
        (void)out;
        (void)prefix;
    }
};

/// A sequential network over batched inputs [B, ...sample_shape].
class Model {
public:
    /// Builds parameters for `specs` given the per-sample input shape.
    /// Throws ConfigError naming both layers when shapes do not chain.
    /// With `variable_length`, the last input axis may differ at forward time.
    Model(std::vector<LayerSpec> specs, Shape sample_shape, std::uint64_t init_seed,
          bool variable_length = false);

    Tensor forward(const Tensor& batch, ForwardContext& ctx) const;
    Tensor forward(const Tensor& batch) const;

    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    std::vector<Tensor> parameter_tensors() const;
    const std::vector<LayerSpec>& specs() const { return specs_; }
    const Shape& sample_shape() const { return sample_shape_; }
    const Shape& output_shape() const { return output_shape_; }
    bool variable_length() const { return variable_length_; }

    /// Total number of scalar parameters.
    std::size_t parameter_count() const;

private:
    std::vector<LayerSpec> specs_;
    Shape sample_shape_;
    Shape output_shape_;
    bool variable_length_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Parameter> params_;
};

/// Per-sample output shape of `spec` applied to `in`; throws ConfigError.
Shape infer_shape(const LayerSpec& spec, const Shape& in);

}  // namespace fdi::nn
