#include "fdi/layers.hpp"

#include <cmath>

#include "fdi/errors.hpp"

namespace fdi::nn {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv1d: return "conv1d";
        case LayerKind::MaxPool1d: return "max-pool1d";
        case LayerKind::AvgPool1d: return "avg-pool1d";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::LayerNorm: return "layer-norm";
        case LayerKind::MultiHeadAttention: return "multi-head-attention";
        case LayerKind::Lstm: return "lstm";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::ToTokens: return "to-tokens";
        case LayerKind::PositionalEmbedding: return "positional-embedding";
        case LayerKind::EncoderBlock: return "encoder-block";
        case LayerKind::SequenceMean: return "sequence-mean";
    }
    return "unknown";
}

LayerSpec LayerSpec::dense(std::size_t units, Activation act, bool l2) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.units = units;
    s.activation = act;
    s.l2 = l2;
    return s;
}

LayerSpec LayerSpec::conv1d(std::size_t filters, std::size_t kernel, std::size_t stride, std::size_t padding,
                            Activation act) {
    LayerSpec s;
    s.kind = LayerKind::Conv1d;
    s.filters = filters;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    s.activation = act;
    return s;
}

LayerSpec LayerSpec::max_pool1d(std::size_t pool) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool1d;
    s.pool = pool;
    return s;
}

LayerSpec LayerSpec::avg_pool1d(std::size_t pool) {
    LayerSpec s;
    s.kind = LayerKind::AvgPool1d;
    s.pool = pool;
    return s;
}

LayerSpec LayerSpec::dropout_layer(double p) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.dropout = p;
    return s;
}

LayerSpec LayerSpec::layer_norm() {
    LayerSpec s;
    s.kind = LayerKind::LayerNorm;
    return s;
}

LayerSpec LayerSpec::attention(std::size_t heads) {
    LayerSpec s;
    s.kind = LayerKind::MultiHeadAttention;
    s.heads = heads;
    return s;
}

LayerSpec LayerSpec::lstm(std::size_t hidden, bool return_sequences) {
    LayerSpec s;
    s.kind = LayerKind::Lstm;
    s.units = hidden;
    s.return_sequences = return_sequences;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
}

LayerSpec LayerSpec::to_tokens() {
    LayerSpec s;
    s.kind = LayerKind::ToTokens;
    return s;
}

LayerSpec LayerSpec::positional(std::size_t max_positions) {
    LayerSpec s;
    s.kind = LayerKind::PositionalEmbedding;
    s.max_positions = max_positions;
    return s;
}

LayerSpec LayerSpec::encoder(std::size_t heads, std::size_t ffn_width, double dropout) {
    LayerSpec s;
    s.kind = LayerKind::EncoderBlock;
    s.heads = heads;
    s.ffn_width = ffn_width;
    s.dropout = dropout;
    return s;
}

LayerSpec LayerSpec::sequence_mean() {
    LayerSpec s;
    s.kind = LayerKind::SequenceMean;
    return s;
}

namespace {

std::vector<double> uniform_values(Rng& rng, std::size_t n, double limit) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-limit, limit);
    return v;
}

// Fan-in scaled uniform init; the wider He bound is used ahead of a ReLU.
Tensor init_weight(Rng& rng, Shape shape, std::size_t fan_in, bool relu) {
    const double limit = std::sqrt((relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
    const std::size_t n = ad::numel(shape);
    return Tensor::parameter(std::move(shape), uniform_values(rng, n, limit));
}

Tensor zeros_param(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 0.0)); }
Tensor ones_param(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 1.0)); }

Tensor activate(const Tensor& x, Activation act) { return act == Activation::Relu ? ad::relu(x) : x; }

class DenseLayer final : public Layer {
public:
    DenseLayer(std::size_t in, const LayerSpec& spec, Rng& rng)
        : weight_(init_weight(rng, {in, spec.units}, in, spec.activation == Activation::Relu)),
          bias_(zeros_param(spec.units)), act_(spec.activation), l2_(spec.l2) {}

    Tensor forward(const Tensor& x, ForwardContext&) const override {
        return activate(ad::linear(x, weight_, bias_), act_);
    }
    void collect(std::vector<Parameter>& out, const std::string& prefix) const override {
        out.push_back({prefix + "weight", weight_, l2_});
        out.push_back({prefix + "bias", bias_, false});
    }

private:
    Tensor weight_, bias_;
    Activation act_;
    bool l2_;
};

class Conv1dLayer final : public Layer {
public:
    Conv1dLayer(std::size_t cin, const LayerSpec& spec, Rng& rng)
        : weight_(init_weight(rng, {spec.filters, cin, spec.kernel}, cin * spec.kernel,
                              spec.activation == Activation::Relu)),
          bias_(zeros_param(spec.filters)), stride_(spec.stride), padding_(spec.padding), act_(spec.activation) {}

    Tensor forward(const Tensor& x, ForwardContext&) const override {
        return activate(ad::conv1d(x, weight_, bias_, stride_, padding_), act_);
    }
    void collect(std::vector<Parameter>& out, const std::string& prefix) const override {
        out.push_back({prefix + "weight", weight_, false});
        out.push_back({prefix + "bias", bias_, false});
    }

private:
    Tensor weight_, bias_;
    std::size_t stride_, padding_;
    Activation act_;
};

class PoolLayer final : public Layer {
public:
    PoolLayer(std::size_t size, bool max) : size_(size), max_(max) {}
    Tensor forward(const Tensor& x, ForwardContext&) const override {
        return max_ ? ad::max_pool1d(x, size_) : ad::avg_pool1d(x, size_);
    }

private:
    std::size_t size_;
    bool max_;
};

class DropoutLayer final : public Layer {
public:
    explicit DropoutLayer(double p) : p_(p) {}
    Tensor forward(const Tensor& x, ForwardContext& ctx) const override {
        if (!ctx.training || p_ == 0.0) return x;
        if (!ctx.rng) throw ArgumentError("dropout in training mode requires a random generator");
        return ad::dropout(x, p_, true, *ctx.rng);
    }

private:
    double p_;
};

class LayerNormLayer final : public Layer {
public:
    explicit LayerNormLayer(std::size_t width) : gamma_(ones_param(width)), beta_(zeros_param(width)) {}
    Tensor forward(const Tensor& x, ForwardContext&) const override { return ad::layer_norm(x, gamma_, beta_); }
    void collect(std::vector<Parameter>& out, const std::string& prefix) const override {
        out.push_back({prefix + "gamma", gamma_, false});
        out.push_back({prefix + "beta", beta_, false});
    }

private:
    Tensor gamma_, beta_;
};

class AttentionLayer final : public Layer {
public:
    AttentionLayer(std::size_t width, std::size_t heads, Rng& rng)
        : heads_(heads), width_(width),
          wq_(init_weight(rng, {width, width}, width, false)), bq_(zeros_param(width)),
          wk_(init_weight(rng, {width, width}, width, false)), bk_(zeros_param(width)),
          wv_(init_weight(rng, {width, width}, width, false)), bv_(zeros_param(width)),
          wo_(init_weight(rng, {width, width}, width, false)), bo_(zeros_param(width)) {}

    Tensor forward(const Tensor& x, ForwardContext&) const override {
        const Tensor q = ad::split_heads(ad::linear(x, wq_, bq_), heads_);
        const Tensor k = ad::split_heads(ad::linear(x, wk_, bk_), heads_);
        const Tensor v = ad::split_heads(ad::linear(x, wv_, bv_), heads_);
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width_ / heads_));
        const Tensor weights = ad::softmax(ad::scale(ad::bmm(q, k, true), inv_sqrt));
        return ad::linear(ad::merge_heads(ad::bmm(weights, v), heads_), wo_, bo_);
    }
    void collect(std::vector<Parameter>& out, const std::string& prefix) const override {
        out.push_back({prefix + "wq", wq_, false});
        out.push_back({prefix + "bq", bq_, false});
        out.push_back({prefix + "wk", wk_, false});
        out.push_back({prefix + "bk", bk_, false});
        out.push_back({prefix + "wv", wv_, false});
        out.push_back({prefix + "bv", bv_, false});
        out.push_back({prefix + "wo", wo_, false});
        out.push_back({prefix + "bo", bo_, false});
    }

private:
    std::size_t heads_, width_;
    Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

// Post-norm encoder block: LN(x + Drop(MHA(x))) then LN(y + Drop(FFN(y))).
class EncoderLayer final : public Layer {
public:
    EncoderLayer(std::size_t width, const LayerSpec& spec, Rng& rng)
        : attention_(width, spec.heads, rng), norm1_(width),
          ff1_(width, LayerSpec::dense(spec.ffn_width, Activation::Relu), rng),
          ff2_(spec.ffn_width, LayerSpec::dense(width), rng), norm2_(width), dropout_(spec.dropout) {}

    Tensor forward(const Tensor& x, ForwardContext& ctx) const override {
        const Tensor y = norm1_.forward(ad::add(x, dropout_.forward(attention_.forward(x, ctx), ctx)), ctx);
        const Tensor f = ff2_.forward(ff1_.forward(y, ctx), ctx);
        return norm2_.forward(ad::add(y, dropout_.forward(f, ctx)), ctx);
    }
    void collect(std::vector<Parameter>& out, const std::string& prefix) const override {
        attention_.collect(out, prefix + "attn.");
        norm1_.collect(out, prefix + "norm1.");
        ff1_.collect(out, prefix + "ff1.");
        ff2_.collect(out, prefix + "ff2.");
        norm2_.collect(out, prefix + "norm2.");
    }

private:
    AttentionLayer attention_;
    LayerNormLayer norm1_;
    DenseLayer ff1_, ff2_;
    LayerNormLayer norm2_;
    DropoutLayer dropout_;
};

// Four-gate LSTM (input, forget, cell, output) over [B,T,in].
class LstmLayer final : public Layer {
public:
    LstmLayer(std::size_t in, const LayerSpec& spec, Rng& rng)
        : hidden_(spec.units), return_sequences_(spec.return_sequences) {
        const double limit = 1.0 / std::sqrt(static_cast<double>(hidden_));
        const std::size_t g = 4 * hidden_;
        wx_ = Tensor::parameter({in, g}, uniform_values(rng, in * g, limit));
        wh_ = Tensor::parameter({hidden_, g}, uniform_values(rng, hidden_ * g, limit));
        std::vector<double> b(g, 0.0);
        for (std::size_t j = hidden_; j < 2 * hidden_; ++j) b[j] = 1.0;  // forget gate
        bias_ = Tensor::parameter({g}, std::move(b));
    }

    Tensor forward(const Tensor& x, ForwardContext&) const override {
        const std::size_t batch = x.dim(0), steps = x.dim(1), h = hidden_;
        const Tensor proj = ad::linear(x, wx_, bias_);
        Tensor hs = Tensor::zeros({batch, h});
        Tensor cs = Tensor::zeros({batch, h});
        std::vector<Tensor> outputs;
        if (return_sequences_) outputs.reserve(steps);
        for (std::size_t t = 0; t < steps; ++t) {
            Tensor gates = ad::select_step(proj, t);
            if (t > 0) gates = ad::add(gates, ad::matmul(hs, wh_));
            const Tensor in_gate = ad::sigmoid(ad::slice_columns(gates, 0, h));
            const Tensor forget = ad::sigmoid(ad::slice_columns(gates, h, h));
            const Tensor cell = ad::tanh(ad::slice_columns(gates, 2 * h, h));
            const Tensor out_gate = ad::sigmoid(ad::slice_columns(gates, 3 * h, h));
            cs = t > 0 ? ad::add(ad::mul(forget, cs), ad::mul(in_gate, cell)) : ad::mul(in_gate, cell);
            hs = ad::mul(out_gate, ad::tanh(cs));
            if (return_sequences_) outputs.push_back(hs);
        }
        return return_sequences_ ? ad::stack_steps(outputs) : hs;
    }
    void collect(std::vector<Parameter>& out, const std::string& prefix) const override {
        out.push_back({prefix + "wx", wx_, false});
        out.push_back({prefix + "wh", wh_, false});
        out.push_back({prefix + "bias", bias_, false});
    }

private:
    std::size_t hidden_;
    bool return_sequences_;
    Tensor wx_, wh_, bias_;
};

class FlattenLayer final : public Layer {
public:
    Tensor forward(const Tensor& x, ForwardContext&) const override {
        return ad::reshape(x, {x.dim(0), x.size() / x.dim(0)});
    }
};

class SoftmaxLayer final : public Layer {
public:
    Tensor forward(const Tensor& x, ForwardContext&) const override { return ad::softmax(x); }
};

class ToTokensLayer final : public Layer {
public:
    Tensor forward(const Tensor& x, ForwardContext&) const override { return ad::swap_last_axes(x); }
};

class PositionalLayer final : public Layer {
public:
    PositionalLayer(std::size_t rows, std::size_t width, Rng& rng)
        : table_(Tensor::parameter({rows, width}, uniform_values(rng, rows * width, 0.1))) {}
    Tensor forward(const Tensor& x, ForwardContext&) const override { return ad::add_positional(x, table_); }
    void collect(std::vector<Parameter>& out, const std::string& prefix) const override {
        out.push_back({prefix + "table", table_, false});
    }

private:
    Tensor table_;
};

class SequenceMeanLayer final : public Layer {
public:
    Tensor forward(const Tensor& x, ForwardContext&) const override { return ad::mean_over_steps(x); }
};

[[noreturn]] void bad(const LayerSpec& spec, const Shape& in, const std::string& why) {
    throw ConfigError(std::string(to_string(spec.kind)) + " cannot accept input " + ad::shape_str(in) + ": " + why);
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in, Rng& rng) {
    switch (spec.kind) {
        case LayerKind::Dense: return std::make_unique<DenseLayer>(in.back(), spec, rng);
        case LayerKind::Conv1d: return std::make_unique<Conv1dLayer>(in[0], spec, rng);
        case LayerKind::MaxPool1d: return std::make_unique<PoolLayer>(spec.pool, true);
        case LayerKind::AvgPool1d: return std::make_unique<PoolLayer>(spec.pool, false);
        case LayerKind::Dropout: return std::make_unique<DropoutLayer>(spec.dropout);
        case LayerKind::LayerNorm: return std::make_unique<LayerNormLayer>(in.back());
        case LayerKind::MultiHeadAttention: return std::make_unique<AttentionLayer>(in.back(), spec.heads, rng);
        case LayerKind::Lstm: return std::make_unique<LstmLayer>(in.back(), spec, rng);
        case LayerKind::Flatten: return std::make_unique<FlattenLayer>();
        case LayerKind::Softmax: return std::make_unique<SoftmaxLayer>();
        case LayerKind::ToTokens: return std::make_unique<ToTokensLayer>();
        case LayerKind::PositionalEmbedding:
            return std::make_unique<PositionalLayer>(spec.max_positions, in.back(), rng);
        case LayerKind::EncoderBlock: return std::make_unique<EncoderLayer>(in.back(), spec, rng);
        case LayerKind::SequenceMean: return std::make_unique<SequenceMeanLayer>();
    }
    throw ConfigError("unknown layer kind");
}

}  // namespace

Shape infer_shape(const LayerSpec& spec, const Shape& in) {
    if (in.empty()) bad(spec, in, "empty shape");
    switch (spec.kind) {
        case LayerKind::Dense:
            if (spec.units == 0) bad(spec, in, "zero units");
            if (in.size() > 2) bad(spec, in, "expects [features] or [steps, features]");
            {
                Shape out = in;
                out.back() = spec.units;
                return out;
            }
        case LayerKind::Conv1d: {
            if (in.size() != 2) bad(spec, in, "expects [channels, length]");
            if (spec.filters == 0 || spec.kernel == 0 || spec.stride == 0) bad(spec, in, "zero filters/kernel/stride");
            if (in[1] + 2 * spec.padding < spec.kernel) bad(spec, in, "kernel longer than sequence");
            return {spec.filters, (in[1] + 2 * spec.padding - spec.kernel) / spec.stride + 1};
        }
        case LayerKind::MaxPool1d:
        case LayerKind::AvgPool1d:
            if (in.size() != 2) bad(spec, in, "expects [channels, length]");
            if (spec.pool == 0) bad(spec, in, "zero pool size");
            if (in[1] / spec.pool < 1)
                bad(spec, in, "pooling " + std::to_string(spec.pool) + " collapses the sequence below length 1");
            return {in[0], in[1] / spec.pool};
        case LayerKind::Dropout:
            if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) bad(spec, in, "dropout probability outside [0,1)");
            return in;
        case LayerKind::LayerNorm:
        case LayerKind::Softmax:
            return in;
        case LayerKind::MultiHeadAttention:
        case LayerKind::EncoderBlock:
            if (in.size() != 2) bad(spec, in, "expects [tokens, width]");
            if (spec.heads == 0 || in[1] % spec.heads != 0) bad(spec, in, "width not divisible by head count");
            if (spec.kind == LayerKind::EncoderBlock && spec.ffn_width == 0) bad(spec, in, "zero feed-forward width");
            return in;
        case LayerKind::Lstm:
            if (in.size() != 2) bad(spec, in, "expects [steps, features]");
            if (spec.units == 0) bad(spec, in, "zero hidden units");
            return spec.return_sequences ? Shape{in[0], spec.units} : Shape{spec.units};
        case LayerKind::Flatten: return {ad::numel(in)};
        case LayerKind::ToTokens:
            if (in.size() != 2) bad(spec, in, "expects [channels, length]");
            return {in[1], in[0]};
        case LayerKind::PositionalEmbedding:
            if (in.size() != 2) bad(spec, in, "expects [tokens, width]");
            if (spec.max_positions < in[0]) bad(spec, in, "more tokens than positional table rows");
            return in;
        case LayerKind::SequenceMean:
            if (in.size() != 2) bad(spec, in, "expects [tokens, width]");
            return {in[1]};
    }
    bad(spec, in, "unknown kind");
}

Model::Model(std::vector<LayerSpec> specs, Shape sample_shape, std::uint64_t init_seed, bool variable_length)
    : specs_(std::move(specs)), sample_shape_(std::move(sample_shape)), variable_length_(variable_length) {
    if (specs_.empty()) throw ConfigError("model has no layers");
    Rng rng(init_seed);
    Shape shape = sample_shape_;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        Shape next;
        try {
            next = infer_shape(specs_[i], shape);
        } catch (const ConfigError& e) {
            const std::string prev = i == 0 ? "input" : "layer " + std::to_string(i - 1) + " (" +
                                                            std::string(to_string(specs_[i - 1].kind)) + ")";
            throw ConfigError("layer " + std::to_string(i) + " (" + std::string(to_string(specs_[i].kind)) +
                              ") after " + prev + ": " + e.what());
        }
        layers_.push_back(make_layer(specs_[i], shape, rng));
        layers_.back()->collect(params_, std::to_string(i) + "." + std::string(to_string(specs_[i].kind)) + ".");
        shape = std::move(next);
    }
    output_shape_ = std::move(shape);
}

Tensor Model::forward(const Tensor& batch, ForwardContext& ctx) const {
    Shape got(batch.shape().begin() + 1, batch.shape().end());
    const bool ok = variable_length_
                        ? got.size() == sample_shape_.size() && got.front() == sample_shape_.front()
                        : got == sample_shape_;
    if (batch.rank() < 2 || !ok)
        throw ConfigError("input " + ad::shape_str(batch.shape()) + " does not match model input [B," +
                          ad::shape_str(sample_shape_).substr(1));
    Tensor x = batch;
    for (const auto& layer : layers_) x = layer->forward(x, ctx);
    return x;
}

Tensor Model::forward(const Tensor& batch) const {
    ForwardContext ctx;
    return forward(batch, ctx);
}

std::vector<Tensor> Model::parameter_tensors() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.tensor);
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
}

}  // namespace fdi::nn
