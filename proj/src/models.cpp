#include "fdi/models.hpp"

#include <algorithm>
#include <cmath>

#include "fdi/errors.hpp"
#include "fdi/rng.hpp"

namespace fdi {

using nn::Activation;
using nn::LayerSpec;

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::MLP: return "MLP";
        case ModelKind::CNN: return "CNN";
        case ModelKind::LSTM: return "LSTM";
        case ModelKind::Transformer: return "Transformer";
        case ModelKind::ViT: return "ViT";
    }
    return "MLP";
}

ModelKind parse_model_kind(std::string_view name) {
    for (ModelKind k : kAllModels)
        if (name == to_string(k)) return k;
    throw ConfigError("unknown model kind '" + std::string(name) + "' (expected MLP, CNN, LSTM, Transformer or ViT)");
}

bool IntDomain::contains(std::int64_t v) const {
    if (!choices.empty()) return std::find(choices.begin(), choices.end(), v) != choices.end();
    return v >= lo && v <= hi;
}

bool IntDomain::subset_of(const IntDomain& other) const {
    if (!choices.empty())
        return std::all_of(choices.begin(), choices.end(), [&](std::int64_t v) { return other.contains(v); });
    if (lo > hi) return false;
    if (other.choices.empty()) return lo >= other.lo && hi <= other.hi;
    for (std::int64_t v = lo; v <= hi; ++v)
        if (!other.contains(v)) return false;
    return true;
}

SearchSpace SearchSpace::table(ModelKind kind) {
    SearchSpace s;
    s.kind = kind;
    const IntDomain powers = IntDomain::set({16, 32, 64, 128, 256});
    switch (kind) {
        case ModelKind::MLP:
            s.fc_layers = IntDomain::range(1, 10);
            s.fc_units = IntDomain::range(1, 2048);
            s.l2 = {{1e-3, 0.1}};
            break;
        case ModelKind::CNN:
            s.fc_layers = IntDomain::range(1, 6);
            s.fc_units = IntDomain::range(1, 2048);
            s.l2 = {{1e-3, 0.1}};
            s.depth = IntDomain::range(1, 8);
            s.kernel = IntDomain::set({1, 3, 5});
            s.pool = IntDomain::set({1, 2});
            break;
        case ModelKind::LSTM:
            s.fc_layers = IntDomain::set({1});
            s.fc_units = IntDomain::set({1});
            s.depth = IntDomain::range(1, 5);
            break;
        case ModelKind::Transformer:
            s.fc_layers = IntDomain::set({1});
            s.fc_units = IntDomain::set({64});
            s.depth = IntDomain::range(1, 8);
            s.kernel = IntDomain::set({8, 16});
            s.embedding = powers;
            break;
        case ModelKind::ViT:
            s.fc_layers = IntDomain::range(1, 4);
            s.fc_units = IntDomain::set({64});
            s.depth = IntDomain::set({5});
            s.kernel = IntDomain::set({2, 3});
            s.pool = IntDomain::set({2, 3});
            s.embedding = powers;
            break;
    }
    return s;
}

void SearchSpace::validate() const {
    const SearchSpace full = table(kind);
    const std::string where = "search space for " + std::string(to_string(kind)) + ": ";
    auto check = [&](const IntDomain& d, const IntDomain& f, const char* name) {
        if (!d.subset_of(f)) throw ConfigError(where + name + " outside the allowed range");
    };
    auto check_opt = [&](const std::optional<IntDomain>& d, const std::optional<IntDomain>& f, const char* name) {
        if (d.has_value() != f.has_value()) throw ConfigError(where + name + (f ? " is required" : " is not used"));
        if (d) check(*d, *f, name);
    };
    check(fc_layers, full.fc_layers, "fc_layers");
    check(fc_units, full.fc_units, "fc_units");
    if (!(dropout_max > 0.0 && dropout_max <= full.dropout_max)) throw ConfigError(where + "dropout_max outside (0, 0.5]");
    if (l2.has_value() != full.l2.has_value()) throw ConfigError(where + (full.l2 ? "l2 is required" : "l2 is not used"));
    if (l2 && !(l2->first >= full.l2->first && l2->second <= full.l2->second && l2->first <= l2->second))
        throw ConfigError(where + "l2 outside [1e-3, 0.1]");
    check_opt(depth, full.depth, "depth");
    check_opt(kernel, full.kernel, "kernel");
    check_opt(pool, full.pool, "pool");
    check_opt(embedding, full.embedding, "embedding");
}

bool SearchSpace::contains(const HyperParams& hp) const {
    auto in = [](const std::optional<IntDomain>& d, const std::optional<std::size_t>& v) {
        if (d.has_value() != v.has_value()) return false;
        return !d || d->contains(static_cast<std::int64_t>(*v));
    };
    if (hp.kind != kind) return false;
    if (!fc_layers.contains(static_cast<std::int64_t>(hp.fc_layers))) return false;
    if (!fc_units.contains(static_cast<std::int64_t>(hp.fc_units))) return false;
    if (!(hp.dropout >= 0.0 && hp.dropout < dropout_max)) return false;
    if (l2.has_value() != hp.l2.has_value()) return false;
    if (l2 && !(*hp.l2 >= l2->first && *hp.l2 <= l2->second)) return false;
    return in(depth, hp.depth) && in(kernel, hp.kernel) && in(pool, hp.pool) && in(embedding, hp.embedding);
}

namespace {

std::size_t draw(const IntDomain& d, Rng& rng) {
    if (!d.choices.empty()) return static_cast<std::size_t>(d.choices[rng.index(d.choices.size())]);
    return static_cast<std::size_t>(rng.integer(d.lo, d.hi));
}

std::optional<std::size_t> draw(const std::optional<IntDomain>& d, Rng& rng) {
    if (!d) return std::nullopt;
    return draw(*d, rng);
}

}  // namespace

HyperParams sample_hyperparams(const SearchSpace& space, std::uint64_t seed) {
    Rng rng(seed);
    HyperParams hp;
    hp.kind = space.kind;
    hp.fc_layers = draw(space.fc_layers, rng);
    hp.fc_units = draw(space.fc_units, rng);
    hp.dropout = rng.uniform(0.0, space.dropout_max);
    if (space.l2) hp.l2 = std::exp(rng.uniform(std::log(space.l2->first), std::log(space.l2->second)));
    hp.depth = draw(space.depth, rng);
    hp.kernel = draw(space.kernel, rng);
    hp.pool = draw(space.pool, rng);
    hp.embedding = draw(space.embedding, rng);
    return hp;
}

HyperParams sample_hyperparams(ModelKind kind, std::uint64_t seed) {
    return sample_hyperparams(SearchSpace::table(kind), seed);
}

std::size_t attention_heads(std::size_t width) { return std::max<std::size_t>(1, width / 16); }

namespace {

std::size_t require_field(const std::optional<std::size_t>& v, const char* name, const HyperParams& hp) {
    if (!v) throw ConfigError(std::string(to_string(hp.kind)) + " requires hyperparameter " + name);
    return *v;
}

void dense_stack(std::vector<LayerSpec>& out, const HyperParams& hp, std::size_t units, bool l2) {
    for (std::size_t i = 0; i < hp.fc_layers; ++i) {
        out.push_back(LayerSpec::dense(units, Activation::Relu, l2));
        out.push_back(LayerSpec::dropout_layer(hp.dropout));
    }
}

}  // namespace

std::vector<LayerSpec> architecture(const HyperParams& hp, const nn::Shape& input_shape) {
    if (input_shape.size() != 2) throw ConfigError("models expect [channels, length] inputs");
    if (!(hp.dropout >= 0.0 && hp.dropout < 0.5)) throw ConfigError("dropout must lie in [0, 0.5)");
    if (hp.fc_layers == 0 || hp.fc_units == 0) throw ConfigError("dense layer count and width must be positive");
    const std::size_t length = input_shape[1];
    std::vector<LayerSpec> out;
    const bool l2 = hp.l2.has_value();
    switch (hp.kind) {
        case ModelKind::MLP:
            out.push_back(LayerSpec::flatten());
            dense_stack(out, hp, hp.fc_units, l2);
            out.push_back(LayerSpec::dense(3, Activation::None, l2));
            break;
        case ModelKind::CNN: {
            const std::size_t depth = require_field(hp.depth, "depth", hp);
            const std::size_t k = require_field(hp.kernel, "kernel", hp);
            const std::size_t pool = require_field(hp.pool, "pool", hp);
            for (std::size_t i = 0; i < depth; ++i) {
                out.push_back(LayerSpec::conv1d(kConvFilters, k, 1, (k - 1) / 2, Activation::Relu));
                out.push_back(LayerSpec::max_pool1d(pool));
            }
            out.push_back(LayerSpec::flatten());
            dense_stack(out, hp, hp.fc_units, l2);
            out.push_back(LayerSpec::dense(3, Activation::None, l2));
            break;
        }
        case ModelKind::LSTM: {
            const std::size_t depth = require_field(hp.depth, "depth", hp);
            out.push_back(LayerSpec::to_tokens());
            for (std::size_t i = 0; i < depth; ++i) out.push_back(LayerSpec::lstm(kLstmHidden, i + 1 < depth));
            out.push_back(LayerSpec::dropout_layer(hp.dropout));
            out.push_back(LayerSpec::dense(3));
            break;
        }
        case ModelKind::Transformer: {
            const std::size_t depth = require_field(hp.depth, "depth", hp);
            const std::size_t k = require_field(hp.kernel, "kernel", hp);
            const std::size_t width = require_field(hp.embedding, "embedding", hp);
            out.push_back(LayerSpec::conv1d(width, k, k));
            out.push_back(LayerSpec::to_tokens());
            out.push_back(LayerSpec::positional(kMaxPositions));
            for (std::size_t i = 0; i < depth; ++i)
                out.push_back(LayerSpec::encoder(attention_heads(width), hp.fc_units, hp.dropout));
            out.push_back(LayerSpec::sequence_mean());
            out.push_back(LayerSpec::dense(3));
            break;
        }
        case ModelKind::ViT: {
            const std::size_t depth = require_field(hp.depth, "depth", hp);
            const std::size_t k = require_field(hp.kernel, "kernel", hp);
            const std::size_t pool = require_field(hp.pool, "pool", hp);
            const std::size_t width = require_field(hp.embedding, "embedding", hp);
            const std::size_t patches = length >= k ? (length - k) / k + 1 : 0;
            out.push_back(LayerSpec::conv1d(width, k, k));
            out.push_back(LayerSpec::avg_pool1d(pool));
            out.push_back(LayerSpec::to_tokens());
            out.push_back(LayerSpec::positional(std::max<std::size_t>(1, patches / pool)));
            for (std::size_t i = 0; i < depth; ++i)
                out.push_back(LayerSpec::encoder(attention_heads(width), hp.fc_units, hp.dropout));
            out.push_back(LayerSpec::sequence_mean());
            dense_stack(out, hp, hp.fc_units, false);
            out.push_back(LayerSpec::dense(3));
            break;
        }
    }
    return out;
}

ModelInstance build_model(const HyperParams& hp, const nn::Shape& input_shape, std::uint64_t init_seed) {
    const bool variable = hp.kind == ModelKind::LSTM || hp.kind == ModelKind::Transformer;
    return ModelInstance{hp, input_shape, nn::Model(architecture(hp, input_shape), input_shape, init_seed, variable)};
}

std::size_t count_parameters(const ModelInstance& m) { return m.model.parameter_count(); }

}  // namespace fdi
