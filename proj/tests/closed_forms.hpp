#pragma once

// Parameter counts written out by hand from the layer definitions, without
// going through the layer list that build_model produces.

#include <cstddef>

#include "fdi/models.hpp"

namespace fdi::testing {

inline std::size_t dense_params(std::size_t in, std::size_t out) { return in * out + out; }
inline std::size_t conv_params(std::size_t cin, std::size_t filters, std::size_t k) { return filters * cin * k + filters; }
inline std::size_t lstm_params(std::size_t in, std::size_t h) { return 4 * ((in + h) * h + h); }
// Q, K, V and output projections, two layer norms, two feed-forward layers.
inline std::size_t encoder_params(std::size_t d, std::size_t ffn) {
    return 4 * (d * d + d) + 2 * (2 * d) + dense_params(d, ffn) + dense_params(ffn, d);
}

inline std::size_t expected_parameters(const HyperParams& hp, std::size_t channels, std::size_t length) {
    std::size_t n = 0;
    switch (hp.kind) {
        case ModelKind::MLP: {
            std::size_t in = channels * length;
            for (std::size_t i = 0; i < hp.fc_layers; ++i, in = hp.fc_units) n += dense_params(in, hp.fc_units);
            return n + dense_params(in, 3);
        }
        case ModelKind::CNN: {
            std::size_t cin = channels, len = length;
            for (std::size_t i = 0; i < *hp.depth; ++i) {
                n += conv_params(cin, kConvFilters, *hp.kernel);
                cin = kConvFilters;
                len /= *hp.pool;
            }
            std::size_t in = kConvFilters * len;
            for (std::size_t i = 0; i < hp.fc_layers; ++i, in = hp.fc_units) n += dense_params(in, hp.fc_units);
            return n + dense_params(in, 3);
        }
        case ModelKind::LSTM: {
            n = lstm_params(channels, kLstmHidden) + (*hp.depth - 1) * lstm_params(kLstmHidden, kLstmHidden);
            return n + dense_params(kLstmHidden, 3);
        }
        case ModelKind::Transformer: {
            const std::size_t d = *hp.embedding;
            n = conv_params(channels, d, *hp.kernel) + kMaxPositions * d;
            n += *hp.depth * encoder_params(d, hp.fc_units);
            return n + dense_params(d, 3);
        }
        case ModelKind::ViT: {
            const std::size_t d = *hp.embedding;
            const std::size_t patches = (length - *hp.kernel) / *hp.kernel + 1;
            const std::size_t tokens = patches / *hp.pool;
            n = conv_params(channels, d, *hp.kernel) + (tokens ? tokens : 1) * d;
            n += *hp.depth * encoder_params(d, hp.fc_units);
            std::size_t in = d;
            for (std::size_t i = 0; i < hp.fc_layers; ++i, in = hp.fc_units) n += dense_params(in, hp.fc_units);
            return n + dense_params(in, 3);
        }
    }
    return 0;
}

}  // namespace fdi::testing
