#pragma once

#include <cstddef>

namespace tsformer {

/// Window lengths and network width/depth. Defaults are the reference
/// 1-day-ahead configuration: 7/5 windows, d_model 32, 4 heads, 4+4 layers.
struct ModelConfig {
    std::size_t encoder_input_length = 7;
    std::size_t decoder_input_length = 5;
    std::size_t forecast_horizon = 1;
    std::size_t d_model = 32;
    std::size_t heads = 4;
    std::size_t encoder_layers = 4;
    std::size_t decoder_layers = 4;
    std::size_t ffn_dim = 64;
    double dropout = 0.1;
    std::size_t feature_dim = 0;
    /// Disabling this exists for permutation-equivariance experiments only.
    bool positional_encoding = true;

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;

    std::size_t head_dim() const { return d_model / heads; }
    /// Decoder rows holding observed days (the encoder/decoder overlap).
    std::size_t overlap() const { return decoder_input_length - forecast_horizon; }

    bool operator==(const ModelConfig&) const = default;
};

/// Resizes the windows of `base` for horizon `h` while keeping its overlap:
/// decoder length becomes overlap + h and the encoder grows to at least the
/// decoder length so the memory mask stays well formed.
ModelConfig with_horizon(const ModelConfig& base, std::size_t horizon);

}  // namespace tsformer
