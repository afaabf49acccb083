#include "tsformer/model_config.hpp"

#include <algorithm>
#include <string>

#include "tsformer/errors.hpp"

namespace tsformer {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (encoder_input_length == 0) fail("encoder_input_length must be positive");
    if (decoder_input_length == 0) fail("decoder_input_length must be positive");
    if (forecast_horizon == 0) fail("forecast_horizon must be positive");
    if (d_model == 0 || heads == 0) fail("d_model and heads must be positive");
    if (d_model % heads != 0) {
        fail("d_model " + std::to_string(d_model) + " is not divisible by heads " + std::to_string(heads));
    }
    if (d_model % 2 != 0) fail("d_model must be even for sinusoidal positional encoding");
    if (encoder_layers == 0 || decoder_layers == 0) fail("layer counts must be positive");
    if (ffn_dim == 0) fail("ffn_dim must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (feature_dim == 0) fail("feature_dim must be positive");
    if (forecast_horizon > decoder_input_length) {
        fail("forecast_horizon " + std::to_string(forecast_horizon) + " exceeds decoder_input_length " +
             std::to_string(decoder_input_length));
    }
    if (decoder_input_length > encoder_input_length + forecast_horizon) {
        fail("decoder_input_length exceeds encoder_input_length + forecast_horizon");
    }
    if (decoder_input_length > encoder_input_length) {
        fail("decoder_input_length " + std::to_string(decoder_input_length) + " exceeds encoder_input_length " +
             std::to_string(encoder_input_length) + " (memory mask needs L_enc >= L_dec)");
    }
}

ModelConfig with_horizon(const ModelConfig& base, std::size_t horizon) {
    ModelConfig cfg = base;
    const std::size_t overlap = base.decoder_input_length > base.forecast_horizon ? base.overlap() : 0;
    cfg.forecast_horizon = horizon;
    cfg.decoder_input_length = overlap + horizon;
    cfg.encoder_input_length = std::max(base.encoder_input_length, cfg.decoder_input_length);
    return cfg;
}

}  // namespace tsformer
