#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tsformer/data.hpp"
#include "tsformer/model_config.hpp"
#include "tsformer/numcore.hpp"

namespace tsformer {

using nc::Tensor;

/// Fixed sinusoidal table: sin at even dims, cos at odd dims.
Tensor sinusoidal_positional_encoding(std::size_t length, std::size_t d_model);

// Additive masks over {0, -inf}. Rows are query steps, columns key steps.
Tensor build_encoder_source_mask(std::size_t encoder_length);
Tensor build_decoder_target_mask(std::size_t decoder_length);
/// Decoder step i may attend encoder steps j <= i + (L_enc - L_dec).
Tensor build_decoder_memory_mask(std::size_t decoder_length, std::size_t encoder_length);

struct MaskSet {
    Tensor encoder_source;
    Tensor decoder_target;
    Tensor decoder_memory;

    static MaskSet for_config(const ModelConfig& config);
};

/// Post-softmax weights of one attention sublayer, laid out [head][row][col].
struct LayerAttention {
    std::size_t heads = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> weights;

    double at(std::size_t head, std::size_t row, std::size_t col) const {
        return weights[(head * rows + row) * cols + col];
    }
};

struct AttentionTrace {
    std::vector<LayerAttention> encoder_self;
    std::vector<LayerAttention> decoder_self;
    std::vector<LayerAttention> decoder_cross;
};

struct AttentionParams {
    Tensor query, key, value, output;  // each [d_model x d_model]
};

struct FeedForwardParams {
    Tensor w1, b1, w2, b2;
};

struct NormParams {
    Tensor gamma, beta;
};

struct EncoderLayerParams {
    AttentionParams self_attention;
    FeedForwardParams ffn;
    NormParams norm1, norm2;
};

struct DecoderLayerParams {
    AttentionParams self_attention;
    AttentionParams cross_attention;
    FeedForwardParams ffn;
    NormParams norm1, norm2, norm3;
};

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

/// Parameter names and shapes implied by a configuration, in canonical order.
std::vector<std::pair<std::string, nc::Shape>> parameter_layout(const ModelConfig& config);

/// The encoder-decoder forecasting network and its parameters.
///
/// Copying a model deep-copies its parameters.
class TsformerModel {
public:
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    TsformerModel(const ModelConfig& config, std::uint64_t seed);
    /// Builds a model from explicit values; every parameter of the layout must
    /// be present with the audited shape.
    TsformerModel(const ModelConfig& config, const std::map<std::string, Tensor>& values);

    TsformerModel(const TsformerModel& other);
    TsformerModel& operator=(const TsformerModel& other);
    TsformerModel(TsformerModel&&) noexcept = default;
    TsformerModel& operator=(TsformerModel&&) noexcept = default;

    const ModelConfig& config() const { return config_; }
    const MaskSet& masks() const { return masks_; }
    /// Replaces the masks; used by equivariance experiments.
    void set_masks(MaskSet masks) { masks_ = std::move(masks); }

    const std::vector<NamedParameter>& parameters() const { return parameters_; }
    std::size_t parameter_count() const;
    Tensor parameter(const std::string& name) const;

    /// Copies every parameter value from a model of identical layout.
    void assign_values(const TsformerModel& other);

    /// Throws ShapeError naming the first parameter whose shape is off.
    void audit() const;

private:
    friend struct ModelInternals;
    void bind();

    ModelConfig config_;
    MaskSet masks_;
    std::vector<NamedParameter> parameters_;

    Tensor encoder_input_w_, encoder_input_b_;
    Tensor decoder_input_w_, decoder_input_b_;
    std::vector<EncoderLayerParams> encoder_layers_;
    std::vector<DecoderLayerParams> decoder_layers_;
    Tensor output_w_, output_b_;
};

struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
    bool record_trace = false;
};

struct AttentionResult {
    Tensor output;
    Tensor weights;
};

AttentionResult scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask);

struct MultiHeadResult {
    Tensor output;
    std::vector<Tensor> head_weights;
};

MultiHeadResult multi_head_attention(const Tensor& x_q, const Tensor& x_kv, const Tensor& mask,
                                     const AttentionParams& params, std::size_t heads);

Tensor feed_forward(const Tensor& x, const FeedForwardParams& params);

struct EncoderResult {
    Tensor memory;
    std::vector<LayerAttention> self_attention;
};

EncoderResult encoder_forward(const Tensor& x, const TsformerModel& model, const ForwardContext& ctx);

struct DecoderResult {
    Tensor output;  // [L_dec x 1]
    std::vector<LayerAttention> self_attention;
    std::vector<LayerAttention> cross_attention;
};

DecoderResult decoder_forward(const Tensor& y, const Tensor& memory, const TsformerModel& model,
                              const ForwardContext& ctx);

struct ForwardResult {
    Tensor forecasts;  // [L_dec x 1]; the last h rows forecast the unknown days
    AttentionTrace trace;
};

ForwardResult forward(const data::WindowSample& sample, const TsformerModel& model, const ForwardContext& ctx);

/// Normalized forecasts for the h token rows of a sample (inference mode).
std::vector<double> predict_tokens(const data::WindowSample& sample, const TsformerModel& model);

}  // namespace tsformer
