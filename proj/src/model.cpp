#include "tsformer/model.hpp"

#include <cmath>
#include <limits>

#include "tsformer/errors.hpp"

namespace tsformer {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor band_mask(std::size_t rows, std::size_t cols, std::size_t offset) {
    std::vector<double> m(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            if (j > i + offset) m[i * cols + j] = kNegInf;
    return Tensor::matrix(rows, cols, std::move(m));
}
}  // namespace

Tensor sinusoidal_positional_encoding(std::size_t length, std::size_t d_model) {
    if (length == 0) throw ConfigError("positional encoding: length must be positive");
    if (d_model == 0 || d_model % 2 != 0) {
        throw ConfigError("positional encoding: d_model must be even, got " + std::to_string(d_model));
    }
    std::vector<double> pe(length * d_model);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < d_model / 2; ++i) {
            const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) / freq;
            pe[pos * d_model + 2 * i] = std::sin(angle);
            pe[pos * d_model + 2 * i + 1] = std::cos(angle);
        }
    }
    return Tensor::matrix(length, d_model, std::move(pe));
}

Tensor build_encoder_source_mask(std::size_t encoder_length) {
    if (encoder_length == 0) throw ConfigError("encoder source mask: length must be positive");
    return band_mask(encoder_length, encoder_length, 0);
}

Tensor build_decoder_target_mask(std::size_t decoder_length) {
    if (decoder_length == 0) throw ConfigError("decoder target mask: length must be positive");
    return band_mask(decoder_length, decoder_length, 0);
}

Tensor build_decoder_memory_mask(std::size_t decoder_length, std::size_t encoder_length) {
    if (decoder_length == 0) throw ConfigError("decoder memory mask: length must be positive");
    if (decoder_length > encoder_length) {
        throw ConfigError("decoder memory mask: decoder length " + std::to_string(decoder_length) +
                          " exceeds encoder length " + std::to_string(encoder_length));
    }
    return band_mask(decoder_length, encoder_length, encoder_length - decoder_length);
}

MaskSet MaskSet::for_config(const ModelConfig& config) {
    return {build_encoder_source_mask(config.encoder_input_length),
            build_decoder_target_mask(config.decoder_input_length),
            build_decoder_memory_mask(config.decoder_input_length, config.encoder_input_length)};
}

// ---------------------------------------------------------------- parameters

std::vector<std::pair<std::string, nc::Shape>> parameter_layout(const ModelConfig& config) {
    const std::size_t d = config.d_model, f = config.ffn_dim;
    std::vector<std::pair<std::string, nc::Shape>> out;
    auto attention = [&](const std::string& p) {
        for (const char* r : {"wq", "wk", "wv", "wo"}) out.push_back({p + r, {d, d}});
    };
    auto ffn = [&](const std::string& p) {
        out.push_back({p + "w1", {d, f}});
        out.push_back({p + "b1", {f}});
        out.push_back({p + "w2", {f, d}});
        out.push_back({p + "b2", {d}});
    };
    auto norm = [&](const std::string& p) {
        out.push_back({p + "gamma", {d}});
        out.push_back({p + "beta", {d}});
    };
    out.push_back({"enc.input.w", {config.feature_dim, d}});
    out.push_back({"enc.input.b", {d}});
    for (std::size_t l = 0; l < config.encoder_layers; ++l) {
        const std::string p = "enc." + std::to_string(l) + ".";
        attention(p + "self.");
        ffn(p + "ffn.");
        norm(p + "norm1.");
        norm(p + "norm2.");
    }
    out.push_back({"dec.input.w", {config.feature_dim, d}});
    out.push_back({"dec.input.b", {d}});
    for (std::size_t l = 0; l < config.decoder_layers; ++l) {
        const std::string p = "dec." + std::to_string(l) + ".";
        attention(p + "self.");
        attention(p + "cross.");
        ffn(p + "ffn.");
        norm(p + "norm1.");
        norm(p + "norm2.");
        norm(p + "norm3.");
    }
    out.push_back({"out.w", {d, 1}});
    out.push_back({"out.b", {1}});
    return out;
}

namespace {
bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace

TsformerModel::TsformerModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    masks_ = MaskSet::for_config(config_);
    std::mt19937_64 rng(seed);
    for (auto& [name, shape] : parameter_layout(config_)) {
        Tensor t = Tensor::zeros(shape, true);
        if (shape.size() == 2) {
            const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto& v : t.mutable_values()) v = dist(rng);
        } else if (ends_with(name, "gamma")) {
            for (auto& v : t.mutable_values()) v = 1.0;
        }
        parameters_.push_back({name, t});
    }
    bind();
}

TsformerModel::TsformerModel(const ModelConfig& config, const std::map<std::string, Tensor>& values)
    : config_(config) {
    config_.validate();
    masks_ = MaskSet::for_config(config_);
    const auto layout = parameter_layout(config_);
    for (const auto& [name, shape] : layout) {
        auto it = values.find(name);
        if (it == values.end()) throw ShapeError("parameter " + name + " is missing");
        if (it->second.shape() != shape) {
            throw ShapeError("parameter " + name + " has shape " + nc::shape_string(it->second.shape()) +
                             ", expected " + nc::shape_string(shape));
        }
        parameters_.push_back({name, it->second.clone(true)});
    }
    if (values.size() != layout.size()) {
        for (const auto& [name, _] : values) {
            bool known = false;
            for (const auto& l : layout) known = known || l.first == name;
            if (!known) throw ShapeError("unexpected parameter " + name);
        }
    }
    bind();
}

TsformerModel::TsformerModel(const TsformerModel& other) : config_(other.config_), masks_(other.masks_) {
    for (const auto& p : other.parameters_) parameters_.push_back({p.name, p.tensor.clone(true)});
    bind();
}

TsformerModel& TsformerModel::operator=(const TsformerModel& other) {
    if (this != &other) {
        TsformerModel copy(other);
        *this = std::move(copy);
    }
    return *this;
}

std::size_t TsformerModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters_) n += p.tensor.size();
    return n;
}

Tensor TsformerModel::parameter(const std::string& name) const {
    for (const auto& p : parameters_)
        if (p.name == name) return p.tensor;
    throw ConfigError("no parameter named " + name);
}

void TsformerModel::assign_values(const TsformerModel& other) {
    if (other.parameters_.size() != parameters_.size()) throw ShapeError("assign_values: layout mismatch");
    for (std::size_t i = 0; i < parameters_.size(); ++i) {
        if (parameters_[i].name != other.parameters_[i].name ||
            parameters_[i].tensor.shape() != other.parameters_[i].tensor.shape()) {
            throw ShapeError("assign_values: parameter " + parameters_[i].name + " differs");
        }
        auto dst = parameters_[i].tensor.mutable_values();
        auto src = other.parameters_[i].tensor.values();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

void TsformerModel::audit() const {
    const auto layout = parameter_layout(config_);
    if (layout.size() != parameters_.size()) {
        throw ShapeError("model has " + std::to_string(parameters_.size()) + " parameters, layout expects " +
                         std::to_string(layout.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (parameters_[i].name != layout[i].first) {
            throw ShapeError("parameter " + std::to_string(i) + " is " + parameters_[i].name + ", expected " +
                             layout[i].first);
        }
        if (parameters_[i].tensor.shape() != layout[i].second) {
            throw ShapeError("parameter " + layout[i].first + " has shape " +
                             nc::shape_string(parameters_[i].tensor.shape()) + ", expected " +
                             nc::shape_string(layout[i].second));
        }
    }
}

void TsformerModel::bind() {
    std::size_t i = 0;
    auto next = [&]() -> Tensor { return parameters_.at(i++).tensor; };
    auto attention = [&]() { return AttentionParams{next(), next(), next(), next()}; };
    auto ffn = [&]() {
        FeedForwardParams p;
        p.w1 = next();
        p.b1 = next();
        p.w2 = next();
        p.b2 = next();
        return p;
    };
    auto norm = [&]() {
        NormParams p;
        p.gamma = next();
        p.beta = next();
        return p;
    };
    encoder_input_w_ = next();
    encoder_input_b_ = next();
    encoder_layers_.clear();
    for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
        EncoderLayerParams p;
        p.self_attention = attention();
        p.ffn = ffn();
        p.norm1 = norm();
        p.norm2 = norm();
        encoder_layers_.push_back(std::move(p));
    }
    decoder_input_w_ = next();
    decoder_input_b_ = next();
    decoder_layers_.clear();
    for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
        DecoderLayerParams p;
        p.self_attention = attention();
        p.cross_attention = attention();
        p.ffn = ffn();
        p.norm1 = norm();
        p.norm2 = norm();
        p.norm3 = norm();
        decoder_layers_.push_back(std::move(p));
    }
    output_w_ = next();
    output_b_ = next();
}

struct ModelInternals {
    static const Tensor& encoder_w(const TsformerModel& m) { return m.encoder_input_w_; }
    static const Tensor& encoder_b(const TsformerModel& m) { return m.encoder_input_b_; }
    static const Tensor& decoder_w(const TsformerModel& m) { return m.decoder_input_w_; }
    static const Tensor& decoder_b(const TsformerModel& m) { return m.decoder_input_b_; }
    static const std::vector<EncoderLayerParams>& encoder_layers(const TsformerModel& m) {
        return m.encoder_layers_;
    }
    static const std::vector<DecoderLayerParams>& decoder_layers(const TsformerModel& m) {
        return m.decoder_layers_;
    }
    static const Tensor& output_w(const TsformerModel& m) { return m.output_w_; }
    static const Tensor& output_b(const TsformerModel& m) { return m.output_b_; }
};

// ---------------------------------------------------------------- forward

AttentionResult scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask) {
    if (q.cols() != k.cols() || k.rows() != v.rows()) {
        throw ShapeError("attention: incompatible q " + nc::shape_string(q.shape()) + ", k " +
                         nc::shape_string(k.shape()) + ", v " + nc::shape_string(v.shape()));
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor scores = nc::scale(nc::matmul_nt(q, k), inv_sqrt_dk);
    Tensor weights = nc::masked_softmax(scores, mask);
    return {nc::matmul(weights, v), weights};
}

MultiHeadResult multi_head_attention(const Tensor& x_q, const Tensor& x_kv, const Tensor& mask,
                                     const AttentionParams& params, std::size_t heads) {
    const std::size_t d_model = x_q.cols();
    if (heads == 0 || d_model % heads != 0 || x_kv.cols() != d_model) {
        throw ShapeError("multi-head attention: d_model " + std::to_string(d_model) + " with " +
                         std::to_string(heads) + " heads and key width " + std::to_string(x_kv.cols()));
    }
    const std::size_t dk = d_model / heads;
    Tensor q = nc::matmul(x_q, params.query);
    Tensor k = nc::matmul(x_kv, params.key);
    Tensor v = nc::matmul(x_kv, params.value);
    MultiHeadResult result;
    std::vector<Tensor> outputs;
    if (heads == 1) {
        auto att = scaled_dot_product_attention(q, k, v, mask);
        outputs.push_back(att.output);
        result.head_weights.push_back(att.weights);
    } else {
        for (std::size_t h = 0; h < heads; ++h) {
            auto att = scaled_dot_product_attention(nc::slice_cols(q, h * dk, dk), nc::slice_cols(k, h * dk, dk),
                                                    nc::slice_cols(v, h * dk, dk), mask);
            outputs.push_back(att.output);
            result.head_weights.push_back(att.weights);
        }
    }
    Tensor concat = heads == 1 ? outputs.front() : nc::concat_cols(outputs);
    result.output = nc::matmul(concat, params.output);
    return result;
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& params) {
    return nc::linear(nc::elu(nc::linear(x, params.w1, params.b1)), params.w2, params.b2);
}

namespace {

LayerAttention to_trace(const std::vector<Tensor>& head_weights) {
    LayerAttention la;
    la.heads = head_weights.size();
    la.rows = head_weights.front().rows();
    la.cols = head_weights.front().cols();
    la.weights.reserve(la.heads * la.rows * la.cols);
    for (const auto& w : head_weights) la.weights.insert(la.weights.end(), w.values().begin(), w.values().end());
    return la;
}

Tensor maybe_dropout(const Tensor& x, const TsformerModel& model, const ForwardContext& ctx) {
    const double p = model.config().dropout;
    if (!ctx.training || p == 0.0) return x;
    if (ctx.rng == nullptr) throw ConfigError("training forward pass with dropout needs a random generator");
    return nc::dropout(x, p, true, *ctx.rng);
}

Tensor embed(const Tensor& x, const Tensor& w, const Tensor& b, const TsformerModel& model,
             const ForwardContext& ctx) {
    Tensor h = nc::linear(x, w, b);
    if (model.config().positional_encoding) {
        h = nc::add(h, sinusoidal_positional_encoding(x.rows(), model.config().d_model));
    }
    return maybe_dropout(h, model, ctx);
}

}  // namespace

EncoderResult encoder_forward(const Tensor& x, const TsformerModel& model, const ForwardContext& ctx) {
    const auto& cfg = model.config();
    if (x.rank() != 2 || x.rows() != cfg.encoder_input_length || x.cols() != cfg.feature_dim) {
        throw ShapeError("encoder input " + nc::shape_string(x.shape()) + " does not match config [" +
                         std::to_string(cfg.encoder_input_length) + "x" + std::to_string(cfg.feature_dim) + "]");
    }
    EncoderResult result;
    Tensor h = embed(x, ModelInternals::encoder_w(model), ModelInternals::encoder_b(model), model, ctx);
    for (const auto& layer : ModelInternals::encoder_layers(model)) {
        auto att = multi_head_attention(h, h, model.masks().encoder_source, layer.self_attention, cfg.heads);
        if (ctx.record_trace) result.self_attention.push_back(to_trace(att.head_weights));
        h = nc::layer_norm(nc::add(h, maybe_dropout(att.output, model, ctx)), layer.norm1.gamma, layer.norm1.beta);
        Tensor ff = feed_forward(h, layer.ffn);
        h = nc::layer_norm(nc::add(h, maybe_dropout(ff, model, ctx)), layer.norm2.gamma, layer.norm2.beta);
    }
    result.memory = h;
    return result;
}

DecoderResult decoder_forward(const Tensor& y, const Tensor& memory, const TsformerModel& model,
                              const ForwardContext& ctx) {
    const auto& cfg = model.config();
    if (y.rank() != 2 || y.rows() != cfg.decoder_input_length || y.cols() != cfg.feature_dim) {
        throw ShapeError("decoder input " + nc::shape_string(y.shape()) + " does not match config [" +
                         std::to_string(cfg.decoder_input_length) + "x" + std::to_string(cfg.feature_dim) + "]");
    }
    if (memory.rank() != 2 || memory.rows() != cfg.encoder_input_length || memory.cols() != cfg.d_model) {
        throw ShapeError("decoder memory " + nc::shape_string(memory.shape()) + " does not match config");
    }
    DecoderResult result;
    Tensor h = embed(y, ModelInternals::decoder_w(model), ModelInternals::decoder_b(model), model, ctx);
    for (const auto& layer : ModelInternals::decoder_layers(model)) {
        auto self = multi_head_attention(h, h, model.masks().decoder_target, layer.self_attention, cfg.heads);
        h = nc::layer_norm(nc::add(h, maybe_dropout(self.output, model, ctx)), layer.norm1.gamma, layer.norm1.beta);
        auto cross =
            multi_head_attention(h, memory, model.masks().decoder_memory, layer.cross_attention, cfg.heads);
        h = nc::layer_norm(nc::add(h, maybe_dropout(cross.output, model, ctx)), layer.norm2.gamma,
                           layer.norm2.beta);
        Tensor ff = feed_forward(h, layer.ffn);
        h = nc::layer_norm(nc::add(h, maybe_dropout(ff, model, ctx)), layer.norm3.gamma, layer.norm3.beta);
        if (ctx.record_trace) {
            result.self_attention.push_back(to_trace(self.head_weights));
            result.cross_attention.push_back(to_trace(cross.head_weights));
        }
    }
    result.output = nc::linear(h, ModelInternals::output_w(model), ModelInternals::output_b(model));
    return result;
}

ForwardResult forward(const data::WindowSample& sample, const TsformerModel& model, const ForwardContext& ctx) {
    const auto& cfg = model.config();
    if (sample.token_flags.size() != cfg.decoder_input_length) {
        throw ShapeError("sample has " + std::to_string(sample.token_flags.size()) +
                         " decoder rows, model expects " + std::to_string(cfg.decoder_input_length));
    }
    auto enc = encoder_forward(sample.encoder, model, ctx);
    auto dec = decoder_forward(sample.decoder, enc.memory, model, ctx);
    ForwardResult result;
    result.forecasts = dec.output;
    if (ctx.record_trace) {
        result.trace.encoder_self = std::move(enc.self_attention);
        result.trace.decoder_self = std::move(dec.self_attention);
        result.trace.decoder_cross = std::move(dec.cross_attention);
    }
    return result;
}

std::vector<double> predict_tokens(const data::WindowSample& sample, const TsformerModel& model) {
    nc::NoGradScope no_grad;
    const auto result = forward(sample, model, ForwardContext{});
    const auto v = result.forecasts.values();
    const std::size_t h = model.config().forecast_horizon;
    return {v.end() - static_cast<std::ptrdiff_t>(h), v.end()};
}

}  // namespace tsformer
