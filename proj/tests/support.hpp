#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "tsformer/data.hpp"
#include "tsformer/model.hpp"

namespace tsformer::testing {

inline ModelConfig tiny_config(std::size_t feature_dim, std::size_t l_enc = 4, std::size_t l_dec = 3,
                               std::size_t h = 1) {
    ModelConfig c;
    c.encoder_input_length = l_enc;
    c.decoder_input_length = l_dec;
    c.forecast_horizon = h;
    c.d_model = 4;
    c.heads = 2;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.ffn_dim = 8;
    c.dropout = 0.0;
    c.feature_dim = feature_dim;
    return c;
}

inline data::Dataset small_synth(std::size_t days, std::uint64_t seed = 7, std::size_t k = 2) {
    data::SynthSpec spec;
    spec.days = std::max<std::size_t>(days, 400);
    spec.k_indexes = k;
    spec.seed = seed;
    auto ds = data::synth_generate(spec);
    ds.rows.resize(days);
    return ds;
}

inline nc::Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0, bool requires_grad = false) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = u(rng);
    return nc::Tensor::matrix(rows, cols, std::move(v), requires_grad);
}

/// Window with uniform random inputs and targets; token flags follow the config.
inline data::WindowSample random_sample(const ModelConfig& c, std::mt19937_64& rng) {
    data::WindowSample s;
    s.encoder = random_matrix(c.encoder_input_length, c.feature_dim, rng, 0, 1);
    s.decoder = random_matrix(c.decoder_input_length, c.feature_dim, rng, 0, 1);
    s.target = random_matrix(c.decoder_input_length, 1, rng, 0, 1);
    s.target_raw.assign(c.decoder_input_length, 1.0);
    s.token_flags.assign(c.decoder_input_length, false);
    for (std::size_t i = c.overlap(); i < c.decoder_input_length; ++i) s.token_flags[i] = true;
    return s;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("tsformer_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace tsformer::testing
