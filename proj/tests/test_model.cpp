#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oracles.hpp"
#include "support.hpp"
#include "tsformer/errors.hpp"
#include "tsformer/model.hpp"
#include "tsformer/train.hpp"

using namespace tsformer;
using nc::Tensor;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("positional encoding examples") {
    const auto pe = sinusoidal_positional_encoding(3, 32);
    CHECK(pe.shape() == nc::Shape{3, 32});
    CHECK(pe.at(0, 0) == 0.0);
    CHECK(pe.at(0, 1) == 1.0);
    CHECK(pe.at(1, 0) == doctest::Approx(0.84147).epsilon(1e-5));
    CHECK(pe.at(2, 3) == doctest::Approx(std::cos(2.0 / std::pow(10000.0, 2.0 / 32.0))));
    CHECK_THROWS_AS(sinusoidal_positional_encoding(3, 5), ConfigError);
}

TEST_CASE("mask matrices of the 1-day layout") {
    // The 7x7 source mask, 5x5 target mask and 5x7 memory mask of the 1-day layout.
    const double X = -kInf;
    const std::vector<double> source{
        0, X, X, X, X, X, X,  //
        0, 0, X, X, X, X, X,  //
        0, 0, 0, X, X, X, X,  //
        0, 0, 0, 0, X, X, X,  //
        0, 0, 0, 0, 0, X, X,  //
        0, 0, 0, 0, 0, 0, X,  //
        0, 0, 0, 0, 0, 0, 0};
    const std::vector<double> target{
        0, X, X, X, X,  //
        0, 0, X, X, X,  //
        0, 0, 0, X, X,  //
        0, 0, 0, 0, X,  //
        0, 0, 0, 0, 0};
    const std::vector<double> memory{
        0, 0, 0, X, X, X, X,  //
        0, 0, 0, 0, X, X, X,  //
        0, 0, 0, 0, 0, X, X,  //
        0, 0, 0, 0, 0, 0, X,  //
        0, 0, 0, 0, 0, 0, 0};
    CHECK(oracle::same_bits(build_encoder_source_mask(7), source));
    CHECK(oracle::same_bits(build_decoder_target_mask(5), target));
    CHECK(oracle::same_bits(build_decoder_memory_mask(5, 7), memory));
}

TEST_CASE("mask edge cases") {
    CHECK(oracle::same_bits(build_encoder_source_mask(1), {0}));
    CHECK(oracle::same_bits(build_encoder_source_mask(2), {0, -kInf, 0, 0}));
    CHECK(oracle::same_bits(build_decoder_target_mask(1), {0}));
    CHECK(oracle::same_bits(build_decoder_memory_mask(1, 3), {0, 0, 0}));
    CHECK_THROWS_AS(build_decoder_memory_mask(4, 3), ConfigError);
    for (std::size_t l = 1; l <= 12; ++l) {
        const auto t = build_decoder_target_mask(l);
        CHECK(oracle::same_bits(build_decoder_memory_mask(l, l), {t.values().begin(), t.values().end()}));
        CHECK(std::count(t.values().begin(), t.values().begin() + l, 0.0) == 1);
        for (std::size_t e = l; e <= l + 5; ++e)
            CHECK(oracle::same_bits(build_decoder_memory_mask(l, e), oracle::band_mask(l, e, e - l)));
    }
}

TEST_CASE("config validation") {
    ModelConfig c;
    c.feature_dim = 9;
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.forecast_horizon = 6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.dropout = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.feature_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("with_horizon keeps the overlap") {
    ModelConfig c;
    const auto h1 = with_horizon(c, 1);
    CHECK(h1 == c);
    const auto h7 = with_horizon(c, 7);
    CHECK(h7.decoder_input_length == 11);
    CHECK(h7.encoder_input_length == 11);
    CHECK(h7.overlap() == c.overlap());
    const auto h30 = with_horizon(c, 30);
    CHECK(h30.decoder_input_length == 34);
    CHECK(h30.encoder_input_length == 34);
}

TEST_CASE("scaled dot-product attention examples") {
    const auto one = Tensor::matrix(1, 1, {1});
    auto r = scaled_dot_product_attention(one, one, one, Tensor::matrix(1, 1, {0}));
    CHECK(r.output.item() == 1.0);
    CHECK(r.weights.item() == 1.0);

    std::mt19937_64 rng(1);
    const auto q = testing::random_matrix(3, 2, rng);
    const auto k = testing::random_matrix(4, 2, rng);
    const auto v = testing::random_matrix(4, 3, rng);
    std::vector<double> delta(12, -kInf);
    delta[0 * 4 + 2] = 0.0;
    delta[1 * 4 + 0] = 0.0;
    delta[2 * 4 + 3] = 0.0;
    r = scaled_dot_product_attention(q, k, v, Tensor::matrix(3, 4, delta));
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(r.output.at(0, c) == v.at(2, c));
        CHECK(r.output.at(1, c) == v.at(0, c));
        CHECK(r.output.at(2, c) == v.at(3, c));
    }

    r = scaled_dot_product_attention(Tensor::zeros({3, 2}), k, v, Tensor::zeros({3, 4}));
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (std::size_t j = 0; j < 4; ++j) mean += v.at(j, c) / 4.0;
        for (std::size_t i = 0; i < 3; ++i) CHECK(r.output.at(i, c) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("multi-head attention with identity projections and one head") {
    std::mt19937_64 rng(2);
    const std::size_t d = 4;
    std::vector<double> eye(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
    const auto I = Tensor::matrix(d, d, eye);
    const AttentionParams p{I, I, I, I};
    const auto xq = testing::random_matrix(3, d, rng);
    const auto xkv = testing::random_matrix(5, d, rng);
    const auto mask = Tensor::matrix(3, 5, oracle::band_mask(3, 5, 2));
    const auto mh = multi_head_attention(xq, xkv, mask, p, 1);
    const auto direct = scaled_dot_product_attention(xq, xkv, xkv, mask);
    for (std::size_t i = 0; i < mh.output.size(); ++i)
        CHECK(mh.output.values()[i] == doctest::Approx(direct.output.values()[i]).epsilon(1e-14));
    REQUIRE(mh.head_weights.size() == 1);

    ModelConfig c;
    c.feature_dim = 3;
    const TsformerModel m(c, 1);
    const auto& lp = m.parameter("enc.0.self.wq");
    CHECK(lp.shape() == nc::Shape{32, 32});
    const AttentionParams full{m.parameter("enc.0.self.wq"), m.parameter("enc.0.self.wk"), m.parameter("enc.0.self.wv"),
                               m.parameter("enc.0.self.wo")};
    const auto x32 = testing::random_matrix(7, 32, rng);
    const auto out = multi_head_attention(x32, testing::random_matrix(2, 32, rng), Tensor::zeros({7, 2}), full, 4);
    CHECK(out.output.shape() == nc::Shape{7, 32});
    REQUIRE(out.head_weights.size() == 4);
    CHECK(out.head_weights[0].shape() == nc::Shape{7, 2});
}

TEST_CASE("feed-forward is position-wise") {
    std::mt19937_64 rng(4);
    const FeedForwardParams p{testing::random_matrix(4, 8, rng), Tensor::zeros({8}), testing::random_matrix(8, 4, rng),
                              Tensor::zeros({4})};
    CHECK(oracle::same_bits(feed_forward(Tensor::zeros({2, 4}), p), std::vector<double>(8, 0.0)));
    const auto one = testing::random_matrix(1, 4, rng);
    std::vector<double> tripled;
    for (int r = 0; r < 3; ++r) tripled.insert(tripled.end(), one.values().begin(), one.values().end());
    const auto a = feed_forward(one, p);
    const auto b = feed_forward(Tensor::matrix(3, 4, tripled), p);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) CHECK(b.at(r, c) == a.at(0, c));
}

TEST_CASE("parameter layout, audit and shapes") {
    ModelConfig c;
    c.feature_dim = 9;
    const TsformerModel m(c, 3);
    CHECK_NOTHROW(m.audit());
    const auto layout = parameter_layout(c);
    REQUIRE(layout.size() == m.parameters().size());
    std::size_t count = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        CHECK(layout[i].first == m.parameters()[i].name);
        CHECK(layout[i].second == m.parameters()[i].tensor.shape());
        count += nc::shape_size(layout[i].second);
    }
    CHECK(m.parameter_count() == count);
    CHECK(m.parameter("out.w").shape() == nc::Shape{32, 1});
    CHECK(m.parameter("dec.3.norm3.gamma").values()[0] == 1.0);
    CHECK(m.parameter("dec.3.ffn.b1").values()[0] == 0.0);
    CHECK(TsformerModel(c, 3).parameter_count() == count);

    std::map<std::string, Tensor> values;
    for (const auto& p : m.parameters()) values[p.name] = p.tensor.clone();
    CHECK_NOTHROW(TsformerModel(c, values));
    values["enc.1.ffn.w1"] = Tensor::zeros({32, 63});
    try {
        TsformerModel bad(c, values);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("enc.1.ffn.w1") != std::string::npos);
    }
}

TEST_CASE("copies are deep") {
    ModelConfig c;
    c.feature_dim = 4;
    TsformerModel a(c, 1);
    TsformerModel b = a;
    auto t = b.parameter("out.b");
    t.mutable_values()[0] = 42.0;
    CHECK(a.parameter("out.b").values()[0] == 0.0);
    a.assign_values(b);
    CHECK(a.parameter("out.b").values()[0] == 42.0);
}

TEST_CASE("forward shapes and determinism") {
    ModelConfig c;
    c.feature_dim = 9;
    const TsformerModel m(c, 5);
    std::mt19937_64 rng(5);
    const auto s = testing::random_sample(c, rng);
    const auto enc = encoder_forward(s.encoder, m, {});
    CHECK(enc.memory.shape() == nc::Shape{7, 32});
    const auto a = forward(s, m, {false, nullptr, true});
    const auto b = forward(s, m, {});
    CHECK(a.forecasts.shape() == nc::Shape{5, 1});
    CHECK(oracle::same_bits(a.forecasts, {b.forecasts.values().begin(), b.forecasts.values().end()}));
    CHECK(a.trace.decoder_self.size() == 4);
    CHECK(a.trace.decoder_cross[0].rows == 5);
    CHECK(a.trace.decoder_cross[0].cols == 7);
    CHECK(b.trace.decoder_self.empty());
    const auto p = predict_tokens(s, m);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == a.forecasts.values()[4]);

    auto wrong = s;
    wrong.token_flags.pop_back();
    CHECK_THROWS_AS(forward(wrong, m, {}), ShapeError);
}

TEST_CASE("training-mode dropout changes outputs, inference does not") {
    ModelConfig c;
    c.feature_dim = 3;
    const TsformerModel m(c, 5);
    std::mt19937_64 rng(5);
    const auto s = testing::random_sample(c, rng);
    std::mt19937_64 drop(1);
    const auto t = forward(s, m, {true, &drop, false});
    const auto i = forward(s, m, {});
    CHECK_FALSE(oracle::same_bits(t.forecasts, {i.forecasts.values().begin(), i.forecasts.values().end()}));
}

TEST_CASE("causality perturbation oracles") {
    for (auto [le, ld, h] : {std::tuple{7, 5, 1}, std::tuple{10, 8, 3}, std::tuple{4, 4, 1}}) {
        const auto cfg = oracle::causality_config(le, ld, h);
        CAPTURE(le);
        CAPTURE(ld);
        CHECK(oracle::encoder_causality(cfg, 20, 11).ok());
        CHECK(oracle::decoder_self_causality(cfg, 20, 12).ok());
        CHECK(oracle::memory_causality(cfg, 20, 13).ok());
    }
}

TEST_CASE("trace rows are stochastic with exact zeros at masked cells") {
    ModelConfig c = oracle::causality_config(7, 5, 1);
    const TsformerModel m(c, 8);
    std::mt19937_64 rng(8);
    const auto masks = m.masks();
    const auto trace = forward(testing::random_sample(c, rng), m, {false, nullptr, true}).trace;
    auto check_layer = [](const LayerAttention& la, const Tensor& mask) {
        for (std::size_t h = 0; h < la.heads; ++h)
            for (std::size_t r = 0; r < la.rows; ++r) {
                double sum = 0.0;
                for (std::size_t col = 0; col < la.cols; ++col) {
                    if (std::isinf(mask.at(r, col))) CHECK(la.at(h, r, col) == 0.0);
                    sum += la.at(h, r, col);
                }
                CHECK(std::abs(sum - 1.0) < 1e-9);
            }
    };
    for (const auto& la : trace.encoder_self) check_layer(la, masks.encoder_source);
    for (const auto& la : trace.decoder_self) check_layer(la, masks.decoder_target);
    for (const auto& la : trace.decoder_cross) check_layer(la, masks.decoder_memory);
}

TEST_CASE("end-to-end gradient check on the tiny config") {
    const auto c = testing::tiny_config(5);
    TsformerModel m(c, 17);
    std::mt19937_64 rng(17);
    const auto s = testing::random_sample(c, rng);
    std::vector<Tensor> params;
    for (const auto& p : m.parameters()) params.push_back(p.tensor);
    const double err = nc::grad_check(
        [&](std::span<const Tensor>) { return window_loss(s, m, true, ForwardContext{}); }, params, 1e-6);
    CHECK(err < 1e-4);
}

TEST_CASE("positional encoding breaks permutation symmetry; without it the encoder is equivariant") {
    ModelConfig c = oracle::causality_config(6, 4, 1);
    std::mt19937_64 rng(30);
    const auto x = testing::random_matrix(6, 5, rng);
    const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    std::vector<double> px;
    for (auto r : perm)
        for (std::size_t col = 0; col < 5; ++col) px.push_back(x.at(r, col));
    const auto xp = Tensor::matrix(6, 5, px);

    {
        TsformerModel m(c, 30);
        const auto a = encoder_forward(x, m, {}).memory;
        const auto b = encoder_forward(xp, m, {}).memory;
        double diff = 0.0;
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t col = 0; col < 8; ++col) diff = std::max(diff, std::abs(b.at(i, col) - a.at(perm[i], col)));
        CHECK(diff > 1e-6);
    }
    {
        c.positional_encoding = false;
        TsformerModel m(c, 30);
        auto masks = m.masks();
        masks.encoder_source = Tensor::zeros({6, 6});
        m.set_masks(masks);
        const auto a = encoder_forward(x, m, {}).memory;
        const auto b = encoder_forward(xp, m, {}).memory;
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t col = 0; col < 8; ++col) CHECK(std::abs(b.at(i, col) - a.at(perm[i], col)) < 1e-12);
    }
}
