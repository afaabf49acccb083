#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "tsformer/errors.hpp"
#include "tsformer/interpret.hpp"

using namespace tsformer;

namespace {
struct Setup {
    data::Dataset ds = testing::small_synth(60);
    data::NormalizationStats stats = data::NormalizationStats::fit(ds);
    ModelConfig cfg;
    std::vector<data::WindowSample> windows;

    Setup() {
        cfg = oracle::causality_config(7, 5, 1);
        cfg.feature_dim = ds.schema.feature_dim();
        cfg.decoder_layers = 4;
        windows = data::make_windows(ds, cfg, stats);
    }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
}  // namespace

TEST_CASE("day labels of the 1-day layout") {
    ModelConfig c;
    const auto enc = interpret::encoder_day_labels(c);
    const auto dec = interpret::decoder_day_labels(c);
    CHECK(enc == std::vector<std::string>{"day_1", "day_2", "day_3", "day_4", "day_5", "day_6", "day_7"});
    CHECK(dec == std::vector<std::string>{"day_4", "day_5", "day_6", "day_7", "day_8"});
    const auto h7 = interpret::decoder_day_labels(with_horizon(c, 7));
    CHECK(h7.front() == "day_8");
    CHECK(h7.back() == "day_18");
}

TEST_CASE("summary shape, stochastic rows and masked zeros") {
    Setup s;
    const TsformerModel m(s.cfg, 2);
    const auto sum = interpret::capture_attention(m, s.windows);
    CHECK(sum.sample_count == s.windows.size());
    REQUIRE(sum.self_avg.size() == 4);
    REQUIRE(sum.cross_avg.size() == 4);
    CHECK(sum.encoder_self_avg.empty());
    for (std::size_t l = 0; l < 4; ++l) {
        const auto& self = sum.self_avg[l];
        const auto& cross = sum.cross_avg[l];
        CHECK(self.rows == 5);
        CHECK(self.cols == 5);
        CHECK(cross.rows == 5);
        CHECK(cross.cols == 7);
        for (std::size_t r = 0; r < 5; ++r) {
            double a = 0.0, b = 0.0;
            std::size_t argmax = 0;
            for (std::size_t c = 0; c < 5; ++c) {
                a += self.at(r, c);
                if (c > r) CHECK(self.at(r, c) == 0.0);
                if (c > r) CHECK(self.is_masked(r, c));
                if (self.at(r, c) > self.at(r, argmax)) argmax = c;
            }
            CHECK(argmax <= r);
            for (std::size_t c = 0; c < 7; ++c) {
                b += cross.at(r, c);
                if (c > r + 2) CHECK(cross.at(r, c) == 0.0);
            }
            CHECK(std::abs(a - 1.0) < 1e-6);
            CHECK(std::abs(b - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("single sample single head equals its trace") {
    Setup s;
    s.cfg.heads = 1;
    const TsformerModel m(s.cfg, 3);
    const std::span<const data::WindowSample> one(s.windows.data(), 1);
    const auto sum = interpret::capture_attention(m, one);
    const auto trace = forward(s.windows[0], m, {false, nullptr, true}).trace;
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 7; ++c) CHECK(sum.cross_avg[l].at(r, c) == trace.decoder_cross[l].at(0, r, c));
}

TEST_CASE("averaging order and sample order do not matter") {
    Setup s;
    const TsformerModel m(s.cfg, 4);
    interpret::CaptureOptions o;
    o.per_head = true;
    const auto sum = interpret::capture_attention(m, s.windows, o);
    auto reversed = s.windows;
    std::reverse(reversed.begin(), reversed.end());
    const auto rev = interpret::capture_attention(m, reversed);
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 5; ++c) {
                double head_mean = 0.0;
                for (std::size_t h = 0; h < s.cfg.heads; ++h) head_mean += sum.self_per_head[l][h].at(r, c);
                head_mean /= static_cast<double>(s.cfg.heads);
                CHECK(std::abs(head_mean - sum.self_avg[l].at(r, c)) < 1e-12);
                CHECK(std::abs(rev.self_avg[l].at(r, c) - sum.self_avg[l].at(r, c)) < 1e-12);
            }
}

TEST_CASE("zero query and key projections give uniform attention over allowed cells") {
    Setup s;
    TsformerModel m(s.cfg, 5);
    oracle::zero_attention_scores(m);
    const auto sum = interpret::capture_attention(m, s.windows);
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t r = 0; r < 5; ++r) {
            for (std::size_t c = 0; c <= r; ++c) CHECK(std::abs(sum.self_avg[l].at(r, c) - 1.0 / (r + 1)) < 1e-12);
            for (std::size_t c = 0; c <= r + 2; ++c) CHECK(std::abs(sum.cross_avg[l].at(r, c) - 1.0 / (r + 3)) < 1e-12);
        }
}

TEST_CASE("csv export and import") {
    Setup s;
    const TsformerModel m(s.cfg, 6);
    interpret::CaptureOptions o;
    o.include_encoder = true;
    o.per_head = true;
    const auto sum = interpret::capture_attention(m, s.windows, o);
    const auto dir = testing::scratch_dir("attention_csv");
    const auto files = interpret::export_csv(sum, dir);
    CHECK(files.size() == 8 + 8 * s.cfg.heads + 2);
    CHECK(std::filesystem::exists(dir / "decoder_layer1_self.csv"));
    CHECK(std::filesystem::exists(dir / "decoder_layer4_cross.csv"));
    CHECK(std::filesystem::exists(dir / "decoder_layer2_cross_head2.csv"));
    CHECK(std::filesystem::exists(dir / "encoder_layer1_self.csv"));

    const auto back = interpret::import_csv(dir / "decoder_layer3_cross.csv");
    CHECK(back.rows == 5);
    CHECK(back.cols == 7);
    CHECK(back.row_labels.front() == "day_4");
    CHECK(back.col_labels.back() == "day_7");
    for (std::size_t i = 0; i < back.values.size(); ++i) CHECK(std::abs(back.values[i] - sum.cross_avg[2].values[i]) < 1e-12);
    CHECK(slurp(dir / "decoder_layer1_self.csv").starts_with("query_day,day_4,day_5,day_6,day_7,day_8\nday_4,"));
    CHECK_THROWS_AS(interpret::import_csv(dir / "nothing.csv"), IoError);
}

TEST_CASE("svg heatmaps") {
    interpret::WeightMatrix delta;
    delta.rows = delta.cols = 3;
    delta.values = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    delta.row_labels = delta.col_labels = {"day_1", "day_2", "day_3"};
    delta.masked = {false, true, true, false, false, true, false, false, false};
    const auto svg = interpret::heatmap_svg(delta, "delta");
    CHECK(svg.find("<svg") != std::string::npos);
    std::size_t saturated = 0, pos = 0;
    while ((pos = svg.find("#08306b", pos)) != std::string::npos) ++saturated, ++pos;
    CHECK(saturated == 3);
    std::size_t masked = 0;
    pos = 0;
    while ((pos = svg.find("class=\"masked\"", pos)) != std::string::npos) ++masked, ++pos;
    CHECK(masked == 3);

    interpret::WeightMatrix big;
    big.rows = big.cols = 64;
    big.values.assign(64 * 64, 1.0 / 64);
    for (int i = 1; i <= 64; ++i) big.row_labels.push_back("day_" + std::to_string(i));
    big.col_labels = big.row_labels;
    const auto large = interpret::heatmap_svg(big, "big");
    const auto w_at = large.find("width=\"");
    const int width = std::stoi(large.substr(w_at + 7));
    CHECK(width >= 64 * 20);
    CHECK(large.find(">64</text>") != std::string::npos);

    Setup s;
    const TsformerModel m(s.cfg, 7);
    const auto dir = testing::scratch_dir("attention_svg");
    const auto files = interpret::render_heatmap(interpret::capture_attention(m, s.windows), dir);
    CHECK(files.size() == 8);
    CHECK(slurp(dir / "decoder_layer1_cross.svg").find("</svg>") != std::string::npos);
}

TEST_CASE("capture rejects an empty sample list") {
    Setup s;
    const TsformerModel m(s.cfg, 8);
    CHECK_THROWS_AS(interpret::capture_attention(m, {}), ConfigError);
}
