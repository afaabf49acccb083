// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance fast          criteria 1-7 and 10-12
//   acceptance experiments   criteria 8 and 9 (training runs, tens of minutes)
//   acceptance all
//   acceptance 3 7           selected criteria

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "tsformer/cli.hpp"
#include "tsformer/eval.hpp"
#include "tsformer/interpret.hpp"
#include "tsformer/train.hpp"

using namespace tsformer;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // wall-clock limit, part of the criterion
    std::function<Outcome()> run;
    bool experiment = false;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---------------------------------------------------------------- 1

Outcome masks() {
    const bool enc = oracle::same_bits(build_encoder_source_mask(7), oracle::band_mask(7, 7, 0));
    const bool tgt = oracle::same_bits(build_decoder_target_mask(5), oracle::band_mask(5, 5, 0));
    const bool mem = oracle::same_bits(build_decoder_memory_mask(5, 7), oracle::band_mask(5, 7, 2));
    return {enc && tgt && mem, std::string("source ") + (enc ? "ok" : "differs") + ", target " +
                                   (tgt ? "ok" : "differs") + ", memory " + (mem ? "ok" : "differs")};
}

// ---------------------------------------------------------------- 2

Outcome causality() {
    std::size_t checks = 0, violations = 0, vacuous = 0;
    bool ok = true;
    std::uint64_t seed = 100;
    for (auto [le, ld, h] : {std::tuple{7, 5, 1}, std::tuple{10, 8, 3}, std::tuple{4, 4, 1}}) {
        const auto cfg = oracle::causality_config(le, ld, h);
        for (const auto& t : {oracle::encoder_causality(cfg, 20, seed++), oracle::decoder_self_causality(cfg, 20, seed++),
                              oracle::memory_causality(cfg, 20, seed++)}) {
            checks += t.checks;
            violations += t.violations;
            vacuous += t.vacuous;
            ok = ok && t.ok();
        }
    }
    return {ok, std::to_string(checks) + " protected rows, " + std::to_string(violations) + " moved, " +
                    std::to_string(vacuous) + " vacuous perturbations"};
}

// ---------------------------------------------------------------- 3

Outcome gradients() {
    const auto cfg = testing::tiny_config(5);
    const TsformerModel m(cfg, 17);
    std::mt19937_64 rng(17);
    const auto s = testing::random_sample(cfg, rng);
    std::vector<Tensor> params;
    for (const auto& p : m.parameters()) params.push_back(p.tensor);
    const double e2e = nc::grad_check(
        [&](std::span<const Tensor>) { return window_loss(s, m, true, ForwardContext{}); }, params, 1e-6);

    const auto weights = testing::random_matrix(3, 4, rng);
    const auto tail = [&](const Tensor& y) { return nc::sum(nc::mul(y, weights)); };
    std::vector<std::pair<std::string, double>> ops;

    std::vector<Tensor> ex{testing::random_matrix(3, 4, rng, -2, 2, true)};
    ops.emplace_back("elu", nc::grad_check([&](std::span<const Tensor> t) { return tail(nc::elu(t[0])); }, ex));

    std::vector<double> mv(12, 0.0);
    mv[1] = mv[6] = -std::numeric_limits<double>::infinity();
    const auto mask = Tensor::matrix(3, 4, mv);
    std::vector<Tensor> sm{testing::random_matrix(3, 4, rng, -2, 2, true)};
    ops.emplace_back("masked_softmax",
                     nc::grad_check([&](std::span<const Tensor> t) { return tail(nc::masked_softmax(t[0], mask)); }, sm));

    std::vector<Tensor> ln{testing::random_matrix(3, 4, rng, -2, 2, true), Tensor::from({4}, {0.9, 1.1, 0.7, 1.3}, true),
                           Tensor::from({4}, {0.1, -0.2, 0.0, 0.3}, true)};
    ops.emplace_back("layer_norm", nc::grad_check(
                                       [&](std::span<const Tensor> t) { return tail(nc::layer_norm(t[0], t[1], t[2])); }, ln));

    std::vector<Tensor> li{testing::random_matrix(3, 2, rng, -1, 1, true), testing::random_matrix(2, 4, rng, -1, 1, true),
                           Tensor::from({4}, {0.1, -0.2, 0.3, 0.0}, true)};
    ops.emplace_back("linear",
                     nc::grad_check([&](std::span<const Tensor> t) { return tail(nc::linear(t[0], t[1], t[2])); }, li));

    std::vector<Tensor> mm{testing::random_matrix(3, 5, rng, -1, 1, true), testing::random_matrix(5, 4, rng, -1, 1, true)};
    ops.emplace_back("matmul", nc::grad_check([&](std::span<const Tensor> t) { return tail(nc::matmul(t[0], t[1])); }, mm));

    bool ok = e2e < 1e-4;
    std::string detail = "end-to-end " + fmt("%.2e", e2e);
    for (const auto& [name, err] : ops) {
        ok = ok && err < 1e-4;
        detail += ", " + name + " " + fmt("%.2e", err);
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- 4

Outcome stochasticity() {
    std::size_t rows = 0, bad_sum = 0, bad_zero = 0;
    double worst = 0.0;
    const std::tuple<int, int, int> shapes[] = {{7, 5, 1}, {10, 8, 3}, {4, 4, 1}, {11, 11, 7}};
    for (int pass = 0; pass < 50; ++pass) {
        const auto [le, ld, h] = shapes[pass % 4];
        const auto cfg = oracle::causality_config(le, ld, h);
        const TsformerModel m(cfg, 1000 + pass);
        std::mt19937_64 rng(2000 + pass);
        const auto trace = forward(testing::random_sample(cfg, rng), m, {false, nullptr, true}).trace;
        auto check = [&](const LayerAttention& la, const Tensor& mask) {
            for (std::size_t hd = 0; hd < la.heads; ++hd)
                for (std::size_t r = 0; r < la.rows; ++r) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < la.cols; ++c) {
                        if (std::isinf(mask.at(r, c)) && la.at(hd, r, c) != 0.0) ++bad_zero;
                        s += la.at(hd, r, c);
                    }
                    worst = std::max(worst, std::abs(s - 1.0));
                    if (std::abs(s - 1.0) > 1e-9) ++bad_sum;
                    ++rows;
                }
        };
        for (const auto& la : trace.encoder_self) check(la, m.masks().encoder_source);
        for (const auto& la : trace.decoder_self) check(la, m.masks().decoder_target);
        for (const auto& la : trace.decoder_cross) check(la, m.masks().decoder_memory);
    }
    return {rows > 0 && bad_sum == 0 && bad_zero == 0,
            std::to_string(rows) + " rows, max |sum-1| " + fmt("%.1e", worst) + ", " + std::to_string(bad_zero) +
                " nonzero masked cells"};
}

// ---------------------------------------------------------------- 5

Outcome metrics() {
    std::size_t fixture_fail = 0;
    for (const auto& f : oracle::metric_fixtures()) {
        if (std::abs(eval::mae(f.pred, f.truth) - f.mae) > 1e-12 || std::abs(eval::rmse(f.pred, f.truth) - f.rmse) > 1e-12 ||
            std::abs(eval::mape(f.pred, f.truth) - f.mape) > 1e-12)
            ++fixture_fail;
    }
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(1.0, 1000.0);
    std::uniform_int_distribution<int> len(1, 30);
    std::size_t order_fail = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> p(len(rng)), t(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = u(rng), t[k] = u(rng);
        if (eval::rmse(p, t) < eval::mae(p, t)) ++order_fail;
    }
    return {fixture_fail == 0 && order_fail == 0,
            std::to_string(oracle::metric_fixtures().size() - fixture_fail) + "/" +
                std::to_string(oracle::metric_fixtures().size()) + " fixtures, " + std::to_string(order_fail) +
                " rmse<mae of 1000"};
}

// ---------------------------------------------------------------- 6

Outcome baselines() {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(1, 500);
    std::size_t s1_fail = 0, s7_fail = 0;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> hist(7 + i % 40);
        for (auto& v : hist) v = u(rng);
        const std::size_t horizon = 1 + i % 30;
        if (eval::seasonal_naive_forecast(hist, horizon, 1) != eval::naive_forecast(hist, horizon)) ++s1_fail;
        const auto s7 = eval::seasonal_naive_forecast(hist, 14, 7);
        std::vector<double> twice(hist.end() - 7, hist.end());
        twice.insert(twice.end(), hist.end() - 7, hist.end());
        if (s7 != twice || s7 != oracle::seasonal_naive_brute(hist, 14, 7)) ++s7_fail;
    }
    return {s1_fail == 0 && s7_fail == 0, "s=1 mismatches " + std::to_string(s1_fail) +
                                              "/100, s=7 h=14 mismatches " + std::to_string(s7_fail) + "/100"};
}

// ---------------------------------------------------------------- 7

Outcome overfit() {
    const auto ds = testing::small_synth(60);
    const auto cfg = testing::tiny_config(ds.schema.feature_dim(), 7, 5, 1);
    const auto stats = data::NormalizationStats::fit(ds);
    const auto windows = data::make_windows(ds, cfg, stats);
    const std::span<const data::WindowSample> one(windows.data() + 20, 1);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.max_epochs = 2000;
    tc.patience = 0;
    tc.batch_size = 1;
    const auto r = train(TsformerModel(cfg, 3), one, {}, stats, tc);
    nc::NoGradScope off;
    const double mse = window_loss(one[0], r.model, true, {}).item();
    return {mse < 1e-3, "train MSE " + fmt("%.3e", mse) + " after " + std::to_string(r.history.epochs.size()) + " epochs"};
}

// ---------------------------------------------------------------- 8, 9

struct Experiment {
    std::size_t max_epochs = 60;
    std::size_t patience = 10;
};

// Test MAE of a freshly trained model at horizon 7, plus seasonal-naive(7).
std::pair<double, double> forecast_vs_seasonal(const data::Dataset& ds, std::uint64_t seed, bool use_calendar,
                                               const Experiment& ex) {
    const auto spec = data::split_by_fraction(ds, 0.6, 0.2);
    const auto parts = data::split(ds, spec);
    const auto stats = data::NormalizationStats::fit(parts.train);
    ModelConfig cfg = with_horizon(ModelConfig{}, 7);
    cfg.feature_dim = ds.schema.feature_dim();
    data::WindowOptions o;
    o.use_calendar = use_calendar;
    o.target_range = parts.train_range();
    const auto tw = data::make_windows(ds, cfg, stats, o);
    o.target_range = parts.validate_range();
    const auto vw = data::make_windows(ds, cfg, stats, o);
    o.target_range.reset();
    TrainConfig tc;
    tc.max_epochs = ex.max_epochs;
    tc.patience = ex.patience;
    tc.seed = seed;
    const auto r = train(TsformerModel(cfg, seed), tw, vw, stats, tc);
    const auto test = parts.test_range();
    const auto model = eval::rolling_origin_evaluate(eval::model_forecaster(r.model, stats, o), ds, test, 7,
                                                     cfg.encoder_input_length, "tsformer", "test");
    const auto sn = eval::rolling_origin_evaluate(eval::seasonal_naive_forecaster(7), ds, test, 7,
                                                  cfg.encoder_input_length, "seasonal_naive", "test");
    return {model.metrics.mae, sn.metrics.mae};
}

Outcome directional() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        data::SynthSpec s;
        s.days = 1200;
        s.noise = 0.05;
        s.seed = seed;
        const auto [model, sn] = forecast_vs_seasonal(data::synth_generate(s), seed, true, {});
        wins += model <= sn;
        detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " model " +
                  fmt("%.1f", model) + " vs sn7 " + fmt("%.1f", sn);
        std::cerr << "  [8] " << detail << "\n";
    }
    return {wins >= 2, std::to_string(wins) + "/3 seeds; " + detail};
}

// Both arms at horizon 7 through the library ablation, plus seasonal-naive(7) on the same test range.
// lr 1e-3: at 3e-3 most inits sit on a constant-output plateau in both arms, and comparing two flat
// forecasts says nothing about the calendar.
struct ArmScores {
    double with = 0.0, without = 0.0, sn = 0.0;
};

ArmScores ablation_arms(const data::Dataset& ds, std::uint64_t seed) {
    eval::AblationSetup setup;
    setup.model.feature_dim = ds.schema.feature_dim();
    setup.train.learning_rate = 1e-3;
    setup.train.max_epochs = 40;
    setup.train.patience = 8;
    setup.train.seed = seed;
    setup.split = data::split_by_fraction(ds, 0.6, 0.2);
    setup.horizons = {7};
    const auto report = eval::ablation_run(ds, setup);
    const auto test = data::split(ds, setup.split).test_range();
    const auto sn = eval::rolling_origin_evaluate(eval::seasonal_naive_forecaster(7), ds, test, 7,
                                                  with_horizon(setup.model, 7).encoder_input_length,
                                                  "seasonal_naive", "test");
    return {report.with_calendar.runs[0].metrics.mae, report.without_calendar.runs[0].metrics.mae, sn.metrics.mae};
}

Outcome ablation() {
    int wins = 0;
    bool null_ok = true;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        data::SynthSpec s;
        s.days = 1200;
        s.seed = seed;
        s.weekly_amp = 0.6;
        s.annual_amp = 0.1;
        s.holiday_amp = 0.0;
        const auto a = ablation_arms(data::synth_generate(s), seed);
        // a flat forecast sits far above seasonal-naive on weekly data; only count arms that beat it
        const bool trained = a.with < a.sn;
        wins += trained && a.with <= a.without;
        detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " cal " +
                  fmt("%.1f", a.with) + " vs none " + fmt("%.1f", a.without) + " (sn7 " + fmt("%.1f", a.sn) +
                  (trained ? ")" : ", above sn7)");
        std::cerr << "  [9] " << detail << "\n";
    }
    for (std::uint64_t seed : {1, 2, 3}) {
        data::SynthSpec s;
        s.days = 1200;
        s.seed = 100 + seed;
        s.weekly_amp = s.annual_amp = s.holiday_amp = 0.0;
        s.noise = 0.2;
        const auto a = ablation_arms(data::synth_generate(s), seed);
        const double rel = std::abs(a.with - a.without) / std::min(a.with, a.without);
        null_ok = null_ok && rel < 0.10;
        detail += "; noise seed " + std::to_string(seed) + " rel diff " + fmt("%.2f%%", 100 * rel);
        std::cerr << "  [9] " << detail << "\n";
    }
    return {wins >= 2 && null_ok, std::to_string(wins) + "/3 calendar wins, null control " +
                                      (null_ok ? "within" : "outside") + " 10%; " + detail};
}

// ---------------------------------------------------------------- 10

Outcome round_trips() {
    const auto ds = testing::small_synth(120);
    const auto stats = data::NormalizationStats::fit(ds);
    auto cfg = oracle::causality_config(7, 5, 1);
    cfg.feature_dim = ds.schema.feature_dim();
    const TsformerModel m(cfg, 10);
    const auto windows = data::make_windows(ds, cfg, stats);
    const auto dir = testing::scratch_dir("acceptance_roundtrip");

    save_checkpoint({m, stats, {}}, dir / "m.ckpt");
    const auto back = load_checkpoint(dir / "m.ckpt");
    std::size_t differing = 0;
    for (const auto& w : windows) {
        const auto a = predict_tokens(w, m), b = predict_tokens(w, back.model);
        for (std::size_t k = 0; k < a.size(); ++k)
            if (std::memcmp(&a[k], &b[k], sizeof(double)) != 0) ++differing;
    }

    double minmax_err = 0.0;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-1e4, 1e4);
    for (int i = 0; i < 10000; ++i) {
        const std::size_t col = static_cast<std::size_t>(i) % stats.size();
        if (stats.is_constant(col)) continue;
        const double x = u(rng);
        minmax_err = std::max(minmax_err, std::abs(stats.invert(stats.apply(x, col), col) - x) / std::max(1.0, std::abs(x)));
    }

    interpret::CaptureOptions co;
    co.per_head = co.include_encoder = true;
    const auto summary = interpret::capture_attention(m, windows, co);
    double csv_err = 0.0;
    std::size_t files = 0;
    for (const auto& p : interpret::export_csv(summary, dir / "att")) {
        const auto name = p.stem().string();
        const interpret::WeightMatrix* orig = nullptr;
        const std::size_t layer = static_cast<std::size_t>(name[name.find("layer") + 5] - '1');
        if (name.find("head") != std::string::npos) {
            const std::size_t head = static_cast<std::size_t>(name.back() - '1');
            orig = name.find("cross") != std::string::npos ? &summary.cross_per_head[layer][head]
                                                           : &summary.self_per_head[layer][head];
        } else if (name.starts_with("encoder")) {
            orig = &summary.encoder_self_avg[layer];
        } else {
            orig = name.find("cross") != std::string::npos ? &summary.cross_avg[layer] : &summary.self_avg[layer];
        }
        const auto read = interpret::import_csv(p);
        ++files;
        if (read.values.size() != orig->values.size()) return {false, "shape changed in " + name};
        for (std::size_t i = 0; i < read.values.size(); ++i)
            csv_err = std::max(csv_err, std::abs(read.values[i] - orig->values[i]));
    }
    return {differing == 0 && minmax_err <= 1e-12 && csv_err <= 1e-12,
            std::to_string(differing) + " forecasts differ after reload, minmax err " + fmt("%.1e", minmax_err) +
                ", csv err " + fmt("%.1e", csv_err) + " over " + std::to_string(files) + " files"};
}

// ---------------------------------------------------------------- 11

Outcome attention_shape() {
    const auto dir = testing::scratch_dir("acceptance_attention");
    const auto ds = testing::small_synth(400);
    data::write_csv(ds, dir / "data.csv");
    const auto spec = data::split_by_fraction(ds, 0.6, 0.2);
    const auto parts = data::split(ds, spec);
    ModelConfig cfg;  // reference 1-day configuration: 7/5, four decoder layers
    cfg.feature_dim = ds.schema.feature_dim();
    Checkpoint ck{TsformerModel(cfg, 11), data::NormalizationStats::fit(parts.train), {}};
    ck.meta.train_end = data::format_date(spec.train_end);
    ck.meta.validate_end = data::format_date(spec.validate_end);
    save_checkpoint(ck, dir / "m.ckpt");

    cli::AttentionArgs a;
    a.checkpoint = dir / "m.ckpt";
    a.data = dir / "data.csv";
    a.out_dir = dir / "out";
    cli::cmd_attention(a);

    std::vector<std::string> enc_days, dec_days;
    for (int d = 1; d <= 7; ++d) enc_days.push_back("day_" + std::to_string(d));
    for (int d = 4; d <= 8; ++d) dec_days.push_back("day_" + std::to_string(d));
    std::size_t matrices = 0, bad = 0;
    for (const auto& e : fs::directory_iterator(a.out_dir)) {
        if (e.path().extension() != ".csv") continue;
        ++matrices;
        const auto m = interpret::import_csv(e.path());
        const bool cross = e.path().stem().string().ends_with("_cross");
        if (m.rows != 5 || m.cols != (cross ? 7u : 5u) || m.row_labels != dec_days ||
            m.col_labels != (cross ? enc_days : dec_days))
            ++bad;
    }

    auto zeroed = ck;
    oracle::zero_attention_scores(zeroed.model);
    save_checkpoint(zeroed, dir / "zero.ckpt");
    a.checkpoint = dir / "zero.ckpt";
    a.out_dir = dir / "zero";
    a.svg = false;
    cli::cmd_attention(a);
    double uniform_err = 0.0;
    for (std::size_t l = 1; l <= 4; ++l) {
        for (const char* kind : {"self", "cross"}) {
            const auto m = interpret::import_csv(a.out_dir / ("decoder_layer" + std::to_string(l) + "_" + kind + ".csv"));
            const std::size_t offset = std::string(kind) == "cross" ? 2 : 0;
            for (std::size_t r = 0; r < m.rows; ++r)
                for (std::size_t c = 0; c < m.cols; ++c) {
                    const double want = c <= r + offset ? 1.0 / static_cast<double>(r + offset + 1) : 0.0;
                    uniform_err = std::max(uniform_err, std::abs(m.at(r, c) - want));
                }
        }
    }
    return {matrices == 8 && bad == 0 && uniform_err < 1e-12,
            std::to_string(matrices) + " matrices, " + std::to_string(bad) + " with wrong shape or labels, uniformity err " +
                fmt("%.1e", uniform_err)};
}

// ---------------------------------------------------------------- 12

Outcome window_layout() {
    const auto ds = testing::small_synth(10);
    ModelConfig cfg;
    cfg.feature_dim = ds.schema.feature_dim();
    const auto stats = data::NormalizationStats::fit(ds);
    const auto w = data::make_windows(ds, cfg, stats);
    if (w.size() != 3) return {false, std::to_string(w.size()) + " samples"};
    std::size_t overlap_bad = 0, flag_bad = 0;
    const std::vector<bool> flags{false, false, false, false, true};
    for (const auto& s : w) {
        for (std::size_t r = 0; r < cfg.overlap(); ++r)
            if (!oracle::rows_identical(s.decoder, nc::slice_rows(s.encoder, 3, 4), r)) ++overlap_bad;
        if (s.token_flags != flags) ++flag_bad;
    }
    return {overlap_bad == 0 && flag_bad == 0, "3 samples, " + std::to_string(overlap_bad) + " overlap rows differ, " +
                                                   std::to_string(flag_bad) + " flag vectors wrong"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "mask exactness", 1, masks},
        {2, "causality suite", 30, causality},
        {3, "gradient suite", 60, gradients},
        {4, "attention stochasticity", 0, stochasticity},
        {5, "metric oracle", 0, metrics},
        {6, "baseline oracle", 0, baselines},
        {7, "overfit single window", 120, overfit},
        {8, "directional forecasting", 20 * 60, directional, true},
        {9, "calendar ablation direction", 40 * 60, ablation, true},
        {10, "round trips", 0, round_trips},
        {11, "interpretability shape", 0, attention_shape},
        {12, "window layout", 0, window_layout},
    };

    std::set<int> selected;
    bool fast = false, experiments = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "fast") fast = true;
        else if (a == "experiments") experiments = true;
        else if (a == "all") fast = experiments = true;
        else selected.insert(std::stoi(a));
    }
    if (!fast && !experiments && selected.empty()) fast = true;

    int failed = 0;
    for (const auto& c : all) {
        const bool want = selected.count(c.id) || (c.experiment ? experiments : fast);
        if (!want) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_seconds > 0 && secs > c.budget_seconds) {
            o.pass = false;
            o.detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << " (" << fmt("%.2f", secs) << " s): "
                  << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
