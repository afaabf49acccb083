#include "tsformer/eval.hpp"

#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "tsformer/errors.hpp"

namespace tsformer::eval {

namespace {
void check_pair(std::span<const double> pred, std::span<const double> truth, const char* what) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw ConfigError(std::string(what) + ": need equal nonempty lengths, got " + std::to_string(pred.size()) +
                          " and " + std::to_string(truth.size()));
    }
}
}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double mape(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "mape");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(truth[i] > 0.0)) {
            throw ConfigError("mape: ground truth must be strictly positive (index " + std::to_string(i) + ")");
        }
        s += std::abs((pred[i] - truth[i]) / truth[i]);
    }
    return 100.0 * s / static_cast<double>(pred.size());
}

MetricsReport score(std::span<const double> pred, std::span<const double> truth) {
    return {mae(pred, truth), rmse(pred, truth), mape(pred, truth), pred.size()};
}

std::vector<double> naive_forecast(std::span<const double> history, std::size_t horizon) {
    if (history.empty()) throw ConfigError("naive forecast: empty history");
    return std::vector<double>(horizon, history.back());
}

std::vector<double> seasonal_naive_forecast(std::span<const double> history, std::size_t horizon, std::size_t season) {
    if (season == 0) throw ConfigError("seasonal naive forecast: season must be positive");
    if (history.size() < season) {
        throw ConfigError("seasonal naive forecast: history of " + std::to_string(history.size()) +
                          " is shorter than the season " + std::to_string(season));
    }
    const std::size_t last = history.size() - 1;
    std::vector<double> out(horizon);
    for (std::size_t k = 1; k <= horizon; ++k) {
        const std::size_t periods = (k + season - 1) / season;
        out[k - 1] = history[last + k - periods * season];
    }
    return out;
}

// ---------------------------------------------------------------- forecasters

namespace {
std::vector<double> demand_prefix(const data::Dataset& ds, std::size_t origin) {
    std::vector<double> out;
    out.reserve(origin + 1);
    for (std::size_t i = 0; i <= origin; ++i) out.push_back(ds.rows[i].features[data::RecordSchema::demand_column()]);
    return out;
}
}  // namespace

Forecaster naive_forecaster() {
    return [](const data::Dataset& ds, std::size_t origin, std::size_t horizon) {
        const std::vector<double> one{ds.rows.at(origin).features[data::RecordSchema::demand_column()]};
        return naive_forecast(one, horizon);
    };
}

Forecaster seasonal_naive_forecaster(std::size_t season) {
    return [season](const data::Dataset& ds, std::size_t origin, std::size_t horizon) {
        const auto history = demand_prefix(ds, origin);
        return seasonal_naive_forecast(history, horizon, season);
    };
}

Forecaster oracle_forecaster() {
    return [](const data::Dataset& ds, std::size_t origin, std::size_t horizon) {
        std::vector<double> out;
        for (std::size_t k = 1; k <= horizon; ++k)
            out.push_back(ds.rows.at(origin + k).features[data::RecordSchema::demand_column()]);
        return out;
    };
}

Forecaster model_forecaster(const TsformerModel& model, const data::NormalizationStats& stats,
                            const data::WindowOptions& options) {
    return [&model, &stats, options](const data::Dataset& ds, std::size_t origin, std::size_t horizon) {
        const auto& cfg = model.config();
        if (horizon > cfg.forecast_horizon) {
            throw ConfigError("model forecasts " + std::to_string(cfg.forecast_horizon) + " days, asked for " +
                              std::to_string(horizon));
        }
        const auto window = data::make_forecast_window(ds, origin, cfg, stats, options);
        const auto normalized = predict_tokens(window, model);
        std::vector<double> out;
        for (std::size_t k = 0; k < horizon; ++k)
            out.push_back(stats.invert(normalized[k], data::RecordSchema::demand_column()));
        return out;
    };
}

// ---------------------------------------------------------------- rolling origin

EvaluationRun rolling_origin_evaluate(const Forecaster& forecaster, const data::Dataset& dataset,
                                      const data::DateRange& range, std::size_t horizon, std::size_t min_history,
                                      const std::string& model_name, const std::string& split_name) {
    if (horizon == 0) throw ConfigError("rolling-origin evaluation: horizon must be positive");
    EvaluationRun run;
    run.model = model_name;
    run.horizon = horizon;
    run.split = split_name;
    std::vector<double> all_pred, all_truth;
    std::vector<std::vector<double>> lead_pred(horizon), lead_truth(horizon);
    const std::size_t first_origin = min_history == 0 ? 0 : min_history - 1;
    for (std::size_t origin = first_origin; origin + horizon < dataset.size(); ++origin) {
        const data::Date first = dataset.rows[origin + 1].date;
        const data::Date last = dataset.rows[origin + horizon].date;
        if (!range.contains(first) || !range.contains(last)) continue;
        ForecastRecord rec;
        rec.origin = dataset.rows[origin].date;
        rec.forecasts = forecaster(dataset, origin, horizon);
        if (rec.forecasts.size() != horizon) {
            throw ConfigError("forecaster " + model_name + " returned " + std::to_string(rec.forecasts.size()) +
                              " values for horizon " + std::to_string(horizon));
        }
        for (std::size_t k = 1; k <= horizon; ++k) {
            rec.truths.push_back(dataset.rows[origin + k].features[data::RecordSchema::demand_column()]);
        }
        for (std::size_t k = 0; k < horizon; ++k) {
            all_pred.push_back(rec.forecasts[k]);
            all_truth.push_back(rec.truths[k]);
            lead_pred[k].push_back(rec.forecasts[k]);
            lead_truth[k].push_back(rec.truths[k]);
        }
        run.records.push_back(std::move(rec));
    }
    if (run.records.empty()) {
        throw DataError(DataError::Kind::TooShort, "rolling-origin evaluation of " + model_name + " on " + split_name +
                                                       ": no valid origin for horizon " + std::to_string(horizon));
    }
    run.metrics = score(all_pred, all_truth);
    for (std::size_t k = 0; k < horizon; ++k) run.per_lead.push_back(score(lead_pred[k], lead_truth[k]));
    return run;
}

std::string report_csv(std::span<const EvaluationRun> runs, bool per_lead) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "model,horizon,split,mae,rmse,mape,n" << (per_lead ? ",lead" : "") << '\n';
    for (const auto& r : runs) {
        os << r.model << ',' << r.horizon << ',' << r.split << ',' << r.metrics.mae << ',' << r.metrics.rmse << ','
           << r.metrics.mape << ',' << r.metrics.n << (per_lead ? ",all" : "") << '\n';
        if (!per_lead) continue;
        for (std::size_t k = 0; k < r.per_lead.size(); ++k) {
            const auto& m = r.per_lead[k];
            os << r.model << ',' << r.horizon << ',' << r.split << ',' << m.mae << ',' << m.rmse << ',' << m.mape
               << ',' << m.n << ',' << (k + 1) << '\n';
        }
    }
    return os.str();
}

std::string report_json(std::span<const EvaluationRun> runs, bool per_lead) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : runs) {
        nlohmann::json j{{"model", r.model},       {"horizon", r.horizon},   {"split", r.split},
                         {"mae", r.metrics.mae},   {"rmse", r.metrics.rmse}, {"mape", r.metrics.mape},
                         {"n", r.metrics.n}};
        if (per_lead) {
            nlohmann::json leads = nlohmann::json::array();
            for (std::size_t k = 0; k < r.per_lead.size(); ++k) {
                const auto& m = r.per_lead[k];
                leads.push_back({{"lead", k + 1}, {"mae", m.mae}, {"rmse", m.rmse}, {"mape", m.mape}, {"n", m.n}});
            }
            j["per_lead"] = leads;
        }
        out.push_back(j);
    }
    return out.dump(2) + "\n";
}

// ---------------------------------------------------------------- ablation

std::string AblationReport::to_table_csv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "model,metric";
    for (auto h : horizons) os << ",h" << h;
    os << '\n';
    auto arm_rows = [&](const AblationArm& arm, const char* name) {
        for (const char* metric : {"MAE", "RMSE", "MAPE"}) {
            os << name << ',' << metric;
            for (const auto& run : arm.runs) {
                const std::string m = metric;
                const double v = m == "MAE" ? run.metrics.mae : m == "RMSE" ? run.metrics.rmse : run.metrics.mape;
                os << ',' << v;
            }
            os << '\n';
        }
    };
    arm_rows(with_calendar, "Tsformer w/ calendar");
    arm_rows(without_calendar, "Tsformer w/o calendar");
    return os.str();
}

AblationReport ablation_run(const data::Dataset& dataset, const AblationSetup& setup) {
    if (setup.horizons.empty()) throw ConfigError("ablation: no horizons requested");
    const auto splits = data::split(dataset, setup.split);
    const auto stats = data::NormalizationStats::fit(splits.train);
    AblationReport report;
    report.horizons = setup.horizons;
    report.with_calendar.use_calendar = true;
    report.without_calendar.use_calendar = false;

    for (AblationArm* arm : {&report.with_calendar, &report.without_calendar}) {
        for (auto h : setup.horizons) {
            ModelConfig cfg = with_horizon(setup.model, h);
            cfg.feature_dim = dataset.schema.feature_dim();
            data::WindowOptions opts = setup.window;
            opts.use_calendar = arm->use_calendar;
            opts.target_range = splits.train_range();
            const auto train_windows = data::make_windows(dataset, cfg, stats, opts);
            opts.target_range = splits.validate_range();
            const auto val_windows = data::make_windows(dataset, cfg, stats, opts);
            opts.target_range.reset();

            const TsformerModel initial(cfg, setup.train.seed);
            auto trained = train(initial, train_windows, val_windows, stats, setup.train);
            const std::string name = arm->use_calendar ? "tsformer_calendar" : "tsformer_no_calendar";
            auto run = rolling_origin_evaluate(model_forecaster(trained.model, stats, opts), dataset,
                                               splits.test_range(), h, cfg.encoder_input_length, name, "test");
            arm->runs.push_back(std::move(run));
            arm->histories.push_back(std::move(trained.history));
        }
    }
    return report;
}

}  // namespace tsformer::eval
