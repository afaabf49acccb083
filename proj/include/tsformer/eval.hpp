#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tsformer/data.hpp"
#include "tsformer/model.hpp"
#include "tsformer/train.hpp"

namespace tsformer::eval {

struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
    std::size_t n = 0;
};

double mae(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);
/// Mean absolute percentage error, in percent. Truth must be strictly positive.
double mape(std::span<const double> pred, std::span<const double> truth);
MetricsReport score(std::span<const double> pred, std::span<const double> truth);

/// Repeats the last observed value.
std::vector<double> naive_forecast(std::span<const double> history, std::size_t horizon);

/// Forecast for t+k is the value at t+k-m*s for the smallest m >= 1 that lands
/// inside the observed history.
std::vector<double> seasonal_naive_forecast(std::span<const double> history, std::size_t horizon, std::size_t season);

/// Produces `horizon` raw-unit forecasts for the days after `origin` (the last
/// observed row). Implementations must not read demand past the origin.
using Forecaster = std::function<std::vector<double>(const data::Dataset&, std::size_t origin, std::size_t horizon)>;

Forecaster naive_forecaster();
Forecaster seasonal_naive_forecaster(std::size_t season);
/// Returns the ground truth; a harness self-test.
Forecaster oracle_forecaster();
/// Direct multi-step forecasts from the model's token rows. `horizon` may not
/// exceed the model's own forecast horizon; shorter horizons take the leading
/// lead times.
Forecaster model_forecaster(const TsformerModel& model, const data::NormalizationStats& stats,
                            const data::WindowOptions& options);

struct ForecastRecord {
    data::Date origin;
    std::vector<double> forecasts;
    std::vector<double> truths;
};

struct EvaluationRun {
    std::string model;
    std::size_t horizon = 0;
    std::string split;
    std::vector<ForecastRecord> records;  // sorted by origin
    MetricsReport metrics;                // pooled over every (origin, lead) pair
    std::vector<MetricsReport> per_lead;  // index k = lead time k+1
};

/// Scores every origin whose `horizon` target days all lie in `range` and that
/// has at least `min_history` observed days.
EvaluationRun rolling_origin_evaluate(const Forecaster& forecaster, const data::Dataset& dataset,
                                      const data::DateRange& range, std::size_t horizon, std::size_t min_history,
                                      const std::string& model_name, const std::string& split_name);

std::string report_csv(std::span<const EvaluationRun> runs, bool per_lead = false);
std::string report_json(std::span<const EvaluationRun> runs, bool per_lead = false);

// ---------------------------------------------------------------- ablation

struct AblationArm {
    bool use_calendar = true;
    std::vector<EvaluationRun> runs;  // one per horizon
    std::vector<TrainHistory> histories;
};

struct AblationReport {
    std::vector<std::size_t> horizons;
    AblationArm with_calendar;
    AblationArm without_calendar;

    /// Side-by-side table: one row per (arm, metric), one column per horizon.
    std::string to_table_csv() const;
};

struct AblationSetup {
    ModelConfig model;  // feature_dim is filled from the dataset
    TrainConfig train;
    data::WindowOptions window;  // use_calendar is overridden per arm
    data::SplitSpec split;
    std::vector<std::size_t> horizons{1, 7, 15, 30};
};

/// Trains and evaluates the calendar and no-calendar arms at every horizon.
/// Both arms share the seed, splits and all other hyperparameters.
AblationReport ablation_run(const data::Dataset& dataset, const AblationSetup& setup);

}  // namespace tsformer::eval
