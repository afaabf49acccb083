#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsformer/keyvalue.hpp"
#include "tsformer/model_config.hpp"
#include "tsformer/numcore.hpp"

namespace tsformer::data {

using Date = std::chrono::sys_days;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD).
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date date);

/// Column layout of a daily record:
/// date, demand, idx_1..idx_K, temp_max, weather, date_type, month, weekday.
///
/// The feature vector of a record is the same list without `date`, so
/// feature_dim() = K + 6.
struct RecordSchema {
    static constexpr int kVersion = 1;

    std::size_t index_count = 0;

    std::size_t feature_dim() const { return index_count + 6; }
    static constexpr std::size_t demand_column() { return 0; }
    std::size_t index_column(std::size_t k) const { return 1 + k; }
    std::size_t temperature_column() const { return 1 + index_count; }
    std::size_t weather_column() const { return 2 + index_count; }
    std::size_t date_type_column() const { return 3 + index_count; }
    std::size_t month_column() const { return 4 + index_count; }
    std::size_t weekday_column() const { return 5 + index_count; }

    std::vector<std::string> feature_names() const;
    /// CSV header, including the leading date column.
    std::vector<std::string> column_names() const;
    /// Feature column index for a name such as "month" or "idx_2".
    std::optional<std::size_t> feature_index(const std::string& name) const;

    bool operator==(const RecordSchema&) const = default;
};

struct Record {
    Date date;
    std::vector<double> features;
};

/// Date-ordered records, one per calendar day, without gaps.
struct Dataset {
    RecordSchema schema;
    std::vector<Record> rows;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
    std::vector<double> demand() const;
    /// Row index of `date`, if present.
    std::optional<std::size_t> index_of(Date date) const;
    /// Throws DataError on gaps, duplicates, nonpositive demand or out-of-range codes.
    void validate() const;
};

// Label codes: working day/weekend/holiday -> 0..2, snow/rain/overcast/cloudy/sunny -> 0..4.
int encode_date_type(std::string_view label);
int encode_weather(std::string_view label);

struct CalendarCodes {
    int month_code;    // January = 0
    int weekday_code;  // Monday = 0
};
CalendarCodes encode_calendar(Date date);

/// Reads a dataset. The schema's index count is taken from the header.
Dataset load_csv(const std::filesystem::path& path);
/// Reads a dataset and additionally requires the header to match `schema`.
Dataset load_csv(const std::filesystem::path& path, const RecordSchema& schema);
Dataset parse_csv(std::string_view text, const std::optional<RecordSchema>& schema = std::nullopt);
void write_csv(const Dataset& dataset, const std::filesystem::path& path);
std::string to_csv(const Dataset& dataset);

/// Per-column Min-Max statistics, fitted on the training split.
class NormalizationStats {
public:
    struct Column {
        std::string name;
        double min = 0.0;
        double max = 0.0;

        bool operator==(const Column&) const = default;
    };

    NormalizationStats() = default;
    explicit NormalizationStats(std::vector<Column> columns);

    static NormalizationStats fit(const Dataset& train);

    double apply(double value, std::size_t column) const;
    double invert(double value, std::size_t column) const;
    bool is_constant(std::size_t column) const;
    std::size_t size() const { return columns_.size(); }
    const std::vector<Column>& columns() const { return columns_; }

    bool operator==(const NormalizationStats&) const = default;

private:
    std::vector<Column> columns_;
};

struct DateRange {
    Date first;
    Date last;
    bool contains(Date d) const { return d >= first && d <= last; }
};

struct WindowOptions {
    bool use_calendar = true;
    /// Feature columns carried into token rows when use_calendar is set.
    std::vector<std::string> token_known_columns{"month", "weekday"};
    /// Keep only windows whose forecast days all fall inside this range.
    std::optional<DateRange> target_range;
};

/// One rolling-window instance anchored at origin day t (the last observed day).
struct WindowSample {
    Date origin_date;
    std::size_t origin_index = 0;
    nc::Tensor encoder;  // [L_enc x F], days t-L_enc+1 .. t
    nc::Tensor decoder;  // [L_dec x F], days t-(L_dec-h)+1 .. t+h
    nc::Tensor target;   // [L_dec x 1], normalized true demand
    std::vector<double> target_raw;  // true demand in original units, per decoder row
    std::vector<bool> token_flags;
};

std::vector<WindowSample> make_windows(const Dataset& dataset, const ModelConfig& config,
                                       const NormalizationStats& stats, const WindowOptions& options = {});

/// Builds the window at a single origin; the dataset must reach t + h.
WindowSample make_window(const Dataset& dataset, std::size_t origin_index, const ModelConfig& config,
                         const NormalizationStats& stats, const WindowOptions& options = {});

/// Encoder/decoder inputs for forecasting past the end of `dataset`: the
/// origin is its last row and token rows carry the calendar of the following
/// days. Targets are zero.
WindowSample make_forecast_window(const Dataset& dataset, const ModelConfig& config,
                                  const NormalizationStats& stats, const WindowOptions& options = {});

/// Same as above for an origin inside the dataset. Only the rows up to the
/// origin feed the inputs; later rows are consulted solely for token columns
/// the options declare known. Targets are zero.
WindowSample make_forecast_window(const Dataset& dataset, std::size_t origin_index, const ModelConfig& config,
                                  const NormalizationStats& stats, const WindowOptions& options = {});

struct SplitSpec {
    Date train_end;
    Date validate_end;
};

struct Splits {
    Dataset train;
    Dataset validate;
    Dataset test;

    DateRange train_range() const;
    DateRange validate_range() const;
    DateRange test_range() const;
};

Splits split(const Dataset& dataset, const SplitSpec& spec);

/// Fractional split helper: the first `train_fraction` of days for training,
/// the next `validate_fraction` for validation, the rest for test.
SplitSpec split_by_fraction(const Dataset& dataset, double train_fraction, double validate_fraction);

struct HolidaySpan {
    unsigned month = 1;
    unsigned day = 1;
    unsigned length = 1;
};

/// Parameters of the synthetic demand generator.
struct SynthSpec {
    std::size_t days = 1200;
    Date start = Date{std::chrono::year{2013} / 1 / 1};
    double base = 1000.0;
    double weekly_amp = 0.3;
    double annual_amp = 0.4;
    double holiday_amp = 0.8;
    double noise = 0.05;
    std::vector<HolidaySpan> holidays{{1, 1, 3}, {5, 1, 5}, {10, 1, 7}};
    std::size_t k_indexes = 3;
    std::uint64_t seed = 1;

    /// Keys: days, start, base, weekly_amp, annual_amp, holiday_amp, noise,
    /// holidays (MM-DD or MM-DD+len, comma separated), k_indexes, seed.
    static SynthSpec from_keyvalues(const KeyValues& kv);
    void validate() const;
};

/// Weekly profile in [-1, 1] indexed by weekday code (Monday = 0).
double weekly_profile(int weekday_code);
/// Annual profile in [-1, 1], peaking in early autumn.
double annual_profile(Date date);
bool is_holiday(Date date, const std::vector<HolidaySpan>& holidays);

Dataset synth_generate(const SynthSpec& spec);

}  // namespace tsformer::data
