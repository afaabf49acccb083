#include "tsformer/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "tsformer/errors.hpp"

namespace tsformer::data {

namespace {

using std::chrono::days;
using std::chrono::year_month_day;

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string row_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

// ---------------------------------------------------------------- dates

std::optional<Date> parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    auto num = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        return ec == std::errc() && p == text.data() + pos + len;
    };
    if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
    const year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date{ymd};
}

std::string format_date(Date date) {
    const year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

// ---------------------------------------------------------------- schema

std::vector<std::string> RecordSchema::feature_names() const {
    std::vector<std::string> names{"demand"};
    for (std::size_t k = 0; k < index_count; ++k) names.push_back("idx_" + std::to_string(k + 1));
    for (const char* n : {"temp_max", "weather", "date_type", "month", "weekday"}) names.emplace_back(n);
    return names;
}

std::vector<std::string> RecordSchema::column_names() const {
    auto names = feature_names();
    names.insert(names.begin(), "date");
    return names;
}

std::optional<std::size_t> RecordSchema::feature_index(const std::string& name) const {
    const auto names = feature_names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
}

std::vector<double> Dataset::demand() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.features[RecordSchema::demand_column()]);
    return out;
}

std::optional<std::size_t> Dataset::index_of(Date date) const {
    if (rows.empty()) return std::nullopt;
    const auto offset = (date - rows.front().date).count();
    if (offset < 0 || static_cast<std::size_t>(offset) >= rows.size()) return std::nullopt;
    return static_cast<std::size_t>(offset);
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.features.size() != schema.feature_dim()) {
            throw DataError(DataError::Kind::BadValue, "row " + std::to_string(i) + ": expected " +
                                                           std::to_string(schema.feature_dim()) + " features");
        }
        if (i > 0) {
            const auto step = (r.date - rows[i - 1].date).count();
            if (step == 0) {
                throw DataError(DataError::Kind::DuplicateDate, "row " + std::to_string(i) + ": duplicate date " +
                                                                    format_date(r.date));
            }
            if (step != 1) {
                throw DataError(DataError::Kind::DateGap, "row " + std::to_string(i) + ": missing date " +
                                                              format_date(rows[i - 1].date + days{1}));
            }
        }
        if (!(r.features[RecordSchema::demand_column()] > 0.0)) {
            throw DataError(DataError::Kind::NonPositiveDemand,
                            "row " + std::to_string(i) + ": demand must be positive on " + format_date(r.date));
        }
    }
}

// ---------------------------------------------------------------- encodings

int encode_date_type(std::string_view label) {
    const std::string s = lower(label);
    if (s == "working day" || s == "working_day" || s == "workday") return 0;
    if (s == "weekend") return 1;
    if (s == "holiday") return 2;
    throw DataError(DataError::Kind::BadValue, "unknown date type '" + std::string(label) + "'");
}

int encode_weather(std::string_view label) {
    static const std::array<const char*, 5> names{"snow", "rain", "overcast", "cloudy", "sunny"};
    const std::string s = lower(label);
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (s == names[i]) return static_cast<int>(i);
    }
    throw DataError(DataError::Kind::BadValue, "unknown weather '" + std::string(label) + "'");
}

CalendarCodes encode_calendar(Date date) {
    const year_month_day ymd{date};
    const std::chrono::weekday wd{date};
    return {static_cast<int>(static_cast<unsigned>(ymd.month())) - 1, static_cast<int>(wd.iso_encoding()) - 1};
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    auto [p, ec] = std::from_chars(cell.data(), end, v);
    if (cell.empty() || ec != std::errc() || p != end || !std::isfinite(v)) {
        throw DataError(DataError::Kind::BadValue,
                        row_prefix(line) + "cannot parse " + column + " value '" + cell + "'");
    }
    return v;
}

int parse_code(const std::string& cell, std::size_t line, const std::string& column, int max_code,
               int (*encoder)(std::string_view)) {
    int code = 0;
    const auto* end = cell.data() + cell.size();
    auto [p, ec] = std::from_chars(cell.data(), end, code);
    if (cell.empty() || ec != std::errc() || p != end) {
        if (encoder == nullptr) {
            throw DataError(DataError::Kind::BadValue,
                            row_prefix(line) + "cannot parse " + column + " code '" + cell + "'");
        }
        try {
            code = encoder(cell);
        } catch (const DataError& e) {
            throw DataError(DataError::Kind::BadValue, row_prefix(line) + e.what());
        }
    }
    if (code < 0 || code > max_code) {
        throw DataError(DataError::Kind::CodeRange, row_prefix(line) + column + " code " + std::to_string(code) +
                                                        " outside 0.." + std::to_string(max_code));
    }
    return code;
}

}  // namespace

Dataset parse_csv(std::string_view text, const std::optional<RecordSchema>& expected) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw DataError(DataError::Kind::MissingColumn, "empty CSV: no header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);

    RecordSchema schema;
    schema.index_count = static_cast<std::size_t>(
        std::count_if(header.begin(), header.end(), [](const std::string& h) { return h.rfind("idx_", 0) == 0; }));
    if (expected && expected->index_count != schema.index_count) {
        throw DataError(DataError::Kind::MissingColumn,
                        "header has " + std::to_string(schema.index_count) + " search-index columns, expected " +
                            std::to_string(expected->index_count));
    }
    const auto want = schema.column_names();
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (i >= header.size() || header[i] != want[i]) {
            throw DataError(DataError::Kind::MissingColumn, "line 1: missing column '" + want[i] + "' at position " +
                                                                std::to_string(i + 1));
        }
    }
    if (header.size() != want.size()) {
        throw DataError(DataError::Kind::MissingColumn, "line 1: unexpected column '" + header[want.size()] + "'");
    }

    Dataset ds;
    ds.schema = schema;
    std::vector<std::size_t> line_of_row;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != want.size()) {
            throw DataError(DataError::Kind::BadValue, row_prefix(lineno) + "expected " + std::to_string(want.size()) +
                                                           " cells, found " + std::to_string(cells.size()));
        }
        Record rec;
        auto date = parse_date(cells[0]);
        if (!date) throw DataError(DataError::Kind::BadValue, row_prefix(lineno) + "invalid date '" + cells[0] + "'");
        rec.date = *date;
        rec.features.resize(schema.feature_dim());
        const double demand = parse_cell(cells[1], lineno, "demand");
        if (!(demand > 0.0)) {
            throw DataError(DataError::Kind::NonPositiveDemand,
                            row_prefix(lineno) + "demand must be positive (got " + cells[1] + ")");
        }
        rec.features[0] = demand;
        for (std::size_t k = 0; k < schema.index_count; ++k) {
            const double v = parse_cell(cells[2 + k], lineno, want[2 + k]);
            if (v < 0.0) {
                throw DataError(DataError::Kind::BadValue, row_prefix(lineno) + want[2 + k] + " must be nonnegative");
            }
            rec.features[schema.index_column(k)] = v;
        }
        const std::size_t base = 2 + schema.index_count;
        rec.features[schema.temperature_column()] = parse_cell(cells[base], lineno, "temp_max");
        rec.features[schema.weather_column()] = parse_code(cells[base + 1], lineno, "weather", 4, &encode_weather);
        rec.features[schema.date_type_column()] =
            parse_code(cells[base + 2], lineno, "date_type", 2, &encode_date_type);
        const int month = parse_code(cells[base + 3], lineno, "month", 11, nullptr);
        const int weekday = parse_code(cells[base + 4], lineno, "weekday", 6, nullptr);
        const auto cal = encode_calendar(rec.date);
        if (month != cal.month_code || weekday != cal.weekday_code) {
            throw DataError(DataError::Kind::CodeRange, row_prefix(lineno) + "month/weekday codes " +
                                                            std::to_string(month) + "/" + std::to_string(weekday) +
                                                            " do not match date " + cells[0]);
        }
        rec.features[schema.month_column()] = month;
        rec.features[schema.weekday_column()] = weekday;
        ds.rows.push_back(std::move(rec));
        line_of_row.push_back(lineno);
    }

    std::vector<std::size_t> order(ds.rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ds.rows[a].date < ds.rows[b].date; });
    std::vector<Record> sorted;
    sorted.reserve(order.size());
    for (auto i : order) sorted.push_back(std::move(ds.rows[i]));
    ds.rows = std::move(sorted);

    for (std::size_t i = 1; i < ds.rows.size(); ++i) {
        const auto step = (ds.rows[i].date - ds.rows[i - 1].date).count();
        const std::size_t src_line = line_of_row[order[i]];
        if (step == 0) {
            throw DataError(DataError::Kind::DuplicateDate,
                            row_prefix(src_line) + "duplicate date " + format_date(ds.rows[i].date));
        }
        if (step > 1) {
            throw DataError(DataError::Kind::DateGap, row_prefix(src_line) + "date gap: missing " +
                                                          format_date(ds.rows[i - 1].date + days{1}));
        }
    }
    return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

Dataset load_csv(const std::filesystem::path& path, const RecordSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), schema);
}

namespace {
std::string format_real(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}
}  // namespace

std::string to_csv(const Dataset& dataset) {
    std::ostringstream os;
    const auto names = dataset.schema.column_names();
    for (std::size_t i = 0; i < names.size(); ++i) os << (i ? "," : "") << names[i];
    os << '\n';
    const auto& s = dataset.schema;
    for (const auto& r : dataset.rows) {
        os << format_date(r.date);
        for (std::size_t j = 0; j < r.features.size(); ++j) {
            os << ',';
            const bool code = j >= s.weather_column();
            if (code) {
                os << static_cast<int>(r.features[j]);
            } else {
                os << format_real(r.features[j]);
            }
        }
        os << '\n';
    }
    return os.str();
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_csv(dataset);
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------- normalization

NormalizationStats::NormalizationStats(std::vector<Column> columns) : columns_(std::move(columns)) {
    for (const auto& c : columns_) {
        if (!(c.max >= c.min)) throw ConfigError("normalization column " + c.name + " has max < min");
    }
}

NormalizationStats NormalizationStats::fit(const Dataset& train) {
    if (train.empty()) throw DataError(DataError::Kind::TooShort, "cannot fit normalization on an empty split");
    const auto names = train.schema.feature_names();
    std::vector<Column> cols(names.size());
    for (std::size_t j = 0; j < names.size(); ++j) {
        cols[j].name = names[j];
        cols[j].min = cols[j].max = train.rows.front().features[j];
    }
    for (const auto& r : train.rows) {
        for (std::size_t j = 0; j < names.size(); ++j) {
            cols[j].min = std::min(cols[j].min, r.features[j]);
            cols[j].max = std::max(cols[j].max, r.features[j]);
        }
    }
    return NormalizationStats(std::move(cols));
}

bool NormalizationStats::is_constant(std::size_t column) const {
    return columns_.at(column).max == columns_.at(column).min;
}

double NormalizationStats::apply(double value, std::size_t column) const {
    const auto& c = columns_.at(column);
    if (c.max == c.min) return 0.0;
    return (value - c.min) / (c.max - c.min);
}

double NormalizationStats::invert(double value, std::size_t column) const {
    const auto& c = columns_.at(column);
    if (c.max == c.min) throw ConfigError("cannot invert normalization of constant column " + c.name);
    return value * (c.max - c.min) + c.min;
}

// ---------------------------------------------------------------- windows

namespace {

std::vector<std::size_t> known_token_columns(const RecordSchema& schema, const WindowOptions& options) {
    std::vector<std::size_t> cols;
    if (!options.use_calendar) return cols;
    for (const auto& name : options.token_known_columns) {
        auto idx = schema.feature_index(name);
        if (!idx) throw ConfigError("token_known_columns: unknown column '" + name + "'");
        if (*idx == RecordSchema::demand_column() || (*idx >= 1 && *idx < 1 + schema.index_count)) {
            throw ConfigError("token_known_columns: '" + name + "' is unknown for future days");
        }
        cols.push_back(*idx);
    }
    return cols;
}

void check_fit(const Dataset& dataset, const ModelConfig& config, const NormalizationStats& stats) {
    config.validate();
    if (config.feature_dim != dataset.schema.feature_dim()) {
        throw ConfigError("model feature_dim " + std::to_string(config.feature_dim) + " does not match dataset (" +
                          std::to_string(dataset.schema.feature_dim()) + ")");
    }
    if (stats.size() != dataset.schema.feature_dim()) {
        throw ConfigError("normalization stats cover " + std::to_string(stats.size()) + " columns, dataset has " +
                          std::to_string(dataset.schema.feature_dim()));
    }
}

// Decoder rows start at day t-(L_dec-h)+1; fills rows [0, count) from the dataset.
WindowSample build_window(const Dataset& dataset, std::size_t origin, const ModelConfig& config,
                          const NormalizationStats& stats, const std::vector<std::size_t>& known, bool with_targets) {
    const std::size_t F = config.feature_dim;
    const std::size_t L_enc = config.encoder_input_length;
    const std::size_t L_dec = config.decoder_input_length;
    const std::size_t h = config.forecast_horizon;
    const auto& schema = dataset.schema;

    auto normalized_row = [&](std::size_t day, double* out) {
        const auto& f = dataset.rows[day].features;
        for (std::size_t j = 0; j < F; ++j) out[j] = stats.apply(f[j], j);
    };

    std::vector<double> enc(L_enc * F);
    for (std::size_t r = 0; r < L_enc; ++r) normalized_row(origin + 1 - L_enc + r, enc.data() + r * F);

    std::vector<double> dec(L_dec * F, 0.0);
    std::vector<double> target(L_dec, 0.0);
    std::vector<double> target_raw(L_dec, 0.0);
    std::vector<bool> flags(L_dec, false);
    const Date origin_date = dataset.rows[origin].date;
    const std::size_t first_day = origin + 1 + h - L_dec;  // index of decoder row 0
    for (std::size_t r = 0; r < L_dec; ++r) {
        const std::size_t day = first_day + r;
        const bool token = r >= L_dec - h;
        flags[r] = token;
        double* row = dec.data() + r * F;
        if (!token) {
            normalized_row(day, row);
        } else {
            const Date future = origin_date + days{static_cast<int>(r - (L_dec - h) + 1)};
            const auto cal = encode_calendar(future);
            for (auto col : known) {
                double raw = 0.0;
                if (col == schema.month_column()) {
                    raw = cal.month_code;
                } else if (col == schema.weekday_column()) {
                    raw = cal.weekday_code;
                } else if (day < dataset.size()) {
                    raw = dataset.rows[day].features[col];
                } else {
                    throw ConfigError("token column '" + stats.columns()[col].name +
                                      "' is not derivable beyond the end of the data");
                }
                row[col] = stats.apply(raw, col);
            }
        }
        if (with_targets) {
            target_raw[r] = dataset.rows[day].features[RecordSchema::demand_column()];
            target[r] = stats.apply(target_raw[r], RecordSchema::demand_column());
        }
    }

    WindowSample s;
    s.origin_date = origin_date;
    s.origin_index = origin;
    s.encoder = nc::Tensor::matrix(L_enc, F, std::move(enc));
    s.decoder = nc::Tensor::matrix(L_dec, F, std::move(dec));
    s.target = nc::Tensor::matrix(L_dec, 1, std::move(target));
    s.target_raw = std::move(target_raw);
    s.token_flags = std::move(flags);
    return s;
}

}  // namespace

WindowSample make_window(const Dataset& dataset, std::size_t origin_index, const ModelConfig& config,
                         const NormalizationStats& stats, const WindowOptions& options) {
    check_fit(dataset, config, stats);
    if (origin_index + 1 < config.encoder_input_length ||
        origin_index + config.forecast_horizon >= dataset.size()) {
        throw DataError(DataError::Kind::TooShort, "origin " + std::to_string(origin_index) +
                                                       " has no full window in a dataset of " +
                                                       std::to_string(dataset.size()) + " days");
    }
    return build_window(dataset, origin_index, config, stats, known_token_columns(dataset.schema, options), true);
}

std::vector<WindowSample> make_windows(const Dataset& dataset, const ModelConfig& config,
                                       const NormalizationStats& stats, const WindowOptions& options) {
    check_fit(dataset, config, stats);
    const std::size_t L_enc = config.encoder_input_length;
    const std::size_t h = config.forecast_horizon;
    if (dataset.size() < L_enc + h) {
        throw DataError(DataError::Kind::TooShort, "dataset of " + std::to_string(dataset.size()) +
                                                       " days is shorter than encoder length + horizon (" +
                                                       std::to_string(L_enc + h) + ")");
    }
    const auto known = known_token_columns(dataset.schema, options);
    std::vector<WindowSample> out;
    for (std::size_t origin = L_enc - 1; origin + h < dataset.size(); ++origin) {
        if (options.target_range) {
            const Date first = dataset.rows[origin + 1].date;
            const Date last = dataset.rows[origin + h].date;
            if (!options.target_range->contains(first) || !options.target_range->contains(last)) continue;
        }
        out.push_back(build_window(dataset, origin, config, stats, known, true));
    }
    return out;
}

WindowSample make_forecast_window(const Dataset& dataset, const ModelConfig& config,
                                  const NormalizationStats& stats, const WindowOptions& options) {
    check_fit(dataset, config, stats);
    if (dataset.size() < config.encoder_input_length) {
        throw DataError(DataError::Kind::TooShort, "need at least " + std::to_string(config.encoder_input_length) +
                                                       " days of history, got " + std::to_string(dataset.size()));
    }
    return build_window(dataset, dataset.size() - 1, config, stats, known_token_columns(dataset.schema, options),
                        false);
}

WindowSample make_forecast_window(const Dataset& dataset, std::size_t origin_index, const ModelConfig& config,
                                  const NormalizationStats& stats, const WindowOptions& options) {
    check_fit(dataset, config, stats);
    if (origin_index >= dataset.size() || origin_index + 1 < config.encoder_input_length) {
        throw DataError(DataError::Kind::TooShort, "origin " + std::to_string(origin_index) +
                                                       " lacks " + std::to_string(config.encoder_input_length) +
                                                       " days of history");
    }
    return build_window(dataset, origin_index, config, stats, known_token_columns(dataset.schema, options), false);
}

// ---------------------------------------------------------------- splits

namespace {
DateRange range_of(const Dataset& d) { return {d.rows.front().date, d.rows.back().date}; }
}  // namespace

DateRange Splits::train_range() const { return range_of(train); }
DateRange Splits::validate_range() const { return range_of(validate); }
DateRange Splits::test_range() const { return range_of(test); }

Splits split(const Dataset& dataset, const SplitSpec& spec) {
    if (dataset.empty()) throw DataError(DataError::Kind::Split, "cannot split an empty dataset");
    const Date first = dataset.rows.front().date;
    const Date last = dataset.rows.back().date;
    if (!(spec.train_end >= first && spec.train_end < spec.validate_end && spec.validate_end < last)) {
        throw DataError(DataError::Kind::Split, "invalid split: need " + format_date(first) +
                                                    " <= train_end < validate_end < " + format_date(last) +
                                                    ", got train_end=" + format_date(spec.train_end) +
                                                    " validate_end=" + format_date(spec.validate_end));
    }
    Splits out;
    for (auto* part : {&out.train, &out.validate, &out.test}) part->schema = dataset.schema;
    for (const auto& r : dataset.rows) {
        if (r.date <= spec.train_end) {
            out.train.rows.push_back(r);
        } else if (r.date <= spec.validate_end) {
            out.validate.rows.push_back(r);
        } else {
            out.test.rows.push_back(r);
        }
    }
    return out;
}

SplitSpec split_by_fraction(const Dataset& dataset, double train_fraction, double validate_fraction) {
    const auto n = static_cast<double>(dataset.size());
    if (!(train_fraction > 0.0 && validate_fraction > 0.0 && train_fraction + validate_fraction < 1.0)) {
        throw DataError(DataError::Kind::Split, "split fractions must be positive and sum below 1");
    }
    const auto n_train = static_cast<std::size_t>(std::floor(n * train_fraction));
    const auto n_val = static_cast<std::size_t>(std::floor(n * validate_fraction));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= dataset.size()) {
        throw DataError(DataError::Kind::Split, "dataset too short for the requested split");
    }
    return {dataset.rows[n_train - 1].date, dataset.rows[n_train + n_val - 1].date};
}

// ---------------------------------------------------------------- synthetic data

double weekly_profile(int weekday_code) {
    // Peak on Saturday (code 5), trough midweek.
    return std::cos(2.0 * std::numbers::pi * (weekday_code - 5) / 7.0);
}

double annual_profile(Date date) {
    const year_month_day ymd{date};
    const Date jan1{ymd.year() / 1 / 1};
    const double doy = static_cast<double>((date - jan1).count());
    // Peak around day 270 (late September).
    return std::cos(2.0 * std::numbers::pi * (doy - 270.0) / 365.25);
}

bool is_holiday(Date date, const std::vector<HolidaySpan>& holidays) {
    const year_month_day ymd{date};
    for (const auto& hs : holidays) {
        const std::chrono::year_month_day start{ymd.year(), std::chrono::month{hs.month}, std::chrono::day{hs.day}};
        if (!start.ok()) continue;
        const auto offset = (date - Date{start}).count();
        if (offset >= 0 && offset < static_cast<long>(hs.length)) return true;
    }
    return false;
}

void SynthSpec::validate() const {
    if (days < 400) throw ConfigError("synth: days must be at least 400");
    if (!(base > 0.0)) throw ConfigError("synth: base must be positive");
    if (weekly_amp < 0.0 || annual_amp < 0.0 || holiday_amp < 0.0) {
        throw ConfigError("synth: amplitudes must be nonnegative");
    }
    if (noise < 0.0) throw ConfigError("synth: noise must be nonnegative");
    for (const auto& h : holidays) {
        if (h.month < 1 || h.month > 12 || h.day < 1 || h.day > 31 || h.length < 1) {
            throw ConfigError("synth: invalid holiday span");
        }
    }
}

SynthSpec SynthSpec::from_keyvalues(const KeyValues& kv) {
    static const std::vector<std::string> known{"days",        "start", "base",     "weekly_amp", "annual_amp",
                                                "holiday_amp", "noise", "holidays", "k_indexes",  "seed"};
    if (auto extra = kv.unknown_keys(known); !extra.empty()) {
        throw ConfigError("synth spec: unknown key '" + extra.front() + "'");
    }
    SynthSpec s;
    s.days = kv.get_size("days", s.days);
    if (auto start = kv.get("start")) {
        auto d = parse_date(*start);
        if (!d) throw ConfigError("synth spec: invalid start date '" + *start + "'");
        s.start = *d;
    }
    s.base = kv.get_double("base", s.base);
    s.weekly_amp = kv.get_double("weekly_amp", s.weekly_amp);
    s.annual_amp = kv.get_double("annual_amp", s.annual_amp);
    s.holiday_amp = kv.get_double("holiday_amp", s.holiday_amp);
    s.noise = kv.get_double("noise", s.noise);
    if (auto h = kv.get("holidays")) {
        s.holidays.clear();
        for (const auto& item : split_list(*h)) {
            HolidaySpan span;
            std::string md = item;
            if (auto plus = item.find('+'); plus != std::string::npos) {
                md = item.substr(0, plus);
                span.length = static_cast<unsigned>(parse_int(item.substr(plus + 1), "holidays"));
            }
            if (md.size() != 5 || md[2] != '-') throw ConfigError("synth spec: holiday '" + item + "' is not MM-DD");
            span.month = static_cast<unsigned>(parse_int(md.substr(0, 2), "holidays"));
            span.day = static_cast<unsigned>(parse_int(md.substr(3, 2), "holidays"));
            s.holidays.push_back(span);
        }
    }
    s.k_indexes = kv.get_size("k_indexes", s.k_indexes);
    s.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(s.seed)));
    s.validate();
    return s;
}

Dataset synth_generate(const SynthSpec& spec) {
    spec.validate();
    // Independent streams so that changing one column's noise leaves the others intact.
    std::seed_seq seq{spec.seed, std::uint64_t{0x7473666f726d6572ULL}};
    std::array<std::uint64_t, 4> seeds{};
    seq.generate(seeds.begin(), seeds.end());
    std::mt19937_64 demand_rng(seeds[0]), index_rng(seeds[1]), weather_rng(seeds[2]), temp_rng(seeds[3]);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::discrete_distribution<int> weather_dist({0.05, 0.25, 0.20, 0.25, 0.25});

    Dataset ds;
    ds.schema.index_count = spec.k_indexes;
    const auto& schema = ds.schema;
    std::vector<double> demand(spec.days);
    for (std::size_t t = 0; t < spec.days; ++t) {
        const Date date = spec.start + days{static_cast<int>(t)};
        const auto cal = encode_calendar(date);
        const double spike = is_holiday(date, spec.holidays) ? spec.holiday_amp : 0.0;
        const double level = 1.0 + spec.weekly_amp * weekly_profile(cal.weekday_code) +
                             spec.annual_amp * annual_profile(date) + spike;
        const double eps = spec.noise > 0.0 ? spec.noise * gauss(demand_rng) : 0.0;
        demand[t] = std::max(1.0, spec.base * level * (1.0 + eps));
    }
    for (std::size_t t = 0; t < spec.days; ++t) {
        Record r;
        r.date = spec.start + days{static_cast<int>(t)};
        r.features.assign(schema.feature_dim(), 0.0);
        r.features[0] = demand[t];
        for (std::size_t k = 0; k < spec.k_indexes; ++k) {
            const std::size_t lag = 1 + k % 3;
            const double lagged = demand[t >= lag ? t - lag : 0];
            const double eps = spec.noise > 0.0 ? spec.noise * gauss(index_rng) : 0.0;
            r.features[schema.index_column(k)] = std::max(0.0, 0.1 * lagged * (1.0 + eps));
        }
        r.features[schema.temperature_column()] = 12.0 + 12.0 * annual_profile(r.date) + 2.0 * gauss(temp_rng);
        r.features[schema.weather_column()] = weather_dist(weather_rng);
        const auto cal = encode_calendar(r.date);
        int date_type = 0;
        if (is_holiday(r.date, spec.holidays)) {
            date_type = 2;
        } else if (cal.weekday_code >= 5) {
            date_type = 1;
        }
        r.features[schema.date_type_column()] = date_type;
        r.features[schema.month_column()] = cal.month_code;
        r.features[schema.weekday_column()] = cal.weekday_code;
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

}  // namespace tsformer::data
