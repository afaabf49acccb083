#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsformer/data.hpp"
#include "tsformer/eval.hpp"
#include "tsformer/keyvalue.hpp"
#include "tsformer/model_config.hpp"
#include "tsformer/train.hpp"

namespace tsformer::cli {

inline constexpr const char* kArtifactVersion = "1.0.0";

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

/// Everything a training run needs besides the data.
///
/// Keys (all optional):
///   encoder_input_length decoder_input_length forecast_horizon d_model heads
///   encoder_layers decoder_layers ffn_dim dropout positional_encoding
///   learning_rate batch_size max_epochs patience grad_clip_norm (or "none")
///   seed loss_on_overlap use_calendar token_known_columns
///   train_end validate_end (ISO dates) train_fraction validate_fraction
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    bool use_calendar = true;
    std::vector<std::string> token_known_columns{"month", "weekday"};
    std::optional<data::Date> train_end;
    std::optional<data::Date> validate_end;
    double train_fraction = 0.6;
    double validate_fraction = 0.2;

    static RunConfig from_keyvalues(const KeyValues& kv);
    /// Fully resolved configuration, one entry per documented key.
    std::map<std::string, std::string> resolved() const;

    data::WindowOptions window_options() const;
    data::SplitSpec split_for(const data::Dataset& dataset) const;
};

/// Command-line overrides applied on top of a config file.
struct Overrides {
    std::vector<std::string> set;  // "key=value"
    std::optional<std::size_t> horizon;
    bool no_calendar = false;
    std::optional<std::uint64_t> seed;
};

/// Loads `path` (or defaults when empty) and applies the overrides: first
/// every --set, then --seed and --no-calendar, then --horizon, which resizes
/// the windows the same way the ablation does.
RunConfig resolve_config(const std::optional<std::filesystem::path>& path, const Overrides& overrides);

/// Reproducibility record written next to every command's outputs.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> input_digests;  // path -> sha256
    std::map<std::string, std::string> outputs;        // path -> sha256
    std::map<std::string, std::string> extra;

    std::string to_json() const;
    void write(const std::filesystem::path& path) const;
};

std::string sha256_file(const std::filesystem::path& path);

// ---------------------------------------------------------------- commands

struct SynthArgs {
    std::optional<std::filesystem::path> spec;
    std::filesystem::path out;
    std::vector<std::string> set;
    std::optional<std::uint64_t> seed;
};
RunManifest cmd_synth(const SynthArgs& args);

struct TrainArgs {
    std::filesystem::path data;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out;  // checkpoint; history and manifest are written beside it
    Overrides overrides;
    bool verbose = false;
};
RunManifest cmd_train(const TrainArgs& args);

struct EvaluateArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::vector<std::size_t> horizons{1, 7, 15, 30};
    std::string split = "test";
    bool oracle = false;
    bool per_lead = false;
    std::filesystem::path out_dir;
};

struct EvaluateResult {
    RunManifest manifest;
    std::vector<eval::EvaluationRun> runs;
};
EvaluateResult cmd_evaluate(const EvaluateArgs& args);

struct ForecastArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::optional<std::string> origin;  // ISO date; default is the last row
    std::optional<std::filesystem::path> out;
};

struct ForecastRow {
    data::Date date;
    double forecast = 0.0;
};

/// Single-origin prediction. Writes `date,forecast` CSV to `out` when given.
std::vector<ForecastRow> cmd_forecast(const ForecastArgs& args);

struct AblateArgs {
    std::filesystem::path data;
    std::optional<std::filesystem::path> config;
    Overrides overrides;
    std::vector<std::size_t> horizons{1, 7, 15, 30};
    std::filesystem::path out_dir;
};

struct AblateResult {
    RunManifest manifest;
    eval::AblationReport report;
};
AblateResult cmd_ablate(const AblateArgs& args);

struct AttentionArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::filesystem::path out_dir;
    bool per_head = false;
    bool include_encoder = false;
    bool svg = true;
};
RunManifest cmd_attention(const AttentionArgs& args);

struct GridArgs {
    std::filesystem::path data;
    std::filesystem::path grid;
    std::optional<std::filesystem::path> config;
    Overrides overrides;
    std::filesystem::path out;  // ranked CSV
    std::size_t threads = 1;
};

struct GridSearchResult {
    RunManifest manifest;
    std::vector<GridResult> results;
};
GridSearchResult cmd_gridsearch(const GridArgs& args);

std::string ranked_csv(const std::vector<GridResult>& results);

/// Maps an exception to its exit code and the one-line `error[kind]: ...` text.
std::pair<int, std::string> diagnose(const std::exception& e);

}  // namespace tsformer::cli
