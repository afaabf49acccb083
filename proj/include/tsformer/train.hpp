#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsformer/data.hpp"
#include "tsformer/keyvalue.hpp"
#include "tsformer/model.hpp"

namespace tsformer {

struct TrainConfig {
    double learning_rate = 3e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 500;
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    std::size_t patience = 30;
    std::optional<double> grad_clip_norm = 1.0;
    std::uint64_t seed = 1;
    /// Supervise every decoder row instead of only the h token rows.
    bool loss_on_overlap = true;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_mae = 0.0;   // NaN when no validation windows
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_mae = 0.0;
    bool stopped_early = false;

    std::string to_csv() const;
};

struct TrainResult {
    TsformerModel model;  // parameters of the best validation epoch
    TrainHistory history;
};

/// Adaptive-moment optimizer state (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// Applies one bias-corrected update using each tensor's gradient buffer.
void adam_step(std::span<Tensor> params, AdamState& state, double learning_rate);

/// Scales gradients so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

/// Loss of one window on the active tape (if any).
Tensor window_loss(const data::WindowSample& sample, const TsformerModel& model, bool loss_on_overlap,
                   const ForwardContext& ctx);

/// Mean absolute error in demand units over the token rows of every window.
double validation_mae(const TsformerModel& model, std::span<const data::WindowSample> windows,
                      const data::NormalizationStats& stats);

using EpochObserver = std::function<void(const EpochRecord&)>;

/// Minimizes the MSE of decoder outputs with mini-batch adaptive-moment
/// descent, keeping the parameters of the epoch with the lowest validation MAE.
TrainResult train(const TsformerModel& initial, std::span<const data::WindowSample> train_windows,
                  std::span<const data::WindowSample> val_windows, const data::NormalizationStats& stats,
                  const TrainConfig& cfg, const EpochObserver& observer = {});

// ---------------------------------------------------------------- grid search

struct GridSpec {
    std::vector<std::size_t> d_model;
    std::vector<std::size_t> heads;
    std::vector<std::size_t> layers;  // applied to encoder and decoder alike
    std::vector<std::size_t> ffn_dim;
    std::vector<double> learning_rate;
    std::vector<double> dropout;

    /// Cartesian product size; empty axes keep the base value.
    std::size_t size() const;
    static GridSpec from_keyvalues(const KeyValues& kv);
};

struct GridPoint {
    ModelConfig model;
    TrainConfig train;
};

std::vector<GridPoint> expand_grid(const GridSpec& grid, const ModelConfig& base_model, const TrainConfig& base_train);

struct GridResult {
    std::size_t index = 0;  // position in expand_grid order
    GridPoint point;
    double val_mae = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::optional<std::string> error;
};

/// Trains one freshly initialized model per grid point and ranks by validation
/// MAE ascending; failed points are ranked last with their error message.
std::vector<GridResult> grid_search(const GridSpec& grid, const ModelConfig& base_model,
                                    const TrainConfig& base_train, std::span<const data::WindowSample> train_windows,
                                    std::span<const data::WindowSample> val_windows,
                                    const data::NormalizationStats& stats, std::size_t threads = 1);

// ---------------------------------------------------------------- checkpoints

struct CheckpointMeta {
    std::size_t epoch = 0;
    double best_val_mae = 0.0;
    std::uint64_t seed = 0;
    bool use_calendar = true;
    std::vector<std::string> token_known_columns{"month", "weekday"};
    std::string train_end;     // ISO date, empty when unknown
    std::string validate_end;  // ISO date, empty when unknown
};

struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    TsformerModel model;
    data::NormalizationStats stats;
    CheckpointMeta meta;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tsformer
