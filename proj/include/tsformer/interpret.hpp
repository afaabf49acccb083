#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsformer/data.hpp"
#include "tsformer/model.hpp"

namespace tsformer::interpret {

struct WeightMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<bool> masked;  // per cell; empty when unknown

    bool is_masked(std::size_t r, std::size_t c) const { return !masked.empty() && masked[r * cols + c]; }

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Attention weights averaged over heads, then over samples, per decoder layer.
struct AttentionSummary {
    std::size_t sample_count = 0;
    std::size_t head_count = 0;
    std::size_t encoder_length = 0;
    std::size_t decoder_length = 0;
    std::size_t horizon = 0;
    std::vector<WeightMatrix> self_avg;   // [L_dec x L_dec] per decoder layer
    std::vector<WeightMatrix> cross_avg;  // [L_dec x L_enc] per decoder layer
    std::vector<WeightMatrix> encoder_self_avg;           // optional
    std::vector<std::vector<WeightMatrix>> self_per_head;   // [layer][head], optional
    std::vector<std::vector<WeightMatrix>> cross_per_head;  // [layer][head], optional
};

struct CaptureOptions {
    bool include_encoder = false;
    bool per_head = false;
};

/// Day labels of the window layout: encoder days 1..L_enc, decoder days
/// L_enc-overlap+1 .. L_enc+h.
std::vector<std::string> encoder_day_labels(const ModelConfig& config);
std::vector<std::string> decoder_day_labels(const ModelConfig& config);

/// Runs inference with tracing on every sample and averages the traces.
AttentionSummary capture_attention(const TsformerModel& model, std::span<const data::WindowSample> samples,
                                   const CaptureOptions& options = {});

/// Writes decoder_layer{l}_{self|cross}.csv (plus per-head and encoder files
/// when present). Layers are numbered from 1. Returns the paths written.
std::vector<std::filesystem::path> export_csv(const AttentionSummary& summary, const std::filesystem::path& directory);

WeightMatrix import_csv(const std::filesystem::path& path);
std::string matrix_csv(const WeightMatrix& m);

/// One standalone SVG heatmap per matrix, named like the CSV files.
std::vector<std::filesystem::path> render_heatmap(const AttentionSummary& summary,
                                                  const std::filesystem::path& directory);
std::string heatmap_svg(const WeightMatrix& m, const std::string& title);

}  // namespace tsformer::interpret
