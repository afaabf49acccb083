#include "tsformer/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tsformer/errors.hpp"
#include "tsformer/keyvalue.hpp"

namespace tsformer::interpret {

std::vector<std::string> encoder_day_labels(const ModelConfig& config) {
    std::vector<std::string> out;
    for (std::size_t d = 1; d <= config.encoder_input_length; ++d) out.push_back("day_" + std::to_string(d));
    return out;
}

std::vector<std::string> decoder_day_labels(const ModelConfig& config) {
    std::vector<std::string> out;
    const std::size_t first = config.encoder_input_length - config.overlap() + 1;
    for (std::size_t r = 0; r < config.decoder_input_length; ++r) out.push_back("day_" + std::to_string(first + r));
    return out;
}

namespace {

WeightMatrix empty_matrix(const Tensor& mask, std::vector<std::string> rows, std::vector<std::string> cols) {
    WeightMatrix m;
    m.rows = mask.rows();
    m.cols = mask.cols();
    m.values.assign(m.rows * m.cols, 0.0);
    m.row_labels = std::move(rows);
    m.col_labels = std::move(cols);
    m.masked.resize(m.values.size());
    const auto mv = mask.values();
    for (std::size_t i = 0; i < mv.size(); ++i) m.masked[i] = std::isinf(mv[i]);
    return m;
}

// Adds the head mean of `layer` into `sum`.
void accumulate_head_mean(const LayerAttention& layer, WeightMatrix& sum) {
    const double inv_heads = 1.0 / static_cast<double>(layer.heads);
    for (std::size_t r = 0; r < layer.rows; ++r) {
        for (std::size_t c = 0; c < layer.cols; ++c) {
            double head_sum = 0.0;
            for (std::size_t h = 0; h < layer.heads; ++h) head_sum += layer.at(h, r, c);
            sum.values[r * sum.cols + c] += head_sum * inv_heads;
        }
    }
}

void accumulate_head(const LayerAttention& layer, std::size_t head, WeightMatrix& sum) {
    for (std::size_t r = 0; r < layer.rows; ++r)
        for (std::size_t c = 0; c < layer.cols; ++c) sum.values[r * sum.cols + c] += layer.at(head, r, c);
}

void divide(WeightMatrix& m, double n) {
    for (auto& v : m.values) v /= n;
}

}  // namespace

AttentionSummary capture_attention(const TsformerModel& model, std::span<const data::WindowSample> samples,
                                   const CaptureOptions& options) {
    if (samples.empty()) throw ConfigError("capture_attention: no samples");
    const auto& cfg = model.config();
    const auto& masks = model.masks();
    AttentionSummary s;
    s.sample_count = samples.size();
    s.head_count = cfg.heads;
    s.encoder_length = cfg.encoder_input_length;
    s.decoder_length = cfg.decoder_input_length;
    s.horizon = cfg.forecast_horizon;
    const auto enc_labels = encoder_day_labels(cfg);
    const auto dec_labels = decoder_day_labels(cfg);
    for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
        s.self_avg.push_back(empty_matrix(masks.decoder_target, dec_labels, dec_labels));
        s.cross_avg.push_back(empty_matrix(masks.decoder_memory, dec_labels, enc_labels));
        if (options.per_head) {
            s.self_per_head.emplace_back(cfg.heads, s.self_avg.back());
            s.cross_per_head.emplace_back(cfg.heads, s.cross_avg.back());
        }
    }
    if (options.include_encoder) {
        for (std::size_t l = 0; l < cfg.encoder_layers; ++l)
            s.encoder_self_avg.push_back(empty_matrix(masks.encoder_source, enc_labels, enc_labels));
    }

    nc::NoGradScope no_grad;
    const ForwardContext ctx{false, nullptr, true};
    for (const auto& sample : samples) {
        const auto trace = forward(sample, model, ctx).trace;
        for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
            accumulate_head_mean(trace.decoder_self[l], s.self_avg[l]);
            accumulate_head_mean(trace.decoder_cross[l], s.cross_avg[l]);
            if (options.per_head) {
                for (std::size_t h = 0; h < cfg.heads; ++h) {
                    accumulate_head(trace.decoder_self[l], h, s.self_per_head[l][h]);
                    accumulate_head(trace.decoder_cross[l], h, s.cross_per_head[l][h]);
                }
            }
        }
        if (options.include_encoder) {
            for (std::size_t l = 0; l < cfg.encoder_layers; ++l)
                accumulate_head_mean(trace.encoder_self[l], s.encoder_self_avg[l]);
        }
    }
    const double n = static_cast<double>(samples.size());
    for (auto* group : {&s.self_avg, &s.cross_avg, &s.encoder_self_avg})
        for (auto& m : *group) divide(m, n);
    for (auto* group : {&s.self_per_head, &s.cross_per_head})
        for (auto& layer : *group)
            for (auto& m : layer) divide(m, n);
    return s;
}

// ---------------------------------------------------------------- CSV

std::string matrix_csv(const WeightMatrix& m) {
    std::ostringstream os;
    os.precision(17);
    os << "query_day";
    for (const auto& c : m.col_labels) os << ',' << c;
    os << '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
        os << m.row_labels[r];
        for (std::size_t c = 0; c < m.cols; ++c) os << ',' << m.at(r, c);
        os << '\n';
    }
    return os.str();
}

namespace {

struct NamedMatrix {
    std::string stem;
    const WeightMatrix* matrix;
    std::string title;
};

std::vector<NamedMatrix> named_matrices(const AttentionSummary& s) {
    std::vector<NamedMatrix> out;
    for (std::size_t l = 0; l < s.self_avg.size(); ++l) {
        const std::string layer = std::to_string(l + 1);
        out.push_back({"decoder_layer" + layer + "_self", &s.self_avg[l], "Decoder layer " + layer + " self-attention"});
        out.push_back({"decoder_layer" + layer + "_cross", &s.cross_avg[l],
                       "Decoder layer " + layer + " encoder-decoder attention"});
    }
    for (std::size_t l = 0; l < s.self_per_head.size(); ++l) {
        const std::string layer = std::to_string(l + 1);
        for (std::size_t h = 0; h < s.self_per_head[l].size(); ++h) {
            const std::string head = std::to_string(h + 1);
            out.push_back({"decoder_layer" + layer + "_self_head" + head, &s.self_per_head[l][h],
                           "Decoder layer " + layer + " self-attention, head " + head});
            out.push_back({"decoder_layer" + layer + "_cross_head" + head, &s.cross_per_head[l][h],
                           "Decoder layer " + layer + " encoder-decoder attention, head " + head});
        }
    }
    for (std::size_t l = 0; l < s.encoder_self_avg.size(); ++l) {
        const std::string layer = std::to_string(l + 1);
        out.push_back({"encoder_layer" + layer + "_self", &s.encoder_self_avg[l],
                       "Encoder layer " + layer + " self-attention"});
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

std::vector<std::filesystem::path> export_csv(const AttentionSummary& summary, const std::filesystem::path& directory) {
    ensure_directory(directory);
    std::vector<std::filesystem::path> written;
    for (const auto& nm : named_matrices(summary)) {
        auto path = directory / (nm.stem + ".csv");
        write_text(path, matrix_csv(*nm.matrix));
        written.push_back(path);
    }
    return written;
}

WeightMatrix import_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    WeightMatrix m;
    std::string line;
    if (!std::getline(in, line)) throw DataError(DataError::Kind::MissingColumn, path.string() + ": empty file");
    auto header = split_list(line);
    if (header.empty() || header.front() != "query_day") {
        throw DataError(DataError::Kind::MissingColumn, path.string() + ": missing query_day header");
    }
    m.col_labels.assign(header.begin() + 1, header.end());
    m.cols = m.col_labels.size();
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_list(line);
        if (cells.size() != m.cols + 1) {
            throw DataError(DataError::Kind::BadValue, path.string() + ": row " + std::to_string(m.rows + 1) +
                                                           " has " + std::to_string(cells.size()) + " cells");
        }
        m.row_labels.push_back(cells[0]);
        for (std::size_t c = 1; c < cells.size(); ++c) m.values.push_back(parse_double(cells[c], path.string()));
        ++m.rows;
    }
    return m;
}

// ---------------------------------------------------------------- SVG

namespace {
std::string day_number(const std::string& label) {
    const auto pos = label.find('_');
    return pos == std::string::npos ? label : label.substr(pos + 1);
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}
}  // namespace

std::string heatmap_svg(const WeightMatrix& m, const std::string& title) {
    constexpr int cell = 28;
    constexpr int left = 64;
    constexpr int top = 64;
    constexpr int right = 24;
    constexpr int bottom = 40;
    const int width = left + static_cast<int>(m.cols) * cell + right;
    const int height = top + static_cast<int>(m.rows) * cell + bottom;

    double max_weight = 0.0;
    for (std::size_t i = 0; i < m.values.size(); ++i)
        if (m.masked.empty() || !m.masked[i]) max_weight = std::max(max_weight, m.values[i]);

    std::ostringstream os;
    os << R"(<?xml version="1.0" encoding="UTF-8"?>)" << '\n';
    os << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height
       << R"(" viewBox="0 0 )" << width << ' ' << height << R"(" font-family="sans-serif">)" << '\n';
    os << R"svg(<defs><pattern id="masked" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">)svg"
       << R"(<rect width="6" height="6" fill="#e0e0e0"/><line x1="0" y1="0" x2="0" y2="6" stroke="#a0a0a0" stroke-width="2"/>)"
       << "</pattern></defs>\n";
    os << R"(<rect width="100%" height="100%" fill="#ffffff"/>)" << '\n';
    os << R"(<text x=")" << width / 2 << R"(" y="18" font-size="13" text-anchor="middle">)" << escape(title)
       << "</text>\n";
    os << R"(<text x=")" << left + static_cast<int>(m.cols) * cell / 2
       << R"(" y="36" font-size="11" text-anchor="middle">key day</text>)" << '\n';
    os << R"(<text x="14" y=")" << top + static_cast<int>(m.rows) * cell / 2
       << R"(" font-size="11" text-anchor="middle" transform="rotate(-90 14 )"
       << top + static_cast<int>(m.rows) * cell / 2 << R"svg()">query day</text>)svg" << '\n';

    for (std::size_t c = 0; c < m.cols; ++c) {
        const int x = left + static_cast<int>(c) * cell + cell / 2;
        os << R"(<text x=")" << x << R"(" y=")" << top - 6 << R"(" font-size="10" text-anchor="middle">)"
           << escape(day_number(m.col_labels[c])) << "</text>\n";
    }
    for (std::size_t r = 0; r < m.rows; ++r) {
        const int y = top + static_cast<int>(r) * cell + cell / 2 + 4;
        os << R"(<text x=")" << left - 6 << R"(" y=")" << y << R"(" font-size="10" text-anchor="end">)"
           << escape(day_number(m.row_labels[r])) << "</text>\n";
        for (std::size_t c = 0; c < m.cols; ++c) {
            const int x = left + static_cast<int>(c) * cell;
            const int yy = top + static_cast<int>(r) * cell;
            os << R"(<rect x=")" << x << R"(" y=")" << yy << R"(" width=")" << cell << R"(" height=")" << cell << '"';
            if (m.is_masked(r, c)) {
                os << " fill=\"url(#masked)\" class=\"masked\"";
            } else {
                const double t = max_weight > 0.0 ? std::clamp(m.at(r, c) / max_weight, 0.0, 1.0) : 0.0;
                const auto channel = [t](int hi) { return static_cast<int>(std::lround(255.0 + (hi - 255.0) * t)); };
                char fill[8];
                std::snprintf(fill, sizeof fill, "#%02x%02x%02x", channel(8), channel(48), channel(107));
                os << " fill=\"" << fill << '"';
                std::ostringstream w;
                w.precision(6);
                w << m.at(r, c);
                os << " data-weight=\"" << w.str() << '"';
            }
            os << R"( stroke="#ffffff" stroke-width="1"/>)" << '\n';
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<std::filesystem::path> render_heatmap(const AttentionSummary& summary,
                                                  const std::filesystem::path& directory) {
    ensure_directory(directory);
    std::vector<std::filesystem::path> written;
    for (const auto& nm : named_matrices(summary)) {
        auto path = directory / (nm.stem + ".svg");
        write_text(path, heatmap_svg(*nm.matrix, nm.title));
        written.push_back(path);
    }
    return written;
}

}  // namespace tsformer::interpret
