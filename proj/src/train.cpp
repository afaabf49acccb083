#include "tsformer/train.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "tsformer/errors.hpp"

namespace tsformer {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("train config: learning_rate must be a nonnegative finite number");
    }
    if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("train config: max_epochs must be positive");
    if (patience > max_epochs) throw ConfigError("train config: patience exceeds max_epochs");
    if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw ConfigError("train config: grad_clip_norm must be positive");
}

std::string TrainHistory::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,val_mae\n";
    for (const auto& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_mae << '\n';
    return os.str();
}

// ---------------------------------------------------------------- optimizer

void adam_step(std::span<Tensor> params, AdamState& state, double learning_rate) {
    if (state.first_moment.size() != params.size()) {
        state.first_moment.assign(params.size(), {});
        state.second_moment.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i].size(), 0.0);
            state.second_moment[i].assign(params[i].size(), 0.0);
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) continue;
        auto values = params[i].mutable_values();
        const auto grad = params[i].grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * grad[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * grad[j] * grad[j];
            const double m_hat = m[j] / bias1;
            const double v_hat = v[j] / bias2;
            values[j] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (auto& p : params)
            if (p.has_grad())
                for (auto& g : p.mutable_grad()) g *= factor;
    }
    return norm;
}

// ---------------------------------------------------------------- training

Tensor window_loss(const data::WindowSample& sample, const TsformerModel& model, bool loss_on_overlap,
                   const ForwardContext& ctx) {
    const auto out = forward(sample, model, ctx).forecasts;
    if (loss_on_overlap) return nc::mse_loss(out, sample.target);
    const std::size_t L = model.config().decoder_input_length;
    const std::size_t h = model.config().forecast_horizon;
    return nc::mse_loss(nc::slice_rows(out, L - h, h), nc::slice_rows(sample.target, L - h, h));
}

double validation_mae(const TsformerModel& model, std::span<const data::WindowSample> windows,
                      const data::NormalizationStats& stats) {
    if (windows.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t L = model.config().decoder_input_length;
    const std::size_t h = model.config().forecast_horizon;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& w : windows) {
        const auto pred = predict_tokens(w, model);
        for (std::size_t k = 0; k < h; ++k) {
            const double p = stats.invert(pred[k], data::RecordSchema::demand_column());
            total += std::abs(p - w.target_raw[L - h + k]);
            ++n;
        }
    }
    return total / static_cast<double>(n);
}

TrainResult train(const TsformerModel& initial, std::span<const data::WindowSample> train_windows,
                  std::span<const data::WindowSample> val_windows, const data::NormalizationStats& stats,
                  const TrainConfig& cfg, const EpochObserver& observer) {
    cfg.validate();
    if (train_windows.empty()) throw ConfigError("train: no training windows");
    if (cfg.patience > 0 && val_windows.empty()) {
        throw ConfigError("train: early stopping (patience > 0) needs validation windows");
    }
    TsformerModel model(initial);
    TsformerModel best(initial);
    std::vector<Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);

    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    const ForwardContext ctx{true, &dropout_rng, false};
    AdamState adam;

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainHistory history;
    history.best_val_mae = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            for (auto& p : params) p.zero_grad();
            nc::Tape tape;
            nc::TapeScope scope(tape);
            Tensor batch_loss;
            for (std::size_t i = start; i < end; ++i) {
                Tensor l = window_loss(train_windows[order[i]], model, cfg.loss_on_overlap, ctx);
                epoch_loss += l.item();
                batch_loss = batch_loss ? nc::add(batch_loss, l) : l;
            }
            batch_loss = nc::scale(batch_loss, 1.0 / static_cast<double>(end - start));
            ++step;
            if (!std::isfinite(batch_loss.item())) {
                throw DivergenceError(epoch, step,
                                      "training diverged at epoch " + std::to_string(epoch) + ", step " +
                                          std::to_string(step) + " (non-finite loss)");
            }
            nc::backward(batch_loss, tape);
            if (cfg.grad_clip_norm) clip_grad_norm(params, *cfg.grad_clip_norm);
            adam_step(params, adam, cfg.learning_rate);
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = epoch_loss / static_cast<double>(order.size());
        record.val_mae = validation_mae(model, val_windows, stats);
        history.epochs.push_back(record);
        if (observer) observer(record);

        if (val_windows.empty()) {
            history.best_epoch = epoch;
            history.best_val_mae = record.val_mae;
            best.assign_values(model);
            continue;
        }
        if (!std::isfinite(record.val_mae)) {
            throw DivergenceError(epoch, step,
                                  "training diverged at epoch " + std::to_string(epoch) + " (non-finite validation MAE)");
        }
        if (record.val_mae < history.best_val_mae) {
            history.best_val_mae = record.val_mae;
            history.best_epoch = epoch;
            best.assign_values(model);
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            history.stopped_early = true;
            break;
        }
    }
    return {std::move(best), std::move(history)};
}

// ---------------------------------------------------------------- grid search

std::size_t GridSpec::size() const {
    auto axis = [](std::size_t n) { return n == 0 ? std::size_t{1} : n; };
    return axis(d_model.size()) * axis(heads.size()) * axis(layers.size()) * axis(ffn_dim.size()) *
           axis(learning_rate.size()) * axis(dropout.size());
}

GridSpec GridSpec::from_keyvalues(const KeyValues& kv) {
    static const std::vector<std::string> known{"d_model", "heads", "layers", "ffn_dim", "learning_rate", "dropout"};
    if (auto extra = kv.unknown_keys(known); !extra.empty()) {
        throw ConfigError("grid spec: unknown key '" + extra.front() + "'");
    }
    GridSpec g;
    auto sizes = [&](const char* key) {
        std::vector<std::size_t> out;
        for (const auto& s : kv.get_list(key)) {
            const long long v = parse_int(s, key);
            if (v <= 0) throw ConfigError(std::string("grid spec: ") + key + " values must be positive");
            out.push_back(static_cast<std::size_t>(v));
        }
        return out;
    };
    auto reals = [&](const char* key) {
        std::vector<double> out;
        for (const auto& s : kv.get_list(key)) out.push_back(parse_double(s, key));
        return out;
    };
    g.d_model = sizes("d_model");
    g.heads = sizes("heads");
    g.layers = sizes("layers");
    g.ffn_dim = sizes("ffn_dim");
    g.learning_rate = reals("learning_rate");
    g.dropout = reals("dropout");
    return g;
}

std::vector<GridPoint> expand_grid(const GridSpec& grid, const ModelConfig& base_model,
                                   const TrainConfig& base_train) {
    auto or_base = [](const auto& axis, auto base) {
        using T = decltype(base);
        return axis.empty() ? std::vector<T>{base} : std::vector<T>(axis.begin(), axis.end());
    };
    const auto d_models = or_base(grid.d_model, base_model.d_model);
    const auto heads = or_base(grid.heads, base_model.heads);
    const auto layers = or_base(grid.layers, base_model.encoder_layers);
    const auto ffns = or_base(grid.ffn_dim, base_model.ffn_dim);
    const auto lrs = or_base(grid.learning_rate, base_train.learning_rate);
    const auto drops = or_base(grid.dropout, base_model.dropout);

    std::vector<GridPoint> points;
    for (auto d : d_models)
        for (auto h : heads)
            for (auto l : layers)
                for (auto f : ffns)
                    for (auto lr : lrs)
                        for (auto p : drops) {
                            GridPoint gp{base_model, base_train};
                            gp.model.d_model = d;
                            gp.model.heads = h;
                            if (!grid.layers.empty()) {
                                gp.model.encoder_layers = l;
                                gp.model.decoder_layers = l;
                            }
                            gp.model.ffn_dim = f;
                            gp.model.dropout = p;
                            gp.train.learning_rate = lr;
                            points.push_back(gp);
                        }
    return points;
}

std::vector<GridResult> grid_search(const GridSpec& grid, const ModelConfig& base_model,
                                    const TrainConfig& base_train, std::span<const data::WindowSample> train_windows,
                                    std::span<const data::WindowSample> val_windows,
                                    const data::NormalizationStats& stats, std::size_t threads) {
    const auto points = expand_grid(grid, base_model, base_train);
    if (points.empty()) throw ConfigError("grid search: empty grid");
    std::vector<GridResult> results(points.size());

    auto run_point = [&](std::size_t i) {
        GridResult& r = results[i];
        r.index = i;
        r.point = points[i];
        try {
            TsformerModel model(points[i].model, points[i].train.seed);
            auto trained = train(model, train_windows, val_windows, stats, points[i].train);
            r.val_mae = trained.history.best_val_mae;
            r.best_epoch = trained.history.best_epoch;
            r.epochs_run = trained.history.epochs.size();
        } catch (const std::exception& e) {
            r.error = e.what();
            r.val_mae = std::numeric_limits<double>::infinity();
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, points.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < points.size(); ++i) run_point(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                for (std::size_t i = w; i < points.size(); i += workers) run_point(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
        if (a.error.has_value() != b.error.has_value()) return !a.error.has_value();
        return a.val_mae < b.val_mae;
    });
    return results;
}

// ---------------------------------------------------------------- checkpoints

namespace {

std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

class TokenReader {
public:
    explicit TokenReader(const std::string& text) {
        std::istringstream is(text);
        std::string tok;
        while (is >> tok) tokens_.push_back(std::move(tok));
    }

    const std::string& next(const char* what) {
        if (pos_ >= tokens_.size()) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
        return tokens_[pos_++];
    }

    void expect(const std::string& word) {
        const auto& tok = next(word.c_str());
        if (tok != word) throw CheckpointError("checkpoint corrupt: expected '" + word + "', found '" + tok + "'");
    }

    double real(const char* what) {
        const auto& tok = next(what);
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size()) {
            throw CheckpointError(std::string("checkpoint corrupt: bad number '") + tok + "' for " + what);
        }
        return v;
    }

    std::size_t count(const char* what) {
        const auto& tok = next(what);
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) {
            throw CheckpointError(std::string("checkpoint corrupt: bad count '") + tok + "' for " + what);
        }
        return v;
    }

    bool done() const { return pos_ == tokens_.size(); }

private:
    std::vector<std::string> tokens_;
    std::size_t pos_ = 0;
};

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out.empty() ? "-" : out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
    const auto& c = ck.model.config();
    std::ostringstream os;
    os << "tsformer-checkpoint\n";
    os << "format_version " << Checkpoint::kFormatVersion << "\n";
    os << "config encoder_input_length " << c.encoder_input_length << "\n";
    os << "config decoder_input_length " << c.decoder_input_length << "\n";
    os << "config forecast_horizon " << c.forecast_horizon << "\n";
    os << "config d_model " << c.d_model << "\n";
    os << "config heads " << c.heads << "\n";
    os << "config encoder_layers " << c.encoder_layers << "\n";
    os << "config decoder_layers " << c.decoder_layers << "\n";
    os << "config ffn_dim " << c.ffn_dim << "\n";
    os << "config dropout " << hex(c.dropout) << "\n";
    os << "config feature_dim " << c.feature_dim << "\n";
    os << "config positional_encoding " << (c.positional_encoding ? 1 : 0) << "\n";
    os << "stats " << ck.stats.size() << "\n";
    for (const auto& col : ck.stats.columns()) os << "column " << col.name << ' ' << hex(col.min) << ' ' << hex(col.max) << "\n";
    os << "meta epoch " << ck.meta.epoch << "\n";
    os << "meta best_val_mae " << hex(ck.meta.best_val_mae) << "\n";
    os << "meta seed " << ck.meta.seed << "\n";
    os << "meta use_calendar " << (ck.meta.use_calendar ? 1 : 0) << "\n";
    os << "meta token_known_columns " << join(ck.meta.token_known_columns) << "\n";
    os << "meta train_end " << (ck.meta.train_end.empty() ? "-" : ck.meta.train_end) << "\n";
    os << "meta validate_end " << (ck.meta.validate_end.empty() ? "-" : ck.meta.validate_end) << "\n";
    const auto& params = ck.model.parameters();
    os << "params " << params.size() << "\n";
    for (const auto& p : params) {
        const auto& shape = p.tensor.shape();
        os << "param " << p.name << ' ' << shape.size();
        for (auto d : shape) os << ' ' << d;
        os << "\n";
        const auto v = p.tensor.values();
        for (std::size_t i = 0; i < v.size(); ++i) os << hex(v[i]) << ((i % 6 == 5 || i + 1 == v.size()) ? "\n" : " ");
    }
    os << "end\n";
    return os.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
    TokenReader in(text);
    in.expect("tsformer-checkpoint");
    in.expect("format_version");
    const std::size_t version = in.count("format_version");
    if (version != static_cast<std::size_t>(Checkpoint::kFormatVersion)) {
        throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(Checkpoint::kFormatVersion) + ")");
    }
    ModelConfig c;
    auto cfg_count = [&](const char* key) {
        in.expect("config");
        in.expect(key);
        return in.count(key);
    };
    c.encoder_input_length = cfg_count("encoder_input_length");
    c.decoder_input_length = cfg_count("decoder_input_length");
    c.forecast_horizon = cfg_count("forecast_horizon");
    c.d_model = cfg_count("d_model");
    c.heads = cfg_count("heads");
    c.encoder_layers = cfg_count("encoder_layers");
    c.decoder_layers = cfg_count("decoder_layers");
    c.ffn_dim = cfg_count("ffn_dim");
    in.expect("config");
    in.expect("dropout");
    c.dropout = in.real("dropout");
    c.feature_dim = cfg_count("feature_dim");
    c.positional_encoding = cfg_count("positional_encoding") != 0;
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint corrupt: ") + e.what());
    }

    in.expect("stats");
    const std::size_t n_stats = in.count("stats");
    std::vector<data::NormalizationStats::Column> cols;
    for (std::size_t i = 0; i < n_stats; ++i) {
        in.expect("column");
        data::NormalizationStats::Column col;
        col.name = in.next("column name");
        col.min = in.real("column min");
        col.max = in.real("column max");
        cols.push_back(col);
    }

    CheckpointMeta meta;
    auto meta_value = [&](const char* key) -> std::string {
        in.expect("meta");
        in.expect(key);
        return in.next(key);
    };
    auto meta_count = [&](const char* key) {
        in.expect("meta");
        in.expect(key);
        return in.count(key);
    };
    meta.epoch = meta_count("epoch");
    in.expect("meta");
    in.expect("best_val_mae");
    meta.best_val_mae = in.real("best_val_mae");
    meta.seed = meta_count("seed");
    meta.use_calendar = meta_count("use_calendar") != 0;
    const auto known = meta_value("token_known_columns");
    meta.token_known_columns = known == "-" ? std::vector<std::string>{} : split_list(known);
    meta.train_end = meta_value("train_end");
    meta.validate_end = meta_value("validate_end");
    if (meta.train_end == "-") meta.train_end.clear();
    if (meta.validate_end == "-") meta.validate_end.clear();

    in.expect("params");
    const std::size_t n_params = in.count("params");
    std::map<std::string, Tensor> values;
    for (std::size_t i = 0; i < n_params; ++i) {
        in.expect("param");
        const std::string name = in.next("param name");
        const std::size_t rank = in.count("param rank");
        if (rank > 2) throw CheckpointError("checkpoint corrupt: parameter " + name + " has rank " + std::to_string(rank));
        nc::Shape shape;
        for (std::size_t r = 0; r < rank; ++r) shape.push_back(in.count("param dim"));
        std::vector<double> v(nc::shape_size(shape));
        for (auto& x : v) x = in.real(name.c_str());
        values.emplace(name, Tensor::from(shape, std::move(v)));
    }
    in.expect("end");
    if (!in.done()) throw CheckpointError("checkpoint corrupt: trailing content after 'end'");

    TsformerModel model(c, values);
    data::NormalizationStats stats(std::move(cols));
    if (stats.size() != c.feature_dim) {
        throw CheckpointError("checkpoint corrupt: " + std::to_string(stats.size()) + " normalization columns for " +
                              std::to_string(c.feature_dim) + " features");
    }
    return Checkpoint{std::move(model), std::move(stats), std::move(meta)};
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const std::string text = serialize_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << text;
    if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_checkpoint(buf.str());
}

}  // namespace tsformer
