#include "tsformer/cli.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "tsformer/errors.hpp"
#include "tsformer/interpret.hpp"

namespace tsformer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string>& known_run_keys() {
    static const std::vector<std::string> keys{
        "encoder_input_length", "decoder_input_length", "forecast_horizon", "d_model", "heads",
        "encoder_layers", "decoder_layers", "ffn_dim", "dropout", "positional_encoding",
        "learning_rate", "batch_size", "max_epochs", "patience", "grad_clip_norm",
        "seed", "loss_on_overlap", "use_calendar", "token_known_columns", "train_end",
        "validate_end", "train_fraction", "validate_fraction"};
    return keys;
}

std::string number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::optional<data::Date> date_key(const KeyValues& kv, const std::string& key) {
    const auto text = kv.get(key);
    if (!text || text->empty()) return std::nullopt;
    const auto d = data::parse_date(*text);
    if (!d) throw ConfigError("config: " + key + " is not a YYYY-MM-DD date: '" + *text + "'");
    return d;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

fs::path beside(const fs::path& file, const std::string& suffix) {
    auto p = file;
    p.replace_extension();
    return p.string() + suffix;
}

void apply_set(KeyValues& kv, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const auto key = trim(assignment.substr(0, eq));
    if (key.empty()) throw ConfigError("--set has an empty key: '" + assignment + "'");
    kv.set(key, trim(assignment.substr(eq + 1)));
}

data::Dataset load_matching(const fs::path& path, const Checkpoint& ck) {
    auto ds = data::load_csv(path);
    if (ds.schema.feature_dim() != ck.model.config().feature_dim) {
        throw ConfigError("dataset has " + std::to_string(ds.schema.feature_dim()) +
                          " features but the checkpoint expects " + std::to_string(ck.model.config().feature_dim));
    }
    return ds;
}

data::WindowOptions checkpoint_window(const Checkpoint& ck) {
    data::WindowOptions o;
    o.use_calendar = ck.meta.use_calendar;
    o.token_known_columns = ck.meta.token_known_columns;
    return o;
}

// Split recorded at training time, or the default fractions when absent.
data::Splits checkpoint_splits(const data::Dataset& ds, const Checkpoint& ck) {
    data::SplitSpec spec = data::split_by_fraction(ds, 0.6, 0.2);
    if (!ck.meta.train_end.empty()) {
        const auto te = data::parse_date(ck.meta.train_end);
        const auto ve = data::parse_date(ck.meta.validate_end);
        if (!te || !ve) throw CheckpointError("checkpoint: bad split dates");
        spec = {*te, *ve};
    }
    return data::split(ds, spec);
}

data::DateRange split_range(const data::Splits& s, const std::string& name) {
    if (name == "train") return s.train_range();
    if (name == "validate") return s.validate_range();
    if (name == "test") return s.test_range();
    throw ConfigError("unknown split '" + name + "' (train, validate, test)");
}

std::map<std::string, std::string> model_keys(const ModelConfig& m) {
    return {{"encoder_input_length", std::to_string(m.encoder_input_length)},
            {"decoder_input_length", std::to_string(m.decoder_input_length)},
            {"forecast_horizon", std::to_string(m.forecast_horizon)},
            {"d_model", std::to_string(m.d_model)},
            {"heads", std::to_string(m.heads)},
            {"encoder_layers", std::to_string(m.encoder_layers)},
            {"decoder_layers", std::to_string(m.decoder_layers)},
            {"ffn_dim", std::to_string(m.ffn_dim)},
            {"dropout", number(m.dropout)},
            {"positional_encoding", m.positional_encoding ? "true" : "false"},
            {"feature_dim", std::to_string(m.feature_dim)}};
}

void add_output(RunManifest& m, const fs::path& p) { m.outputs[p.string()] = sha256_file(p); }

std::map<std::string, std::string> synth_keys(const data::SynthSpec& s) {
    std::string hol;
    for (const auto& h : s.holidays) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%02u-%02u+%u", h.month, h.day, h.length);
        hol += (hol.empty() ? "" : ",") + std::string(buf);
    }
    return {{"days", std::to_string(s.days)},         {"start", data::format_date(s.start)},
            {"base", number(s.base)},                 {"weekly_amp", number(s.weekly_amp)},
            {"annual_amp", number(s.annual_amp)},     {"holiday_amp", number(s.holiday_amp)},
            {"noise", number(s.noise)},               {"holidays", hol},
            {"k_indexes", std::to_string(s.k_indexes)}, {"seed", std::to_string(s.seed)}};
}

}  // namespace

// ---------------------------------------------------------------- config

RunConfig RunConfig::from_keyvalues(const KeyValues& kv) {
    if (auto extra = kv.unknown_keys(known_run_keys()); !extra.empty()) {
        throw ConfigError("config: unknown key '" + extra.front() + "'");
    }
    RunConfig c;
    auto& m = c.model;
    m.encoder_input_length = kv.get_size("encoder_input_length", m.encoder_input_length);
    m.decoder_input_length = kv.get_size("decoder_input_length", m.decoder_input_length);
    m.forecast_horizon = kv.get_size("forecast_horizon", m.forecast_horizon);
    m.d_model = kv.get_size("d_model", m.d_model);
    m.heads = kv.get_size("heads", m.heads);
    m.encoder_layers = kv.get_size("encoder_layers", m.encoder_layers);
    m.decoder_layers = kv.get_size("decoder_layers", m.decoder_layers);
    m.ffn_dim = kv.get_size("ffn_dim", m.ffn_dim);
    m.dropout = kv.get_double("dropout", m.dropout);
    m.positional_encoding = kv.get_bool("positional_encoding", m.positional_encoding);

    auto& t = c.train;
    t.learning_rate = kv.get_double("learning_rate", t.learning_rate);
    t.batch_size = kv.get_size("batch_size", t.batch_size);
    t.max_epochs = kv.get_size("max_epochs", t.max_epochs);
    t.patience = kv.get_size("patience", t.patience);
    if (const auto clip = kv.get("grad_clip_norm")) {
        if (*clip == "none") t.grad_clip_norm.reset();
        else t.grad_clip_norm = parse_double(*clip, "grad_clip_norm");
    }
    t.seed = static_cast<std::uint64_t>(kv.get_size("seed", t.seed));
    t.loss_on_overlap = kv.get_bool("loss_on_overlap", t.loss_on_overlap);

    c.use_calendar = kv.get_bool("use_calendar", c.use_calendar);
    if (kv.contains("token_known_columns")) c.token_known_columns = kv.get_list("token_known_columns");
    c.train_end = date_key(kv, "train_end");
    c.validate_end = date_key(kv, "validate_end");
    if (c.train_end.has_value() != c.validate_end.has_value()) {
        throw ConfigError("config: train_end and validate_end must be given together");
    }
    c.train_fraction = kv.get_double("train_fraction", c.train_fraction);
    c.validate_fraction = kv.get_double("validate_fraction", c.validate_fraction);
    t.validate();
    return c;
}

std::map<std::string, std::string> RunConfig::resolved() const {
    auto out = model_keys(model);
    out.erase("feature_dim");
    out["learning_rate"] = number(train.learning_rate);
    out["batch_size"] = std::to_string(train.batch_size);
    out["max_epochs"] = std::to_string(train.max_epochs);
    out["patience"] = std::to_string(train.patience);
    out["grad_clip_norm"] = train.grad_clip_norm ? number(*train.grad_clip_norm) : "none";
    out["seed"] = std::to_string(train.seed);
    out["loss_on_overlap"] = train.loss_on_overlap ? "true" : "false";
    out["use_calendar"] = use_calendar ? "true" : "false";
    std::string cols;
    for (const auto& c : token_known_columns) cols += (cols.empty() ? "" : ",") + c;
    out["token_known_columns"] = cols;
    out["train_end"] = train_end ? data::format_date(*train_end) : "";
    out["validate_end"] = validate_end ? data::format_date(*validate_end) : "";
    out["train_fraction"] = number(train_fraction);
    out["validate_fraction"] = number(validate_fraction);
    return out;
}

data::WindowOptions RunConfig::window_options() const {
    data::WindowOptions o;
    o.use_calendar = use_calendar;
    o.token_known_columns = token_known_columns;
    return o;
}

data::SplitSpec RunConfig::split_for(const data::Dataset& dataset) const {
    if (train_end) return {*train_end, *validate_end};
    return data::split_by_fraction(dataset, train_fraction, validate_fraction);
}

RunConfig resolve_config(const std::optional<fs::path>& path, const Overrides& overrides) {
    KeyValues kv = path ? KeyValues::load(*path) : KeyValues{};
    for (const auto& s : overrides.set) apply_set(kv, s);
    if (overrides.seed) kv.set("seed", std::to_string(*overrides.seed));
    if (overrides.no_calendar) kv.set("use_calendar", "false");
    auto cfg = RunConfig::from_keyvalues(kv);
    if (overrides.horizon) {
        if (*overrides.horizon == 0) throw ConfigError("--horizon must be positive");
        cfg.model = with_horizon(cfg.model, *overrides.horizon);
    }
    return cfg;
}

// ---------------------------------------------------------------- manifest

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

std::string RunManifest::to_json() const {
    json j;
    j["artifact_version"] = kArtifactVersion;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["inputs"] = input_digests;
    j["outputs"] = outputs;
    if (!extra.empty()) j["extra"] = extra;
    return j.dump(2) + "\n";
}

void RunManifest::write(const fs::path& path) const { write_text(path, to_json()); }

// ---------------------------------------------------------------- synth

RunManifest cmd_synth(const SynthArgs& args) {
    KeyValues kv = args.spec ? KeyValues::load(*args.spec) : KeyValues{};
    for (const auto& s : args.set) apply_set(kv, s);
    if (args.seed) kv.set("seed", std::to_string(*args.seed));
    const auto spec = data::SynthSpec::from_keyvalues(kv);
    data::write_csv(data::synth_generate(spec), args.out);

    RunManifest m;
    m.command = "synth";
    m.config = synth_keys(spec);
    m.seed = spec.seed;
    if (args.spec) m.input_digests[args.spec->string()] = sha256_file(*args.spec);
    add_output(m, args.out);
    m.write(beside(args.out, ".manifest.json"));
    return m;
}

// ---------------------------------------------------------------- train

RunManifest cmd_train(const TrainArgs& args) {
    auto cfg = resolve_config(args.config, args.overrides);
    const auto ds = data::load_csv(args.data);
    cfg.model.feature_dim = ds.schema.feature_dim();
    cfg.model.validate();

    const auto spec = cfg.split_for(ds);
    const auto parts = data::split(ds, spec);
    const auto stats = data::NormalizationStats::fit(parts.train);
    auto opts = cfg.window_options();
    opts.target_range = parts.train_range();
    const auto train_w = data::make_windows(ds, cfg.model, stats, opts);
    opts.target_range = parts.validate_range();
    const auto val_w = data::make_windows(ds, cfg.model, stats, opts);
    if (train_w.empty()) throw DataError(DataError::Kind::TooShort, "training split yields no windows");

    EpochObserver observer;
    if (args.verbose) {
        observer = [](const EpochRecord& e) {
            std::cerr << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_mae " << e.val_mae << "\n";
        };
    }
    auto result = train(TsformerModel(cfg.model, cfg.train.seed), train_w, val_w, stats, cfg.train, observer);

    Checkpoint ck{std::move(result.model), stats, {}};
    ck.meta.epoch = result.history.best_epoch;
    ck.meta.best_val_mae = result.history.best_val_mae;
    ck.meta.seed = cfg.train.seed;
    ck.meta.use_calendar = cfg.use_calendar;
    ck.meta.token_known_columns = cfg.token_known_columns;
    ck.meta.train_end = data::format_date(spec.train_end);
    ck.meta.validate_end = data::format_date(spec.validate_end);
    save_checkpoint(ck, args.out);
    const auto history_path = beside(args.out, ".history.csv");
    write_text(history_path, result.history.to_csv());

    RunManifest m;
    m.command = "train";
    m.config = cfg.resolved();
    m.config["train_end"] = ck.meta.train_end;
    m.config["validate_end"] = ck.meta.validate_end;
    m.seed = cfg.train.seed;
    m.input_digests[args.data.string()] = sha256_file(args.data);
    if (args.config) m.input_digests[args.config->string()] = sha256_file(*args.config);
    add_output(m, args.out);
    add_output(m, history_path);
    m.extra["best_epoch"] = std::to_string(result.history.best_epoch);
    m.extra["best_val_mae"] = number(result.history.best_val_mae);
    m.extra["epochs_run"] = std::to_string(result.history.epochs.size());
    m.write(beside(args.out, ".manifest.json"));
    return m;
}

// ---------------------------------------------------------------- evaluate

EvaluateResult cmd_evaluate(const EvaluateArgs& args) {
    if (args.horizons.empty()) throw ConfigError("evaluate: no horizons");
    const auto ck = load_checkpoint(args.checkpoint);
    const auto ds = load_matching(args.data, ck);
    const auto parts = checkpoint_splits(ds, ck);
    const auto range = split_range(parts, args.split);
    const auto& mc = ck.model.config();
    const std::size_t min_history = mc.encoder_input_length;
    const auto forecaster = eval::model_forecaster(ck.model, ck.stats, checkpoint_window(ck));

    EvaluateResult res;
    for (auto h : args.horizons) {
        if (h == 0) throw ConfigError("evaluate: horizons must be positive");
        if (h <= mc.forecast_horizon) {
            res.runs.push_back(eval::rolling_origin_evaluate(forecaster, ds, range, h, min_history, "tsformer", args.split));
        } else {
            std::cerr << "note: checkpoint forecasts " << mc.forecast_horizon << " days; horizon " << h
                      << " reports baselines only\n";
        }
        res.runs.push_back(eval::rolling_origin_evaluate(eval::naive_forecaster(), ds, range, h, min_history, "naive",
                                                         args.split));
        const std::size_t season = h == 1 ? 1 : 7;
        res.runs.push_back(eval::rolling_origin_evaluate(eval::seasonal_naive_forecaster(season), ds, range, h,
                                                         min_history, "seasonal_naive", args.split));
        if (args.oracle) {
            res.runs.push_back(
                eval::rolling_origin_evaluate(eval::oracle_forecaster(), ds, range, h, min_history, "oracle", args.split));
        }
    }

    const auto csv_path = args.out_dir / "report.csv";
    const auto json_path = args.out_dir / "report.json";
    write_text(csv_path, eval::report_csv(res.runs, args.per_lead));
    write_text(json_path, eval::report_json(res.runs, args.per_lead));

    auto& m = res.manifest;
    m.command = "evaluate";
    m.config = model_keys(mc);
    std::string hs;
    for (auto h : args.horizons) hs += (hs.empty() ? "" : ",") + std::to_string(h);
    m.config["horizons"] = hs;
    m.config["split"] = args.split;
    m.config["use_calendar"] = ck.meta.use_calendar ? "true" : "false";
    m.seed = ck.meta.seed;
    m.input_digests[args.checkpoint.string()] = sha256_file(args.checkpoint);
    m.input_digests[args.data.string()] = sha256_file(args.data);
    add_output(m, csv_path);
    add_output(m, json_path);
    m.write(args.out_dir / "manifest.json");
    return res;
}

// ---------------------------------------------------------------- forecast

std::vector<ForecastRow> cmd_forecast(const ForecastArgs& args) {
    const auto ck = load_checkpoint(args.checkpoint);
    const auto ds = load_matching(args.data, ck);
    const auto& mc = ck.model.config();
    std::size_t origin = ds.size() - 1;
    if (args.origin) {
        const auto d = data::parse_date(*args.origin);
        if (!d) throw ConfigError("--origin is not a YYYY-MM-DD date: '" + *args.origin + "'");
        const auto idx = ds.index_of(*d);
        if (!idx) throw DataError(DataError::Kind::Split, "origin " + *args.origin + " is not in the dataset");
        origin = *idx;
    }
    const auto sample = data::make_forecast_window(ds, origin, mc, ck.stats, checkpoint_window(ck));
    const auto pred = predict_tokens(sample, ck.model);

    std::vector<ForecastRow> rows;
    std::string csv = "date,forecast\n";
    for (std::size_t k = 0; k < pred.size(); ++k) {
        ForecastRow r{ds.rows[origin].date + std::chrono::days{static_cast<int>(k + 1)},
                      ck.stats.invert(pred[k], data::RecordSchema::demand_column())};
        csv += data::format_date(r.date) + "," + number(r.forecast) + "\n";
        rows.push_back(r);
    }
    if (args.out) write_text(*args.out, csv);
    else std::cout << csv;
    return rows;
}

// ---------------------------------------------------------------- ablate

AblateResult cmd_ablate(const AblateArgs& args) {
    if (args.overrides.no_calendar) throw ConfigError("ablate runs both arms; --no-calendar does not apply");
    auto cfg = resolve_config(args.config, args.overrides);
    const auto ds = data::load_csv(args.data);
    cfg.model.feature_dim = ds.schema.feature_dim();

    eval::AblationSetup setup;
    setup.model = cfg.model;
    setup.train = cfg.train;
    setup.window = cfg.window_options();
    setup.split = cfg.split_for(ds);
    setup.horizons = args.horizons;

    AblateResult res;
    res.report = eval::ablation_run(ds, setup);

    const auto table = args.out_dir / "ablation.csv";
    const auto report = args.out_dir / "ablation_report.json";
    write_text(table, res.report.to_table_csv());
    std::vector<eval::EvaluationRun> runs = res.report.with_calendar.runs;
    runs.insert(runs.end(), res.report.without_calendar.runs.begin(), res.report.without_calendar.runs.end());
    write_text(report, eval::report_json(runs, true));

    auto& m = res.manifest;
    m.command = "ablate";
    m.config = cfg.resolved();
    m.config.erase("use_calendar");
    m.config["train_end"] = data::format_date(setup.split.train_end);
    m.config["validate_end"] = data::format_date(setup.split.validate_end);
    m.seed = cfg.train.seed;
    m.input_digests[args.data.string()] = sha256_file(args.data);
    if (args.config) m.input_digests[args.config->string()] = sha256_file(*args.config);
    add_output(m, table);
    add_output(m, report);

    // The two arms' resolved configs and the keys in which they differ.
    auto with = cfg;
    with.use_calendar = true;
    auto without = cfg;
    without.use_calendar = false;
    const auto a = with.resolved(), b = without.resolved();
    std::string diff;
    for (const auto& [k, v] : a)
        if (b.at(k) != v) diff += (diff.empty() ? "" : ",") + k;
    m.extra["arm_diff"] = diff;
    m.extra["arm_seed"] = std::to_string(cfg.train.seed);
    m.write(args.out_dir / "manifest.json");
    return res;
}

// ---------------------------------------------------------------- attention

RunManifest cmd_attention(const AttentionArgs& args) {
    const auto ck = load_checkpoint(args.checkpoint);
    const auto ds = load_matching(args.data, ck);
    const auto parts = checkpoint_splits(ds, ck);
    auto opts = checkpoint_window(ck);
    opts.target_range = parts.train_range();
    const auto windows = data::make_windows(ds, ck.model.config(), ck.stats, opts);
    if (windows.empty()) throw DataError(DataError::Kind::TooShort, "training split yields no windows");

    interpret::CaptureOptions co;
    co.per_head = args.per_head;
    co.include_encoder = args.include_encoder;
    const auto summary = interpret::capture_attention(ck.model, windows, co);

    RunManifest m;
    m.command = "attention";
    m.config = model_keys(ck.model.config());
    m.config["per_head"] = args.per_head ? "true" : "false";
    m.config["include_encoder"] = args.include_encoder ? "true" : "false";
    m.config["svg"] = args.svg ? "true" : "false";
    m.seed = ck.meta.seed;
    m.input_digests[args.checkpoint.string()] = sha256_file(args.checkpoint);
    m.input_digests[args.data.string()] = sha256_file(args.data);
    for (const auto& p : interpret::export_csv(summary, args.out_dir)) add_output(m, p);
    if (args.svg)
        for (const auto& p : interpret::render_heatmap(summary, args.out_dir)) add_output(m, p);
    m.extra["sample_count"] = std::to_string(summary.sample_count);
    m.write(args.out_dir / "manifest.json");
    return m;
}

// ---------------------------------------------------------------- grid search

std::string ranked_csv(const std::vector<GridResult>& results) {
    std::ostringstream os;
    os << "rank,index,val_mae,best_epoch,epochs_run,d_model,heads,encoder_layers,decoder_layers,ffn_dim,"
          "learning_rate,dropout,batch_size,max_epochs,patience,seed,error\n";
    std::size_t rank = 1;
    for (const auto& r : results) {
        const auto& mc = r.point.model;
        const auto& tc = r.point.train;
        std::string err = r.error.value_or("");
        for (auto& ch : err)
            if (ch == ',' || ch == '\n') ch = ';';
        os << rank++ << ',' << r.index << ',' << (r.error ? "" : number(r.val_mae)) << ',' << r.best_epoch << ','
           << r.epochs_run << ',' << mc.d_model << ',' << mc.heads << ',' << mc.encoder_layers << ','
           << mc.decoder_layers << ',' << mc.ffn_dim << ',' << number(tc.learning_rate) << ',' << number(mc.dropout)
           << ',' << tc.batch_size << ',' << tc.max_epochs << ',' << tc.patience << ',' << tc.seed << ',' << err
           << '\n';
    }
    return os.str();
}

GridSearchResult cmd_gridsearch(const GridArgs& args) {
    auto cfg = resolve_config(args.config, args.overrides);
    const auto grid = GridSpec::from_keyvalues(KeyValues::load(args.grid));
    const auto ds = data::load_csv(args.data);
    cfg.model.feature_dim = ds.schema.feature_dim();

    const auto spec = cfg.split_for(ds);
    const auto parts = data::split(ds, spec);
    const auto stats = data::NormalizationStats::fit(parts.train);
    auto opts = cfg.window_options();
    opts.target_range = parts.train_range();
    const auto train_w = data::make_windows(ds, cfg.model, stats, opts);
    opts.target_range = parts.validate_range();
    const auto val_w = data::make_windows(ds, cfg.model, stats, opts);

    GridSearchResult res;
    res.results = grid_search(grid, cfg.model, cfg.train, train_w, val_w, stats, args.threads);
    write_text(args.out, ranked_csv(res.results));

    auto& m = res.manifest;
    m.command = "gridsearch";
    m.config = cfg.resolved();
    m.config["train_end"] = data::format_date(spec.train_end);
    m.config["validate_end"] = data::format_date(spec.validate_end);
    m.seed = cfg.train.seed;
    m.input_digests[args.data.string()] = sha256_file(args.data);
    m.input_digests[args.grid.string()] = sha256_file(args.grid);
    if (args.config) m.input_digests[args.config->string()] = sha256_file(*args.config);
    add_output(m, args.out);
    m.extra["grid_points"] = std::to_string(grid.size());
    m.write(beside(args.out, ".manifest.json"));
    return res;
}

// ---------------------------------------------------------------- diagnostics

std::pair<int, std::string> diagnose(const std::exception& e) {
    auto line = [](const char* kind, const std::exception& ex) {
        std::string msg = ex.what();
        for (auto& c : msg)
            if (c == '\n') c = ' ';
        return std::string("error[") + kind + "]: " + msg;
    };
    if (const auto* d = dynamic_cast<const DivergenceError*>(&e)) {
        return {kExitDivergence, line("divergence", e) + " (epoch " + std::to_string(d->epoch()) + ", step " +
                                     std::to_string(d->step()) + ")"};
    }
    if (dynamic_cast<const IoError*>(&e)) return {kExitIo, line("io", e)};
    if (dynamic_cast<const CheckpointError*>(&e)) return {kExitValidation, line("checkpoint", e)};
    if (dynamic_cast<const DataError*>(&e)) return {kExitValidation, line("data", e)};
    if (dynamic_cast<const ShapeError*>(&e)) return {kExitValidation, line("shape", e)};
    if (dynamic_cast<const ConfigError*>(&e)) return {kExitValidation, line("config", e)};
    if (dynamic_cast<const DegenerateMaskError*>(&e)) return {kExitValidation, line("mask", e)};
    return {kExitInternal, line("internal", e)};
}

}  // namespace tsformer::cli
