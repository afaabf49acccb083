// Command-line entry point: synth, train, evaluate, forecast, ablate,
// attention, gridsearch.

#include <CLI11.hpp>
#include <iomanip>
#include <iostream>

#include "tsformer/cli.hpp"
#include "tsformer/errors.hpp"

using namespace tsformer;
namespace fs = std::filesystem;

namespace {

void add_overrides(CLI::App* app, cli::Overrides& o, bool with_calendar_flag = true) {
    app->add_option("--set", o.set, "Override a config key (key=value), repeatable");
    app->add_option("--horizon", o.horizon, "Forecast horizon; resizes decoder and encoder windows");
    app->add_option("--seed", o.seed, "Random seed");
    if (with_calendar_flag) app->add_flag("--no-calendar", o.no_calendar, "Leave token rows fully zero");
}

std::vector<std::size_t> parse_horizons(const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& s : split_list(text)) {
        const auto v = parse_int(s, "--horizons");
        if (v <= 0) throw ConfigError("--horizons values must be positive");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

void print_runs(const std::vector<eval::EvaluationRun>& runs) {
    std::cout << std::left << std::setw(16) << "model" << std::setw(4) << "h" << std::right << std::setw(12) << "MAE"
              << std::setw(12) << "RMSE" << std::setw(10) << "MAPE%" << std::setw(8) << "n" << "\n";
    for (const auto& r : runs) {
        std::cout << std::left << std::setw(16) << r.model << std::setw(4) << r.horizon << std::right << std::fixed
                  << std::setprecision(3) << std::setw(12) << r.metrics.mae << std::setw(12) << r.metrics.rmse
                  << std::setw(10) << r.metrics.mape << std::setw(8) << r.metrics.n << "\n";
    }
    std::cout.unsetf(std::ios::fixed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Encoder-decoder transformer for daily demand forecasting"};
    app.require_subcommand(1);
    app.set_version_flag("--version", cli::kArtifactVersion);

    cli::SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic dataset CSV");
    c_synth->add_option("--spec", synth.spec, "Synthetic spec file")->check(CLI::ExistingFile);
    c_synth->add_option("--out,-o", synth.out, "Output CSV")->required();
    c_synth->add_option("--set", synth.set, "Override a spec key (key=value), repeatable");
    c_synth->add_option("--seed", synth.seed, "Random seed");

    cli::TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train a model and save a checkpoint");
    c_train->add_option("--data,-d", train.data, "Dataset CSV")->required();
    c_train->add_option("--config,-c", train.config, "Run config file");
    c_train->add_option("--out,-o", train.out, "Checkpoint path")->required();
    c_train->add_flag("--verbose,-v", train.verbose, "Print per-epoch progress to stderr");
    add_overrides(c_train, train.overrides);

    cli::EvaluateArgs evaluate;
    std::string eval_horizons = "1,7,15,30";
    auto* c_eval = app.add_subcommand("evaluate", "Rolling-origin evaluation against baselines");
    c_eval->add_option("--checkpoint,-m", evaluate.checkpoint, "Checkpoint")->required();
    c_eval->add_option("--data,-d", evaluate.data, "Dataset CSV")->required();
    c_eval->add_option("--horizons", eval_horizons, "Comma-separated horizons")->capture_default_str();
    c_eval->add_option("--split", evaluate.split, "train, validate or test")->capture_default_str();
    c_eval->add_flag("--oracle", evaluate.oracle, "Add the ground-truth forecaster (harness self-test)");
    c_eval->add_flag("--per-lead", evaluate.per_lead, "Add per-lead-time rows");
    c_eval->add_option("--out,-o", evaluate.out_dir, "Report directory")->required();

    cli::ForecastArgs forecast;
    auto* c_fc = app.add_subcommand("forecast", "Forecast the days after one origin");
    c_fc->add_option("--checkpoint,-m", forecast.checkpoint, "Checkpoint")->required();
    c_fc->add_option("--data,-d", forecast.data, "Dataset CSV holding the recent rows")->required();
    c_fc->add_option("--origin", forecast.origin, "Last observed day (default: last row)");
    c_fc->add_option("--out,-o", forecast.out, "Output CSV (default: stdout)");

    cli::AblateArgs ablate;
    std::string ablate_horizons = "1,7,15,30";
    auto* c_ab = app.add_subcommand("ablate", "Train and compare the calendar and no-calendar arms");
    c_ab->add_option("--data,-d", ablate.data, "Dataset CSV")->required();
    c_ab->add_option("--config,-c", ablate.config, "Run config file");
    c_ab->add_option("--horizons", ablate_horizons, "Comma-separated horizons")->capture_default_str();
    c_ab->add_option("--out,-o", ablate.out_dir, "Report directory")->required();
    add_overrides(c_ab, ablate.overrides, false);

    cli::AttentionArgs attention;
    bool no_svg = false;
    auto* c_att = app.add_subcommand("attention", "Export averaged decoder attention weights");
    c_att->add_option("--checkpoint,-m", attention.checkpoint, "Checkpoint")->required();
    c_att->add_option("--data,-d", attention.data, "Dataset CSV")->required();
    c_att->add_option("--out,-o", attention.out_dir, "Output directory")->required();
    c_att->add_flag("--per-head", attention.per_head, "Also write head-resolved matrices");
    c_att->add_flag("--encoder", attention.include_encoder, "Also write encoder self-attention");
    c_att->add_flag("--no-svg", no_svg, "Skip heatmaps");

    cli::GridArgs grid;
    auto* c_grid = app.add_subcommand("gridsearch", "Rank hyperparameter combinations by validation MAE");
    c_grid->add_option("--data,-d", grid.data, "Dataset CSV")->required();
    c_grid->add_option("--grid,-g", grid.grid, "Grid file")->required();
    c_grid->add_option("--config,-c", grid.config, "Base run config file");
    c_grid->add_option("--out,-o", grid.out, "Ranked CSV")->required();
    c_grid->add_option("--threads", grid.threads, "Worker threads")->capture_default_str();
    add_overrides(c_grid, grid.overrides);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error[usage]: " << msg << "\n";
        return cli::kExitValidation;
    }

    try {
        if (*c_synth) {
            const auto m = cli::cmd_synth(synth);
            std::cout << "wrote " << synth.out.string() << "\n";
        } else if (*c_train) {
            const auto m = cli::cmd_train(train);
            std::cout << "best epoch " << m.extra.at("best_epoch") << " of " << m.extra.at("epochs_run")
                      << ", validation MAE " << m.extra.at("best_val_mae") << "\n"
                      << "wrote " << train.out.string() << "\n";
        } else if (*c_eval) {
            evaluate.horizons = parse_horizons(eval_horizons);
            print_runs(cli::cmd_evaluate(evaluate).runs);
        } else if (*c_fc) {
            cli::cmd_forecast(forecast);
        } else if (*c_ab) {
            ablate.horizons = parse_horizons(ablate_horizons);
            std::cout << cli::cmd_ablate(ablate).report.to_table_csv();
        } else if (*c_att) {
            attention.svg = !no_svg;
            const auto m = cli::cmd_attention(attention);
            std::cout << "wrote " << m.outputs.size() << " files to " << attention.out_dir.string() << "\n";
        } else if (*c_grid) {
            std::cout << cli::ranked_csv(cli::cmd_gridsearch(grid).results);
        }
    } catch (const std::exception& e) {
        const auto [code, line] = cli::diagnose(e);
        std::cerr << line << "\n";
        return code;
    }
    return cli::kExitOk;
}
