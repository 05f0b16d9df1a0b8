#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ntk/errors.hpp"
#include "ntk/experiments.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalFailure = 3;

std::optional<int> threads_from_env() {
    const char* raw = std::getenv("NTK_KIT_THREADS");
    if (!raw || !*raw) return std::nullopt;
    try {
        std::size_t used = 0;
        const int k = std::stoi(raw, &used);
        if (used != std::string(raw).size() || k < 1) throw std::invalid_argument(raw);
        return k;
    } catch (const std::logic_error&) {
        throw ntk::ConfigError(std::string("NTK_KIT_THREADS: expected a positive integer, got '") + raw + "'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual activations, deep NTK depth limits and the classifiers they induce"};
    app.set_version_flag("--version", ntk::version());
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    for (const char* name : {"taxonomy", "dynamics", "polefit", "fig2", "compare"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "INI or JSON experiment config")->required();
        sub->add_option("--out", out_dir, "Output directory (overrides the config)");
        sub->add_option("--seed", seed, "Seed (overrides the config)");
        sub->add_option("--threads", threads, "Worker threads (falls back to NTK_KIT_THREADS)")
            ->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        ntk::ExperimentConfig config = ntk::parse_config(config_path);
        const std::string command = app.get_subcommands().front()->get_name();
        if (config.command != command) {
            throw ntk::ConfigError(config_path + ": config is for '" + config.command + "', not '" + command + "'");
        }
        if (out_dir) config.output_dir = *out_dir;
        if (seed) {
            config.seed = *seed;
            config.mixture.seed = *seed;
        }
        if (threads) config.threads = *threads;
        else if (auto env = threads_from_env()) config.threads = *env;

        const ntk::ExperimentReport report = ntk::run_experiment(config);
        std::cout << command << ": wrote " << report.files.size() << " file(s) and report.json to "
                  << config.output_dir << " in " << report.wall_clock_seconds << " s\n";
        return kOk;
    } catch (const ntk::ConfigError& e) {
        std::cerr << "ntk-kit: " << e.what() << '\n';
        return kConfigError;
    } catch (const ntk::SpecInvalid& e) {
        std::cerr << "ntk-kit: " << e.what() << '\n';
        return kConfigError;
    } catch (const ntk::UnknownPreset& e) {
        std::cerr << "ntk-kit: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "ntk-kit: " << e.what() << '\n';
        return kNumericalFailure;
    }
}
