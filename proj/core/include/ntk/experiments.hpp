#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ntk/sphere_data.hpp"

namespace ntk {

std::string version();

struct PoleFitSettings {
    double b = 2.0;
    std::vector<double> eps_grid{1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
};

struct Fig2Settings {
    double a = 0.5;
    double b = 1.5;
    int points = 400;
};

struct CompareSettings {
    std::vector<int> n_schedule{100, 500, 2000};
    int trials = 20;
    int queries = 1000;
    std::string activation = "corollary_d:2";
    std::vector<std::string> predictors{"ntk_inf", "hilbert", "one_nn", "majority", "bayes"};
    double margin_band = 0.01;  // radians around interior box edges left out of the error count
    int mc_samples = 200000;
    bool write_predictions = false;
};

struct ExperimentConfig {
    std::string command;
    std::vector<std::string> activations;
    std::optional<int> dimension;  // checked against optimal_for_dim in the taxonomy table
    std::vector<int> depths{0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
    std::vector<double> z_grid{0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
    PoleFitSettings polefit;
    Fig2Settings fig2;
    CompareSettings compare;
    MixtureSpec mixture = two_cap_mixture(2, 0.5, true);
    std::uint64_t seed = 0;
    std::string output_dir = "ntk_out";
    int threads = 1;

    nlohmann::json to_json() const;
};

/// Strict parse of a JSON object; unknown keys raise ConfigError naming their path.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& origin = "<json>");

/// Reads "key = value" text with [section] headers, mapped onto the JSON layout
/// (a section becomes a nested object, comma separated values become arrays).
nlohmann::json ini_to_json(const std::string& text, const std::string& origin = "<ini>");

/// Chooses JSON or INI by the first non-blank character of the file.
ExperimentConfig parse_config(const std::string& path);

struct ExperimentReport {
    std::string command;
    nlohmann::json config;
    nlohmann::json metrics;
    std::vector<std::string> files;  // written relative to the output directory
    double wall_clock_seconds = 0.0;
};

ExperimentReport run_taxonomy(const ExperimentConfig& config);
ExperimentReport run_dynamics(const ExperimentConfig& config);
ExperimentReport run_polefit(const ExperimentConfig& config);
ExperimentReport run_fig2(const ExperimentConfig& config);
ExperimentReport run_compare(const ExperimentConfig& config);

/// Dispatches on config.command, then writes report.json next to the CSV outputs.
ExperimentReport run_experiment(const ExperimentConfig& config);

void write_report(const ExperimentConfig& config, const ExperimentReport& report);

}  // namespace ntk
