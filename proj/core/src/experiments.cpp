#include "ntk/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "ntk/classifiers.hpp"
#include "ntk/depth_dynamics.hpp"
#include "ntk/dual_activation.hpp"
#include "ntk/errors.hpp"

#ifndef NTK_VERSION
#define NTK_VERSION "0.0.0"
#endif

namespace ntk {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version() { return NTK_VERSION; }

namespace {

const std::set<std::string> kCommands{"taxonomy", "dynamics", "polefit", "fig2", "compare"};
const std::set<std::string> kPredictors{"ntk_inf", "hilbert", "one_nn", "majority", "bayes"};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string file_safe(std::string s) {
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
    }
    return s;
}

// ------------------------------------------------------------- config parse

void expect_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(path + ": unknown key '" + key + "'");
    }
}

json as_list(const json& v) { return v.is_array() ? v : json::array({v}); }

template <class T>
T get_as(const json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + ": wrong value type");
    }
}

template <class T>
std::vector<T> get_list(const json& j, const std::string& path) {
    std::vector<T> out;
    for (const auto& v : as_list(j)) out.push_back(get_as<T>(v, path));
    return out;
}

template <class T>
void require_increasing(const std::vector<T>& v, const std::string& path) {
    if (v.empty()) throw ConfigError(path + ": schedule must not be empty");
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] > v[i - 1])) throw ConfigError(path + ": schedule must be strictly increasing");
    }
}

MixtureSpec mixture_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    try {
        if (j.contains("family")) {
            expect_keys(j, {"family", "d", "prior_p", "informative"}, path);
            const auto family = get_as<std::string>(j.at("family"), path + ".family");
            if (family != "two_cap") throw ConfigError(path + ".family: unknown family '" + family + "'");
            auto spec = two_cap_mixture(get_as<int>(j.value("d", json(2)), path + ".d"),
                                        get_as<double>(j.value("prior_p", json(0.5)), path + ".prior_p"),
                                        get_as<bool>(j.value("informative", json(true)), path + ".informative"));
            spec.validate();
            return spec;
        }
        MixtureSpec spec = j.get<MixtureSpec>();
        spec.validate();
        return spec;
    } catch (const SpecInvalid& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::vector<std::string> default_activations(const std::string& command) {
    if (command == "taxonomy")
        return {"corollary_d:1", "corollary_d:2", "corollary_d:4", "hermite2",
                "relu", "normalized_sine", "normalized_erf", "linear"};
    return {"corollary_d:2", "corollary_d:4"};
}

json mixture_echo(const MixtureSpec& s) { return json(s); }

// ------------------------------------------------------------------ output

fs::path prepare_output(const ExperimentConfig& config) {
    const fs::path dir(config.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw ConfigError("output_dir: cannot create '" + config.output_dir + "'");
    const fs::path probe = dir / ".ntk_write_probe";
    {
        std::ofstream p(probe);
        if (!p) throw ConfigError("output_dir: '" + config.output_dir + "' is not writable");
    }
    fs::remove(probe, ec);
    return dir;
}

std::ofstream open_csv(const ExperimentConfig& config, ExperimentReport& report, const std::string& name) {
    const fs::path path = prepare_output(config) / name;
    std::ofstream out(path);
    if (!out) throw ConfigError("output_dir: cannot write '" + path.string() + "'");
    report.files.push_back(name);
    return out;
}

ExperimentReport start(const ExperimentConfig& config, const std::string& command) {
    ExperimentReport r;
    r.command = command;
    r.config = config.to_json();
    r.config["command"] = command;
    return r;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs fn(i) for i in [0, count) on up to `threads` workers; results are stored by index
// so the order of completion never matters.
template <class Fn>
void parallel_for(int count, int threads, Fn fn) {
    const int workers = std::max(1, std::min(threads, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < count && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

Dual dual_or_config_error(const std::string& text) {
    try {
        return parse_activation(text);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("activation '" + text + "': " + e.what());
    } catch (const UnknownPreset& e) {
        throw ConfigError(std::string("activation: ") + e.what());
    }
}

}  // namespace

// ------------------------------------------------------------------- config

json ExperimentConfig::to_json() const {
    json j{{"command", command},
           {"activations", activations},
           {"depths", depths},
           {"z_grid", z_grid},
           {"polefit", {{"b", polefit.b}, {"eps_grid", polefit.eps_grid}}},
           {"fig2", {{"a", fig2.a}, {"b", fig2.b}, {"points", fig2.points}}},
           {"compare",
            {{"n_schedule", compare.n_schedule},
             {"trials", compare.trials},
             {"queries", compare.queries},
             {"activation", compare.activation},
             {"predictors", compare.predictors},
             {"margin_band", compare.margin_band},
             {"mc_samples", compare.mc_samples},
             {"write_predictions", compare.write_predictions}}},
           {"mixture", mixture_echo(mixture)},
           {"seed", seed},
           {"output_dir", output_dir},
           {"threads", threads}};
    j["dimension"] = dimension ? json(*dimension) : json(nullptr);
    return j;
}

ExperimentConfig config_from_json(const json& j, const std::string& origin) {
    expect_keys(j, {"command", "activations", "dimension", "depths", "z_grid", "polefit", "fig2", "compare",
                    "mixture", "seed", "output_dir", "threads"},
                origin);
    ExperimentConfig c;
    if (!j.contains("command")) throw ConfigError(origin + ": missing key 'command'");
    c.command = get_as<std::string>(j.at("command"), origin + ".command");
    if (!kCommands.count(c.command)) throw ConfigError(origin + ".command: unknown command '" + c.command + "'");

    c.activations = j.contains("activations") ? get_list<std::string>(j.at("activations"), origin + ".activations")
                                              : default_activations(c.command);
    if (c.activations.empty()) throw ConfigError(origin + ".activations: must not be empty");
    for (const auto& a : c.activations) dual_or_config_error(a);

    if (j.contains("dimension") && !j.at("dimension").is_null()) {
        c.dimension = get_as<int>(j.at("dimension"), origin + ".dimension");
        if (*c.dimension < 1) throw ConfigError(origin + ".dimension: must be positive");
    }
    if (j.contains("depths")) c.depths = get_list<int>(j.at("depths"), origin + ".depths");
    require_increasing(c.depths, origin + ".depths");
    if (c.depths.front() < 0) throw ConfigError(origin + ".depths: depths must be non-negative");

    if (j.contains("z_grid")) c.z_grid = get_list<double>(j.at("z_grid"), origin + ".z_grid");
    require_increasing(c.z_grid, origin + ".z_grid");
    if (c.z_grid.front() < 0.0 || c.z_grid.back() >= 1.0)
        throw ConfigError(origin + ".z_grid: values must lie in [0, 1)");

    if (j.contains("polefit")) {
        const auto& p = j.at("polefit");
        const std::string path = origin + ".polefit";
        expect_keys(p, {"b", "eps_grid"}, path);
        if (p.contains("b")) c.polefit.b = get_as<double>(p.at("b"), path + ".b");
        if (p.contains("eps_grid")) c.polefit.eps_grid = get_list<double>(p.at("eps_grid"), path + ".eps_grid");
        if (!(c.polefit.b > 1.0)) throw ConfigError(path + ".b: must exceed 1");
        auto rev = c.polefit.eps_grid;
        std::reverse(rev.begin(), rev.end());
        require_increasing(rev, path + ".eps_grid (decreasing)");
        if (c.polefit.eps_grid.size() < 2 || rev.front() <= 0.0 || c.polefit.b * rev.back() >= 1.0)
            throw ConfigError(path + ".eps_grid: need at least two values with 0 < b eps < 1");
    }
    if (j.contains("fig2")) {
        const auto& f = j.at("fig2");
        const std::string path = origin + ".fig2";
        expect_keys(f, {"a", "b", "points"}, path);
        if (f.contains("a")) c.fig2.a = get_as<double>(f.at("a"), path + ".a");
        if (f.contains("b")) c.fig2.b = get_as<double>(f.at("b"), path + ".b");
        if (f.contains("points")) c.fig2.points = get_as<int>(f.at("points"), path + ".points");
        if (!(0.0 < c.fig2.a && c.fig2.a < 1.0 && c.fig2.b > 1.0))
            throw ConfigError(path + ": need 0 < a < 1 < b");
        if (c.fig2.points < 10) throw ConfigError(path + ".points: need at least 10");
    }
    if (j.contains("compare")) {
        const auto& m = j.at("compare");
        const std::string path = origin + ".compare";
        expect_keys(m, {"n_schedule", "trials", "queries", "activation", "predictors", "margin_band", "mc_samples",
                        "write_predictions"},
                    path);
        auto& cs = c.compare;
        if (m.contains("n_schedule")) cs.n_schedule = get_list<int>(m.at("n_schedule"), path + ".n_schedule");
        if (m.contains("trials")) cs.trials = get_as<int>(m.at("trials"), path + ".trials");
        if (m.contains("queries")) cs.queries = get_as<int>(m.at("queries"), path + ".queries");
        if (m.contains("activation")) cs.activation = get_as<std::string>(m.at("activation"), path + ".activation");
        if (m.contains("predictors")) cs.predictors = get_list<std::string>(m.at("predictors"), path + ".predictors");
        if (m.contains("margin_band")) cs.margin_band = get_as<double>(m.at("margin_band"), path + ".margin_band");
        if (m.contains("mc_samples")) cs.mc_samples = get_as<int>(m.at("mc_samples"), path + ".mc_samples");
        if (m.contains("write_predictions"))
            cs.write_predictions = get_as<bool>(m.at("write_predictions"), path + ".write_predictions");
    }
    {
        const auto& cs = c.compare;
        const std::string path = origin + ".compare";
        require_increasing(cs.n_schedule, path + ".n_schedule");
        if (cs.n_schedule.front() < 1) throw ConfigError(path + ".n_schedule: sizes must be positive");
        if (cs.trials < 1 || cs.queries < 1) throw ConfigError(path + ": trials and queries must be positive");
        if (cs.predictors.empty()) throw ConfigError(path + ".predictors: must not be empty");
        for (const auto& p : cs.predictors) {
            if (!kPredictors.count(p)) throw ConfigError(path + ".predictors: unknown predictor '" + p + "'");
        }
        if (cs.margin_band < 0.0) throw ConfigError(path + ".margin_band: must be non-negative");
        if (cs.mc_samples < 2) throw ConfigError(path + ".mc_samples: need at least 2");
        dual_or_config_error(cs.activation);
    }
    if (j.contains("mixture")) c.mixture = mixture_from_json(j.at("mixture"), origin + ".mixture");
    if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j.at("seed"), origin + ".seed");
    c.mixture.seed = c.seed;
    if (j.contains("output_dir")) c.output_dir = get_as<std::string>(j.at("output_dir"), origin + ".output_dir");
    if (j.contains("threads")) c.threads = get_as<int>(j.at("threads"), origin + ".threads");
    if (c.threads < 1) throw ConfigError(origin + ".threads: must be positive");
    return c;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

json ini_scalar(const std::string& raw) {
    const std::string v = trim(raw);
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    if (v == "true") return true;
    if (v == "false") return false;
    if (v == "null") return nullptr;
    if (!v.empty() && v.find_first_not_of("0123456789") == std::string::npos) {
        try {
            return std::stoull(v);
        } catch (const std::out_of_range&) {
        }
    }
    if (!v.empty() && v[0] == '-' && v.size() > 1 && v.find_first_not_of("0123456789", 1) == std::string::npos)
        return std::stoll(v);
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (!v.empty() && end == v.c_str() + v.size()) return d;
    return v;
}

}  // namespace

json ini_to_json(const std::string& text, const std::string& origin) {
    json root = json::object();
    json* section = &root;
    std::string section_name;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno);
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + ": malformed section header");
            section_name = trim(t.substr(1, t.size() - 2));
            if (section_name.empty()) throw ConfigError(where + ": empty section name");
            if (root.contains(section_name)) throw ConfigError(where + ": duplicate section '" + section_name + "'");
            root[section_name] = json::object();
            section = &root[section_name];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        for (const char* marker : {" #", " ;"}) {
            if (const auto at = value.find(marker); at != std::string::npos) value = trim(value.substr(0, at));
        }
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (section->contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
        if (value.find(',') != std::string::npos) {
            json arr = json::array();
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) arr.push_back(ini_scalar(item));
            (*section)[key] = arr;
        } else {
            (*section)[key] = ini_scalar(value);
        }
    }
    return root;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(path + ": " + e.what());
        }
        return config_from_json(j, path);
    }
    return config_from_json(ini_to_json(text, path), path);
}

// --------------------------------------------------------------- taxonomy

ExperimentReport run_taxonomy(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto report = start(config, "taxonomy");
    auto out = open_csv(config, report, "taxonomy.csv");
    out << "activation,A2,Aprime2,Bprime,bprime_lower_bound,case,phase,pole_order_z,pole_order_dist,"
           "optimal_for_dim,optimal_for_requested_dim,seed\n";
    json rows = json::array();
    for (const auto& text : config.activations) {
        const Dual dual = dual_or_config_error(text);
        const Moments m = moments(dual);
        json row{{"activation", text}, {"A2", m.A2}, {"Aprime2", m.Aprime2}, {"Bprime", m.Bprime},
                 {"bprime_lower_bound", m.bprime_lower_bound}, {"seed", config.seed}};
        std::string cas, phase, pz, pd, opt, optreq;
        try {
            const auto v = classify_taxonomy(dual, config.dimension);
            cas = to_string(v.taxonomy_case);
            row["case"] = cas;
            if (v.phase) row["phase"] = phase = to_string(*v.phase);
            if (v.pole_order_z) {
                row["pole_order_z"] = *v.pole_order_z;
                row["pole_order_dist"] = *v.pole_order_dist;
                pz = num(*v.pole_order_z);
                pd = num(*v.pole_order_dist);
            }
            if (v.optimal_for_dim) {
                row["optimal_for_dim"] = *v.optimal_for_dim;
                opt = std::to_string(*v.optimal_for_dim);
            }
            if (v.optimal_for_requested_dim) {
                row["optimal_for_requested_dim"] = *v.optimal_for_requested_dim;
                optreq = *v.optimal_for_requested_dim ? "true" : "false";
            }
        } catch (const InvalidRegime&) {
            cas = "InvalidRegime";
            row["case"] = cas;
        }
        out << text << ',' << num(m.A2) << ',' << num(m.Aprime2) << ',' << num(m.Bprime) << ','
            << (m.bprime_lower_bound ? "true" : "false") << ',' << cas << ',' << phase << ',' << pz << ',' << pd
            << ',' << opt << ',' << optreq << ',' << config.seed << '\n';
        rows.push_back(row);
    }
    report.metrics = {{"rows", rows}};
    report.wall_clock_seconds = seconds_since(t0);
    return report;
}

// --------------------------------------------------------------- dynamics

ExperimentReport run_dynamics(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto report = start(config, "dynamics");
    const int L_max = config.depths.back();
    json per_activation = json::array();
    for (const auto& text : config.activations) {
        const Dual dual = dual_or_config_error(text);
        if (dual.constant_term() > 0.0 || dual.linear_term() <= 0.0)
            throw ConfigError("dynamics: activation '" + text +
                              "' needs a zero constant term and a positive linear term");
        auto out = open_csv(config, report, "dynamics_" + file_safe(text) + ".csv");
        out << "z,L,v,N,P,seed\n";
        json zs = json::array();
        for (double z : config.z_grid) {
            const DepthTrace trace = normalized_trace(dual, z, L_max);
            for (int L : config.depths) {
                const auto& e = trace.entries[L];
                out << num(z) << ',' << L << ',' << num(e.v) << ',' << num(e.N) << ',' << num(e.P) << ','
                    << config.seed << '\n';
            }
            const DepthLimit lim = ntk_depth_limit(dual, z);
            const double P_last = trace.entries[L_max].P;
            json entry{{"z", z}, {"psi", lim.value}, {"psi_depth", lim.depth}, {"psi_converged", lim.converged},
                       {"P_at_max_depth", P_last}, {"seed", config.seed}};
            if (config.depths.size() >= 2) {
                const int L_prev = config.depths[config.depths.size() - 2];
                const double P_prev = trace.entries[L_prev].P;
                entry["cauchy_gap"] = P_last > 0.0 ? std::abs(P_last - P_prev) / P_last : 0.0;
                entry["cauchy_window"] = {L_prev, L_max};
            }
            entry["relative_gap_to_limit"] = lim.value > 0.0 ? std::abs(P_last - lim.value) / lim.value : 0.0;
            zs.push_back(entry);
        }
        per_activation.push_back({{"activation", text}, {"z", zs}});
    }

    // f_alpha reference system against its analytic bounds.
    json controls = json::array();
    for (double alpha : {1.05, 1.2}) {
        for (int d : {1, 2, 3}) {
            bool inside = true;
            for (double z : config.z_grid) {
                for (int L : config.depths) {
                    const double v = f_alpha_iterate(alpha, d, z, L, true);
                    const Sandwich s = f_alpha_sandwich(alpha, d, z, L);
                    const double slack = 1e-12 * std::max(1.0, s.upper);
                    if (v < s.lower - slack || v > s.upper + slack) inside = false;
                }
            }
            controls.push_back({{"alpha", alpha}, {"d", d}, {"inside_sandwich", inside}});
        }
    }
    report.metrics = {{"activations", per_activation}, {"f_alpha_controls", controls}};
    report.wall_clock_seconds = seconds_since(t0);
    return report;
}

// ---------------------------------------------------------------- polefit

ExperimentReport run_polefit(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto report = start(config, "polefit");
    json fits = json::array();
    auto write_fit = [&](const std::string& label, const PoleFit& fit) {
        auto out = open_csv(config, report, "polefit_" + file_safe(label) + ".csv");
        out << "eps,ratio_order,seed\n";
        for (std::size_t i = 0; i < fit.eps_grid.size(); ++i)
            out << num(fit.eps_grid[i]) << ',' << num(fit.raw_orders[i]) << ',' << config.seed << '\n';
    };
    for (const auto& text : config.activations) {
        const Dual dual = dual_or_config_error(text);
        TaxonomyVerdict verdict;
        try {
            verdict = classify_taxonomy(dual);
        } catch (const InvalidRegime& e) {
            throw ConfigError(std::string("polefit: ") + e.what());
        }
        if (verdict.taxonomy_case != TaxonomyCase::SingularKernel)
            throw ConfigError("polefit: activation '" + text + "' has no singular depth limit");
        const PoleFit fit = estimate_pole_order([&](double z) { return psi(dual, z); }, config.polefit.b,
                                                config.polefit.eps_grid);
        write_fit(text, fit);
        const double predicted = *verdict.pole_order_z;
        fits.push_back({{"activation", text},
                        {"order_hat", fit.order_hat},
                        {"predicted", predicted},
                        {"relative_error", std::abs(fit.order_hat - predicted) / predicted},
                        {"raw_orders", fit.raw_orders},
                        {"residuals", fit.residuals},
                        {"b", fit.b},
                        {"seed", config.seed}});
    }
    // Exact power law as a control on the fitting procedure itself.
    const double control_order = 1.5;
    const PoleFit control = estimate_pole_order([&](double z) { return 3.0 / std::pow(1.0 - z, control_order); },
                                                config.polefit.b, config.polefit.eps_grid);
    write_fit("power_law_control", control);
    json control_json{{"order", control_order},
                      {"order_hat", control.order_hat},
                      {"abs_error", std::abs(control.order_hat - control_order)},
                      {"seed", config.seed}};
    report.metrics = {{"fits", fits}, {"power_law_control", control_json}};

    const fs::path path = prepare_output(config) / "polefit.json";
    std::ofstream(path) << report.metrics.dump(2) << '\n';
    report.files.push_back("polefit.json");
    report.wall_clock_seconds = seconds_since(t0);
    return report;
}

// ------------------------------------------------------------------- fig2

ExperimentReport run_fig2(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto report = start(config, "fig2");
    const double a = config.fig2.a, b = config.fig2.b;
    const double c = piecewise_linear_threshold(a, b);
    const double alpha = -std::log(a) / std::log(b);

    std::vector<double> zs;
    const int linear_points = config.fig2.points / 2;
    for (int k = 0; k < linear_points; ++k) zs.push_back(0.99 * k / linear_points);
    const int log_points = config.fig2.points - linear_points;
    for (int k = 0; k < log_points; ++k) zs.push_back(1.0 - std::pow(10.0, -2.0 - 7.0 * k / (log_points - 1)));

    auto out = open_csv(config, report, "fig2.csv");
    out << "z,normalized_iterate,theory_curve_scaled,seed\n";
    bool above_identity = true, flat_below_c = true;
    double shape_min = std::numeric_limits<double>::infinity(), shape_max = 0.0;
    for (double z : zs) {
        const double lim = piecewise_linear_limit(a, b, z);
        const double theory = piecewise_linear_theory(a, b, z);
        out << num(z) << ',' << num(lim) << ',' << num(theory) << ',' << config.seed << '\n';
        if (lim < z) above_identity = false;
        if (z <= c && lim != z) flat_below_c = false;
        if (z > c) {
            const double shape = lim * std::pow(1.0 - z, alpha);
            shape_min = std::min(shape_min, shape);
            shape_max = std::max(shape_max, shape);
        }
    }
    // The ratio f(1 - b eps) / f(1 - eps) is exactly a when the fit base equals the map's slope b.
    const PoleFit fit =
        estimate_pole_order([&](double z) { return piecewise_linear_limit(a, b, z); }, b, config.polefit.eps_grid);
    report.metrics = {{"a", a},
                      {"b", b},
                      {"threshold_c", c},
                      {"expected_order", alpha},
                      {"order_hat", fit.order_hat},
                      {"relative_error", std::abs(fit.order_hat - alpha) / alpha},
                      {"raw_orders", fit.raw_orders},
                      {"iterate_at_least_z", above_identity},
                      {"flat_below_threshold", flat_below_c},
                      {"shape_min", shape_min},
                      {"shape_max", shape_max},
                      {"seed", config.seed}};
    report.wall_clock_seconds = seconds_since(t0);
    return report;
}

// ---------------------------------------------------------------- compare

ExperimentReport run_compare(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto report = start(config, "compare");
    const auto& cs = config.compare;
    const MixtureSpec& spec = config.mixture;

    const bool wants_ntk =
        std::find(cs.predictors.begin(), cs.predictors.end(), "ntk_inf") != cs.predictors.end();
    std::optional<RadialKernel> ntk_kernel;
    if (wants_ntk) {
        try {
            ntk_kernel = deep_ntk_kernel(dual_or_config_error(cs.activation), std::nullopt);
        } catch (const UnsupportedLimit& e) {
            throw ConfigError("compare.activation: " + std::string(e.what()));
        }
    }
    const BayesOracle oracle = bayes_oracle(spec, cs.mc_samples);
    const bool informative = spec.positive.boxes.size() != 1 || spec.negative.boxes.size() != 1 ||
                             spec.positive.boxes[0].ranges != spec.negative.boxes[0].ranges;

    struct TrialResult {
        std::vector<double> errors;  // per predictor
        int evaluated = 0;
        std::vector<std::vector<Prediction>> predictions;
    };
    const int n_sizes = static_cast<int>(cs.n_schedule.size());
    const int P = static_cast<int>(cs.predictors.size());
    std::vector<TrialResult> results(static_cast<std::size_t>(n_sizes * cs.trials));

    parallel_for(n_sizes * cs.trials, config.threads, [&](int task) {
        const int ni = task / cs.trials, t = task % cs.trials;
        const int n = cs.n_schedule[ni];
        const std::string tag = "n" + std::to_string(n) + "/t" + std::to_string(t);
        const MixtureSample train = sample_mixture(spec, n, "compare/train/" + tag);
        const MixtureSample test = sample_mixture(spec, cs.queries, "compare/test/" + tag);
        const Eigen::MatrixXd& Xq = test.data.points();

        std::vector<int> keep;
        for (int q = 0; q < test.data.size(); ++q) {
            if (!informative || edge_distance(spec, Xq.row(q).transpose()) >= cs.margin_band) keep.push_back(q);
        }
        TrialResult r;
        r.evaluated = static_cast<int>(keep.size());
        for (const auto& name : cs.predictors) {
            std::vector<Prediction> pred;
            if (name == "ntk_inf") {
                pred = kernel_machine_predict(*ntk_kernel, train.data, Xq);
            } else if (name == "hilbert") {
                pred = hilbert_smoother_predict(train.data, Xq, spec.d);
            } else if (name == "one_nn") {
                pred = one_nn_predict(train.data, Xq);
            } else if (name == "majority") {
                pred.assign(static_cast<std::size_t>(Xq.rows()), majority_vote_predict(train.data));
            } else {
                for (Eigen::Index q = 0; q < Xq.rows(); ++q) {
                    const int label = oracle.decide(Xq.row(q).transpose());
                    pred.push_back({label, static_cast<double>(label)});
                }
            }
            int wrong = 0;
            for (int q : keep) wrong += pred[q].label != test.data.labels()[q];
            r.errors.push_back(keep.empty() ? 0.0 : static_cast<double>(wrong) / keep.size());
            if (cs.write_predictions) r.predictions.push_back(std::move(pred));
        }
        results[task] = std::move(r);
    });

    auto out = open_csv(config, report, "compare.csv");
    out << "n,trial,predictor,error,evaluated_queries,seed\n";
    for (int ni = 0; ni < n_sizes; ++ni) {
        for (int t = 0; t < cs.trials; ++t) {
            const auto& r = results[ni * cs.trials + t];
            for (int p = 0; p < P; ++p) {
                out << cs.n_schedule[ni] << ',' << t << ',' << cs.predictors[p] << ',' << num(r.errors[p]) << ','
                    << r.evaluated << ',' << config.seed << '\n';
                if (cs.write_predictions) {
                    const std::string name = "predictions_" + cs.predictors[p] + "_n" +
                                             std::to_string(cs.n_schedule[ni]) + "_t" + std::to_string(t) + ".csv";
                    auto pf = open_csv(config, report, name);
                    write_predictions_csv(pf, r.predictions[p]);
                }
            }
        }
    }

    auto summary = open_csv(config, report, "compare_summary.csv");
    summary << "n,predictor,mean_error,std_error,trials,seed\n";
    // mean[p][ni], se[p][ni]
    std::vector<std::vector<double>> mean(P, std::vector<double>(n_sizes)), se = mean;
    json rows = json::array();
    for (int ni = 0; ni < n_sizes; ++ni) {
        for (int p = 0; p < P; ++p) {
            double s = 0.0, s2 = 0.0;
            for (int t = 0; t < cs.trials; ++t) {
                const double e = results[ni * cs.trials + t].errors[p];
                s += e;
                s2 += e * e;
            }
            const double m = s / cs.trials;
            const double var = cs.trials > 1 ? std::max(0.0, (s2 - cs.trials * m * m) / (cs.trials - 1)) : 0.0;
            mean[p][ni] = m;
            se[p][ni] = std::sqrt(var / cs.trials);
            summary << cs.n_schedule[ni] << ',' << cs.predictors[p] << ',' << num(m) << ',' << num(se[p][ni]) << ','
                    << cs.trials << ',' << config.seed << '\n';
            rows.push_back({{"n", cs.n_schedule[ni]},
                            {"predictor", cs.predictors[p]},
                            {"mean_error", m},
                            {"std_error", se[p][ni]},
                            {"seed", config.seed}});
        }
    }

    json checks = json::object();
    auto index_of = [&](const std::string& name) -> int {
        const auto it = std::find(cs.predictors.begin(), cs.predictors.end(), name);
        return it == cs.predictors.end() ? -1 : static_cast<int>(it - cs.predictors.begin());
    };
    if (const int s = index_of("ntk_inf"); s >= 0) {
        bool decreasing = true;
        for (int ni = 1; ni < n_sizes; ++ni) decreasing = decreasing && mean[s][ni] < mean[s][ni - 1];
        checks["singular_error_decreasing"] = decreasing;
        if (const int m = index_of("majority"); m >= 0) {
            bool below = true;
            for (int ni = 0; ni < n_sizes; ++ni) below = below && mean[s][ni] < mean[m][ni];
            checks["singular_below_majority"] = below;
        }
    }
    if (const int b = index_of("bayes"); b >= 0) {
        bool lower = true;
        for (int p = 0; p < P; ++p) {
            for (int ni = 0; ni < n_sizes; ++ni) {
                const double slack = 2.0 * std::hypot(se[b][ni], se[p][ni]);
                lower = lower && mean[b][ni] <= mean[p][ni] + slack;
            }
        }
        checks["bayes_lower_bound_2sigma"] = lower;
    }
    report.metrics = {{"summary", rows},
                      {"checks", checks},
                      {"bayes_exact_risk", oracle.exact_risk},
                      {"bayes_mc_risk", oracle.risk},
                      {"bayes_mc_se", oracle.risk_se},
                      {"margin_band", informative ? cs.margin_band : 0.0},
                      {"informative", informative},
                      {"seed", config.seed}};
    report.wall_clock_seconds = seconds_since(t0);
    return report;
}

// ------------------------------------------------------------------ report

ExperimentReport run_experiment(const ExperimentConfig& config) {
    ExperimentReport r;
    if (config.command == "taxonomy") r = run_taxonomy(config);
    else if (config.command == "dynamics") r = run_dynamics(config);
    else if (config.command == "polefit") r = run_polefit(config);
    else if (config.command == "fig2") r = run_fig2(config);
    else if (config.command == "compare") r = run_compare(config);
    else throw ConfigError("command: unknown command '" + config.command + "'");
    write_report(config, r);
    return r;
}

void write_report(const ExperimentConfig& config, const ExperimentReport& report) {
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
    json j{{"tool", "ntk-kit"},
           {"version", version()},
           {"timestamp", stamp},
           {"command", report.command},
           {"wall_clock_seconds", report.wall_clock_seconds},
           {"config", report.config},
           {"files", report.files},
           {"metrics", report.metrics}};
    const fs::path path = prepare_output(config) / "report.json";
    std::ofstream out(path);
    if (!out) throw ConfigError("output_dir: cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

}  // namespace ntk
