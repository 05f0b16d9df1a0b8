#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "ntk/errors.hpp"
#include "ntk/experiments.hpp"

using Catch::Approx;
using namespace ntk;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(NTK_TEST_TMPDIR) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path write_file(const fs::path& p, const std::string& body) {
    std::ofstream(p) << body;
    return p;
}

ExperimentConfig small_compare(const fs::path& out) {
    ExperimentConfig c = config_from_json(nlohmann::json{
        {"command", "compare"},
        {"compare", {{"n_schedule", {30, 90}}, {"trials", 3}, {"queries", 100}, {"mc_samples", 2000}}},
        {"seed", 5}});
    c.output_dir = out.string();
    return c;
}

}  // namespace

TEST_CASE("INI parsing", "[experiments]") {
    const std::string text =
        "# comment\n"
        "command = compare\n"
        "seed = 17 ; trailing\n"
        "[compare]\n"
        "n_schedule = 50, 100\n"
        "trials = 2\n"
        "activation = corollary_d:3\n"
        "write_predictions = true\n"
        "[mixture]\n"
        "family = two_cap\n"
        "d = 3\n"
        "prior_p = 0.4\n";
    const auto c = config_from_json(ini_to_json(text));
    CHECK(c.command == "compare");
    CHECK(c.seed == 17);
    CHECK(c.compare.n_schedule == std::vector<int>{50, 100});
    CHECK(c.compare.trials == 2);
    CHECK(c.compare.activation == "corollary_d:3");
    CHECK(c.compare.write_predictions);
    CHECK(c.mixture.d == 3);
    CHECK(c.mixture.prior_p == 0.4);
    CHECK(c.mixture.seed == 17);

    CHECK_THROWS_AS(ini_to_json("command = fig2\ncommand = fig2\n"), ConfigError);
    CHECK_THROWS_AS(ini_to_json("just words\n"), ConfigError);
}

TEST_CASE("strict keys", "[experiments]") {
    try {
        config_from_json(ini_to_json("command = dynamics\n[polefit]\nbee = 2\n"), "cfg.ini");
        FAIL("unknown key accepted");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("bee") != std::string::npos);
    }
    CHECK_THROWS_AS(config_from_json({{"command", "fig2"}, {"sed", 3}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "fig2"}, {"fig2", {{"a", 0.5}, {"c", 1}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"seed", 3}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "plot"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "fig2"}, {"seed", "three"}}), ConfigError);
}

TEST_CASE("defaults and echo", "[experiments]") {
    const auto c = config_from_json({{"command", "dynamics"}});
    CHECK(c.seed == 0);
    CHECK_FALSE(c.activations.empty());
    const auto echo = c.to_json();
    CHECK(echo.at("seed") == 0);
    const auto again = config_from_json(echo);
    CHECK(again.to_json() == echo);
}

TEST_CASE("shipped example configs parse", "[experiments]") {
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(NTK_CONFIG_DIR)) {
        INFO(entry.path());
        const auto c = parse_config(entry.path().string());
        CHECK(entry.path().stem().string() == c.command);
        ++seen;
    }
    CHECK(seen == 5);
}

TEST_CASE("config validation", "[experiments]") {
    CHECK_THROWS_AS(config_from_json({{"command", "compare"}, {"compare", {{"n_schedule", {100, 100}}}}}),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "compare"}, {"compare", {{"n_schedule", {500, 100}}}}}),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "dynamics"}, {"depths", {0, 5, 3}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "dynamics"}, {"z_grid", {0.5, 1.0}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "taxonomy"}, {"activations", {"softplus"}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "compare"}, {"compare", {{"predictors", {"svm"}}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "polefit"}, {"polefit", {{"b", 1.0}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"command", "compare"}, {"mixture", {{"family", "stripes"}}}}), ConfigError);

    // ReLU has a majority-vote limit, so the infinite-depth kernel machine does not exist.
    auto c = config_from_json({{"command", "compare"},
                               {"compare", {{"activation", "relu"}, {"n_schedule", {10}}, {"trials", 1}}}});
    c.output_dir = scratch("relu_compare").string();
    CHECK_THROWS_AS(run_compare(c), ConfigError);
}

TEST_CASE("taxonomy and dynamics outputs", "[experiments]") {
    auto c = config_from_json({{"command", "taxonomy"}, {"dimension", 2}});
    c.output_dir = scratch("taxonomy").string();
    const auto r = run_experiment(c);
    const std::string table = slurp(fs::path(c.output_dir) / "taxonomy.csv");
    CHECK(table.find("relu") != std::string::npos);
    CHECK(table.find("InvalidRegime") != std::string::npos);
    CHECK(fs::exists(fs::path(c.output_dir) / "report.json"));
    CHECK(r.metrics.at("rows").size() == c.activations.size());

    auto d = config_from_json(
        {{"command", "dynamics"}, {"activations", {"corollary_d:2"}}, {"depths", {0, 10, 100}}, {"z_grid", {0.5}}});
    d.output_dir = scratch("dynamics").string();
    const auto rd = run_experiment(d);
    std::ifstream in(fs::path(d.output_dir) / "dynamics_corollary_d_2.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "z,L,v,N,P,seed");
    const auto& z = rd.metrics.at("activations")[0].at("z")[0];
    CHECK(z.at("psi").get<double>() > 0.5);
    for (const auto& ctl : rd.metrics.at("f_alpha_controls")) CHECK(ctl.at("inside_sandwich").get<bool>());
}

TEST_CASE("fig2 and polefit outputs", "[experiments]") {
    auto f = config_from_json({{"command", "fig2"}, {"fig2", {{"points", 50}}}});
    f.output_dir = scratch("fig2").string();
    const auto r = run_experiment(f);
    CHECK(r.metrics.at("relative_error").get<double>() < 0.01);
    CHECK(fs::exists(fs::path(f.output_dir) / "fig2.csv"));

    auto p = config_from_json({{"command", "polefit"}, {"activations", {"corollary_d:2"}}});
    p.output_dir = scratch("polefit").string();
    const auto rp = run_experiment(p);
    CHECK(rp.metrics.at("fits")[0].at("relative_error").get<double>() < 0.1);
    CHECK(rp.metrics.at("power_law_control").at("abs_error").get<double>() < 1e-9);
}

TEST_CASE("compare is deterministic", "[experiments]") {
    auto a = small_compare(scratch("det_a"));
    auto b = small_compare(scratch("det_b"));
    b.threads = 2;
    run_experiment(a);
    run_experiment(b);
    for (const char* name : {"compare.csv", "compare_summary.csv"}) {
        const std::string x = slurp(fs::path(a.output_dir) / name);
        CHECK_FALSE(x.empty());
        CHECK(x == slurp(fs::path(b.output_dir) / name));
    }
    auto c = small_compare(scratch("det_c"));
    c.seed = 6;
    c.mixture.seed = 6;
    run_experiment(c);
    CHECK(slurp(fs::path(a.output_dir) / "compare.csv") != slurp(fs::path(c.output_dir) / "compare.csv"));
}

TEST_CASE("report echoes the config", "[experiments]") {
    auto c = small_compare(scratch("report"));
    c.compare.write_predictions = true;
    const auto r = run_experiment(c);
    const auto j = nlohmann::json::parse(slurp(fs::path(c.output_dir) / "report.json"));
    CHECK(j.at("config") == c.to_json());
    CHECK(j.at("tool") == "ntk-kit");
    CHECK(j.at("version") == version());
    CHECK(j.at("files").size() == r.files.size());
    for (const auto& name : r.files) CHECK(fs::exists(fs::path(c.output_dir) / name));
    CHECK(fs::exists(fs::path(c.output_dir) / "predictions_ntk_inf_n30_t0.csv"));
}

TEST_CASE("uninformative mixture", "[experiments]") {
    auto c = config_from_json(nlohmann::json{
        {"command", "compare"},
        {"mixture", {{"family", "two_cap"}, {"d", 2}, {"prior_p", 0.5}, {"informative", false}}},
        {"compare", {{"n_schedule", {40, 80}}, {"trials", 10}, {"queries", 200}, {"mc_samples", 1000}}},
        {"seed", 2}});
    c.output_dir = scratch("flat").string();
    const auto r = run_experiment(c);
    CHECK_FALSE(r.metrics.at("informative").get<bool>());
    CHECK(r.metrics.at("bayes_exact_risk").get<double>() == Approx(0.5));
    for (const auto& row : r.metrics.at("summary")) {
        const double e = row.at("mean_error").get<double>();
        CHECK(std::abs(e - 0.5) < 0.1);
    }
}

#ifdef NTK_KIT_BINARY
TEST_CASE("command line", "[experiments]") {
    const fs::path dir = scratch("cli");
    const fs::path good = write_file(dir / "fig2.ini", "command = fig2\n[fig2]\npoints = 30\n");
    const fs::path bad = write_file(dir / "bad.ini", "command = fig2\nunknown_key = 1\n");
    const fs::path json_cfg = write_file(dir / "tax.json", R"({"command": "taxonomy", "activations": ["relu"]})");
    auto run = [&](const std::string& args) {
        const std::string cmd = std::string("\"") + NTK_KIT_BINARY + "\" " + args + " > \"" +
                                (dir / "log.txt").string() + "\" 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    CHECK(run("fig2 --config \"" + good.string() + "\" --out \"" + (dir / "o1").string() + "\"") == 0);
    CHECK(fs::exists(dir / "o1" / "fig2.csv"));
    CHECK(run("taxonomy --config \"" + json_cfg.string() + "\" --out \"" + (dir / "o2").string() + "\" --seed 9") ==
          0);
    const auto report = nlohmann::json::parse(slurp(dir / "o2" / "report.json"));
    CHECK(report.at("config").at("seed") == 9);
    CHECK(run("fig2 --config \"" + bad.string() + "\"") == 2);
    CHECK(run("taxonomy --config \"" + good.string() + "\"") == 2);
    CHECK(run("fig2 --config \"" + (dir / "missing.ini").string() + "\"") == 2);
    CHECK(run("fig2") == 2);
    CHECK(run("--version") == 0);
}
#endif
