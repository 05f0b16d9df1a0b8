#include <cmath>
#include <numbers>
#include <random>

#include "catch_amalgamated.hpp"
#include "ntk/dual_activation.hpp"
#include "ntk/errors.hpp"
#include "oracles.hpp"

using Catch::Approx;
using namespace ntk;

namespace {

std::vector<double> preset_coeffs(const std::string& name, std::optional<int> d = std::nullopt) {
    return preset(name, d).series()->coeffs();
}

}  // namespace

TEST_CASE("Gauss-Hermite rule reproduces Gaussian moments", "[dual_activation]") {
    const auto rule = gauss_hermite(40);
    double sum_w = 0.0;
    for (double w : rule.weights) sum_w += w;
    REQUIRE(sum_w == Approx(1.0).epsilon(1e-14));
    double dfact = 1.0;  // (2k - 1)!!
    for (int k = 1; k <= 10; ++k) {
        dfact *= 2 * k - 1;
        double m = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) m += rule.weights[i] * std::pow(rule.nodes[i], 2 * k);
        CHECK(m == Approx(dfact).epsilon(1e-11));
    }
}

TEST_CASE("hermite_dual recovers known expansions", "[dual_activation]") {
    SECTION("second normalized Hermite polynomial has dual z^2") {
        auto phi = [](double x) { return (x * x - 1.0) / std::sqrt(2.0); };
        const auto s = hermite_dual(ActivationSpec::from_function(phi), 30, 64);
        const auto ref = oracle::hermite_coefficients(phi, 6);
        for (int i = 0; i <= 6; ++i) CHECK(s.coeff(i) == Approx(ref[i]).margin(1e-10));
        CHECK(s.coeff(2) == Approx(1.0).epsilon(1e-12));
        CHECK(s.tail_mass() < 1e-12);
        CHECK_FALSE(s.truncation_warning());
    }
    SECTION("identity has dual z") {
        const auto s = hermite_dual(ActivationSpec::from_function([](double x) { return x; }), 30, 64);
        CHECK(s.coeff(0) < 1e-14);
        CHECK(s.coeff(1) == Approx(1.0).epsilon(1e-12));
        CHECK(s.tail_mass() < 1e-12);
    }
    SECTION("corollary primals project onto their preset series") {
        for (int d = 1; d <= 8; ++d) {
            const auto s = hermite_dual(ActivationSpec::from_preset("corollary_d", d));
            const auto expected = preset_coeffs("corollary_d", d);
            for (std::size_t i = 0; i < 12; ++i) {
                const double e = i < expected.size() ? expected[i] : 0.0;
                CHECK(s.coeff(i) == Approx(e).margin(1e-11));
            }
        }
        const auto two = hermite_dual(ActivationSpec::from_preset("corollary_d", 2));
        CHECK(two.coeff(1) == Approx(0.5).epsilon(1e-11));
        CHECK(two.coeff(2) == Approx(0.0).margin(1e-12));
        CHECK(two.coeff(3) == Approx(0.5).epsilon(1e-11));
    }
    SECTION("agrees with an independent Simpson projection for a generic function") {
        auto phi = [](double x) { return std::tanh(x) + 0.3 * std::cos(x); };
        const auto s = hermite_dual(ActivationSpec::from_function(phi), 20, 120);
        const auto ref = oracle::hermite_coefficients(phi, 20);
        for (int i = 0; i <= 20; ++i) CHECK(s.coeff(i) == Approx(ref[i]).margin(1e-9));
    }
    SECTION("sign flip leaves the moments unchanged") {
        auto phi = [](double x) { return std::sin(x) + 0.2 * x * x; };
        auto neg = [&](double x) { return -phi(x); };
        const Moments a = moments(Dual(hermite_dual(ActivationSpec::from_function(phi))));
        const Moments b = moments(Dual(hermite_dual(ActivationSpec::from_function(neg))));
        CHECK(a.A2 == Approx(b.A2).margin(1e-15));
        CHECK(a.Aprime2 == Approx(b.Aprime2).margin(1e-15));
        CHECK(a.Bprime == Approx(b.Bprime).margin(1e-13));
    }
}

TEST_CASE("hermite_dual failure modes", "[dual_activation]") {
    CHECK_THROWS_AS(hermite_dual(ActivationSpec::from_function([](double x) { return 1.0 / (x - x); })),
                    NumericalFailure);
    CHECK_THROWS_AS(hermite_dual(ActivationSpec::from_function([](double) { return 0.0; })), NumericalFailure);
    CHECK_THROWS_AS(hermite_dual(ActivationSpec::from_function([](double x) { return x; }), 30, 40),
                    std::invalid_argument);
    // ReLU's coefficients decay slowly, so a low truncation leaves visible tail mass.
    // Through degree 2 the retained mass is 1/pi + 1/2 + 1/(2 pi), leaving about 0.0225.
    const auto relu2 = hermite_dual(ActivationSpec::from_preset("relu"), 2, 100);
    CHECK(relu2.truncation_warning());
    CHECK(relu2.tail_mass() == Approx(0.5 - 1.5 / std::numbers::pi).margin(1e-12));
    CHECK(moments(Dual(relu2)).bprime_lower_bound);
}

TEST_CASE("closed-form duals match their primal activations", "[dual_activation]") {
    for (const std::string name : {"relu", "normalized_sine", "normalized_erf"}) {
        const Dual dual = preset(name);
        const auto phi = ActivationSpec::from_preset(name).function();
        for (double z : {0.0, 0.3, 0.7, 0.95}) {
            INFO(name << " at z = " << z);
            CHECK(dual.value(z) == Approx(oracle::dual_by_integration(phi, z)).epsilon(2e-6).margin(1e-12));
        }
        CHECK(dual.value(1.0) == Approx(1.0).epsilon(1e-14));
        const double h = 1e-6;
        for (double z : {0.2, 0.6}) {
            CHECK(dual.derivative(z) == Approx((dual.value(z + h) - dual.value(z - h)) / (2 * h)).epsilon(1e-7));
        }
        const auto series = hermite_dual(ActivationSpec::from_preset(name), 30, 100);
        CHECK(series.coeff(0) == Approx(dual.constant_term()).margin(1e-10));
        CHECK(series.coeff(1) == Approx(dual.linear_term()).epsilon(1e-10));
    }
}

TEST_CASE("presets", "[dual_activation]") {
    CHECK(preset_coeffs("corollary_d", 2) == std::vector<double>{0.0, 0.5, 0.0, 0.5});
    const auto c1 = preset_coeffs("corollary_d", 1);
    REQUIRE(c1.size() == 8);
    CHECK(c1[1] == 0.5);
    CHECK(c1[7] == 0.5);
    CHECK(preset_coeffs("hermite2") == std::vector<double>{0.0, 0.0, 1.0});
    CHECK(preset_coeffs("linear") == std::vector<double>{0.0, 1.0});
    CHECK_FALSE(preset("relu").is_series());
    CHECK_THROWS_AS(preset("softplus"), UnknownPreset);
    CHECK_THROWS_AS(preset("corollary_d"), std::invalid_argument);
    CHECK_THROWS_AS(preset("corollary_d", 0), std::invalid_argument);
    CHECK(parse_activation("corollary_d:3").series()->coeff(1) == Approx(std::pow(2.0, -1.5)));
    CHECK(parse_activation("series:0, 0.25, 0.75").series()->coeff(2) == 0.75);
    CHECK_THROWS(parse_activation("series:0,0.5"));
    CHECK_THROWS(parse_activation("corollary_d:x"));
}

TEST_CASE("DualSeries validation and serialization", "[dual_activation]") {
    CHECK_THROWS_AS(DualSeries({0.0, -1e-6, 1.0}), std::invalid_argument);
    const DualSeries clamped({-1e-13, 1.0});
    CHECK(clamped.coeff(0) == 0.0);
    CHECK_THROWS_AS(DualSeries({0.2, 0.2}), std::invalid_argument);
    CHECK_NOTHROW(DualSeries({0.2, 0.7}, 0.1));

    const DualSeries s({0.1, 0.2, 0.7});
    const nlohmann::json j = s;
    CHECK(j.at("coeffs").size() == 3);
    CHECK(j.at("tail_mass") == 0.0);
    const auto back = j.get<DualSeries>();
    CHECK(back.coeffs() == s.coeffs());
}

TEST_CASE("log-domain evaluation survives underflow", "[dual_activation]") {
    const Dual h2 = preset("hermite2");
    CHECK(h2.log_value_from_log(-1e4) == Approx(-2e4).epsilon(1e-15));
    CHECK(h2.log_derivative_from_log(-1e4) == Approx(std::log(2.0) - 1e4).epsilon(1e-15));
    const Dual c2 = preset("corollary_d", 2);
    for (double z : {1e-3, 0.2, 0.9, 1.0}) {
        CHECK(c2.log_value_from_log(std::log(z)) == Approx(std::log(c2.value(z))).epsilon(1e-13));
        CHECK(c2.log_derivative_from_log(std::log(z)) == Approx(std::log(c2.derivative(z))).epsilon(1e-13));
    }
    // z^3/2 + z/2 at z = e^-800 is e^-800 / 2 to full precision.
    CHECK(c2.log_value_from_log(-800.0) == Approx(-800.0 - std::log(2.0)).epsilon(1e-15));
    for (const std::string name : {"normalized_sine", "normalized_erf"}) {
        const Dual d = preset(name);
        CHECK(d.log_value_from_log(std::log(0.4)) == Approx(std::log(d.value(0.4))).epsilon(1e-13));
        CHECK(d.log_value_from_log(-900.0) == Approx(std::log(d.linear_term()) - 900.0).epsilon(1e-15));
    }
}

TEST_CASE("moments", "[dual_activation]") {
    const Moments c2 = moments(preset("corollary_d", 2));
    CHECK(c2.A2 == 0.0);
    CHECK(c2.Aprime2 == Approx(0.5).margin(1e-12));
    CHECK(c2.Bprime == Approx(2.0).margin(1e-12));
    const Moments c1 = moments(preset("corollary_d", 1));
    CHECK(c1.Aprime2 == Approx(0.5).margin(1e-12));
    CHECK(c1.Bprime == Approx(4.0).margin(1e-12));
    const Moments h2 = moments(preset("hermite2"));
    CHECK(h2.A2 == 0.0);
    CHECK(h2.Aprime2 == 0.0);
    CHECK(h2.Bprime == 2.0);
    const Moments r = moments(preset("relu"));
    CHECK(r.A2 == Approx(1.0 / std::numbers::pi));
    CHECK(r.Aprime2 == 0.5);
    CHECK(r.Bprime == 1.0);
    const double e = std::numbers::e;
    CHECK(moments(preset("normalized_sine")).Bprime == Approx((e * e + 1.0) / (e * e - 1.0)).epsilon(1e-14));
}

TEST_CASE("taxonomy classification", "[dual_activation]") {
    SECTION("corollary activations are optimal for their dimension") {
        for (int d = 1; d <= 10; ++d) {
            const auto v = classify_taxonomy(preset("corollary_d", d), d);
            CHECK(v.taxonomy_case == TaxonomyCase::SingularKernel);
            REQUIRE(v.pole_order_z);
            CHECK(*v.pole_order_z == Approx(d / 2.0).epsilon(1e-12));
            CHECK(*v.pole_order_dist == 2.0 * *v.pole_order_z);
            REQUIRE(v.optimal_for_dim);
            CHECK(*v.optimal_for_dim == d);
            CHECK(v.optimal_for_requested_dim == std::optional<bool>(true));
        }
        CHECK(classify_taxonomy(preset("corollary_d", 3), 2).optimal_for_requested_dim == std::optional<bool>(false));
    }
    SECTION("cases and phases") {
        CHECK(classify_taxonomy(preset("hermite2")).taxonomy_case == TaxonomyCase::OneNN);
        const auto relu = classify_taxonomy(preset("relu"));
        CHECK(relu.taxonomy_case == TaxonomyCase::MajorityVote);
        CHECK(relu.phase == std::optional<Phase>(Phase::EdgeOfChaos));
        CHECK_FALSE(relu.pole_order_z);
        CHECK(classify_taxonomy(Dual(DualSeries({0.1, 0.2, 0.7}))).phase == std::optional<Phase>(Phase::Chaotic));
        CHECK(classify_taxonomy(Dual(DualSeries({0.3, 0.7}))).phase == std::optional<Phase>(Phase::Ordered));
        const auto sine = classify_taxonomy(preset("normalized_sine"));
        CHECK(sine.taxonomy_case == TaxonomyCase::SingularKernel);
        CHECK_FALSE(sine.optimal_for_dim);
        CHECK_THROWS_AS(classify_taxonomy(preset("linear")), InvalidRegime);
    }
    SECTION("a tiny constant term below the tolerance does not change the case") {
        CHECK(classify_taxonomy(Dual(DualSeries({1e-12, 0.5, 0.5 - 1e-12}))).taxonomy_case ==
              TaxonomyCase::SingularKernel);
    }
}

TEST_CASE("structural properties of dual series", "[dual_activation]") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> c(2 + trial % 8);
        double s = 0.0;
        for (auto& x : c) s += (x = u(rng) * u(rng));
        c[0] = 0.0;
        s = 0.0;
        for (double x : c) s += x;
        if (s == 0.0) continue;
        for (auto& x : c) x /= s;
        const DualSeries series(c);
        // Zero constant term and not exactly z forces a_1 < 1.
        const bool identity = c.size() == 2;
        if (!identity) CHECK(series.coeff(1) < 1.0);
        double prev = -1.0;
        for (int k = 0; k <= 50; ++k) {
            const double v = series.value(k / 50.0);
            CHECK(v >= prev);
            CHECK(v <= 1.0 + 1e-15);
            prev = v;
        }
    }
    for (const auto& name : preset_names()) {
        const Dual d = name == "corollary_d" ? preset(name, 3) : preset(name);
        double prev = -1.0;
        for (int k = 0; k <= 100; ++k) {
            const double v = d.value(k / 100.0);
            CHECK(v >= prev);
            CHECK(v <= 1.0 + 1e-15);
            prev = v;
        }
    }
}

TEST_CASE("fixed points", "[dual_activation]") {
    SECTION("corollary d = 2") {
        const auto r = fixed_points(preset("corollary_d", 2));
        REQUIRE(r.points.size() == 2);
        CHECK(r.points[0].c == 0.0);
        CHECK(r.points[0].derivative == Approx(0.5));
        CHECK(r.points[0].stable);
        CHECK(r.points[1].c == 1.0);
        CHECK(r.points[1].derivative == Approx(2.0));
        CHECK_FALSE(r.points[1].stable);
        CHECK_FALSE(r.continuum);
    }
    SECTION("identity has a continuum") {
        const auto r = fixed_points(preset("linear"));
        CHECK(r.continuum);
        CHECK(r.points.back().c == 1.0);
    }
    SECTION("chaotic dual exposes the interior attractor") {
        // 0.1 + 0.2c + 0.7c^2 = c has roots 1/7 and 1.
        const auto r = fixed_points(Dual(DualSeries({0.1, 0.2, 0.7})));
        REQUIRE(r.points.size() == 2);
        CHECK(r.points[0].c == Approx(1.0 / 7.0).margin(1e-12));
        CHECK(r.points[0].stable);
        REQUIRE(r.points[0].ntk_limit);
        CHECK(*r.points[0].ntk_limit == Approx((1.0 / 7.0) / (1.0 - 0.4)).epsilon(1e-10));
        CHECK(r.points[1].c == 1.0);
    }
    SECTION("relu only touches the diagonal") {
        const auto r = fixed_points(preset("relu"));
        CHECK(r.points.back().c == 1.0);
        for (const auto& p : r.points) CHECK(p.c > 0.99);
    }
}
