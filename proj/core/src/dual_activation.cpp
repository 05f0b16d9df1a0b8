#include "ntk/dual_activation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "ntk/errors.hpp"

namespace ntk {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kE = std::numbers::e;

const double kSineScale = 2.0 * kE / (kE * kE - 1.0);
const double kErfScale = 1.0 / std::asin(2.0 / 3.0);

double horner(const std::vector<double>& c, double z) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
    return acc;
}

double horner_derivative(const std::vector<double>& c, double z) {
    double acc = 0.0;
    for (std::size_t i = c.size(); i-- > 1;) acc = acc * z + static_cast<double>(i) * c[i];
    return acc;
}

// log sum_i c_i exp(i * lz) for non-negative c, robust when exp(lz) underflows.
double log_poly_from_log(const std::vector<double>& c, double lz) {
    std::size_t m = 0;
    while (m < c.size() && c[m] <= 0.0) ++m;
    if (m == c.size()) return -std::numeric_limits<double>::infinity();
    if (m == 0) {
        return std::log(horner(c, std::exp(lz)));
    }
    double s = 0.0;
    const double t = std::exp(lz);
    // Horner on the normalized tail c_{m+k}/c_m t^k, k >= 1.
    for (std::size_t i = c.size() - 1; i > m; --i) s = (s + c[i] / c[m]) * t;
    return std::log(c[m]) + static_cast<double>(m) * lz + std::log1p(s);
}

std::vector<double> derivative_coeffs(const std::vector<double>& c) {
    std::vector<double> d;
    for (std::size_t i = 1; i < c.size(); ++i) d.push_back(static_cast<double>(i) * c[i]);
    if (d.empty()) d.push_back(0.0);
    return d;
}

// Orthonormal probabilists' Hermite values h_0..h_n at x.
void hermite_values(double x, int n, std::vector<double>& h) {
    h.assign(static_cast<std::size_t>(n) + 1, 0.0);
    h[0] = 1.0;
    if (n >= 1) h[1] = x;
    for (int i = 1; i < n; ++i) {
        h[i + 1] = (x * h[i] - std::sqrt(static_cast<double>(i)) * h[i - 1]) /
                   std::sqrt(static_cast<double>(i + 1));
    }
}

double corollary_primal(int d, double x) {
    if (d == 1) {
        const double x2 = x * x;
        const double h7 = x * (((x2 - 21.0) * x2 + 105.0) * x2 - 105.0);
        return h7 / (12.0 * std::sqrt(70.0)) + x / std::sqrt(2.0);
    }
    const double s = std::pow(2.0, -0.25 * d);
    const double mid = 1.0 - 2.0 * std::pow(2.0, -0.5 * d);
    return s * (x * x * x - 3.0 * x) / std::sqrt(6.0) +
           std::sqrt(std::max(mid, 0.0)) * (x * x - 1.0) / std::sqrt(2.0) + s * x;
}

DualSeries corollary_series(int d) {
    if (d < 1) throw std::invalid_argument("corollary_d requires d >= 1");
    if (d == 1) {
        std::vector<double> c(8, 0.0);
        c[1] = 0.5;
        c[7] = 0.5;
        return DualSeries(c);
    }
    const double a = std::pow(2.0, -0.5 * d);
    return DualSeries({0.0, a, 1.0 - 2.0 * a, a});
}

bool known_preset(const std::string& name) {
    const auto& names = preset_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace

// ---------------------------------------------------------------- DualSeries

DualSeries::DualSeries(std::vector<double> coeffs, double tail_mass) {
    if (coeffs.empty()) throw std::invalid_argument("dual series needs at least one coefficient");
    if (!std::isfinite(tail_mass) || tail_mass < 0.0)
        throw std::invalid_argument("tail mass must be finite and non-negative");
    double total = tail_mass;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        double& a = coeffs[i];
        if (!std::isfinite(a)) throw std::invalid_argument("non-finite dual coefficient");
        if (a < -1e-12) {
            throw std::invalid_argument("dual coefficient a_" + std::to_string(i) +
                                        " is negative");
        }
        a = std::max(a, 0.0);
        total += a;
    }
    if (std::abs(total - 1.0) > 1e-8) {
        throw std::invalid_argument("dual coefficients must sum to 1 (got " +
                                    std::to_string(total) + ")");
    }
    coeffs_ = std::move(coeffs);
    tail_mass_ = tail_mass;
}

double DualSeries::value(double z) const {
    // Pin the normalization at z = 1: rounding in the coefficient sum would otherwise make
    // 1 drift off its fixed point, and in the chaotic phase that fixed point repels.
    if (z == 1.0) return 1.0 - tail_mass_;
    return horner(coeffs_, z);
}

double DualSeries::derivative(double z) const { return horner_derivative(coeffs_, z); }

double DualSeries::ratio_to_linear(double x) const {
    const double a1 = coeff(1);
    if (a1 <= 0.0) throw NormalizationUndefined("linear coefficient is zero");
    if (coeffs_[0] > 0.0) return value(x) / (a1 * x);
    double acc = 0.0;
    for (std::size_t i = coeffs_.size(); i-- > 1;) acc = acc * x + coeffs_[i] / a1;
    return acc;
}

double DualSeries::log_value_from_log(double log_z) const {
    return log_poly_from_log(coeffs_, log_z);
}

double DualSeries::log_derivative_from_log(double log_z) const {
    return log_poly_from_log(derivative_coeffs(coeffs_), log_z);
}

void to_json(nlohmann::json& j, const DualSeries& s) {
    j = nlohmann::json{{"coeffs", s.coeffs()}, {"tail_mass", s.tail_mass()}};
}

void from_json(const nlohmann::json& j, DualSeries& s) {
    s = DualSeries(j.at("coeffs").get<std::vector<double>>(), j.value("tail_mass", 0.0));
}

// ---------------------------------------------------------------------- Dual

Dual::Dual(DualSeries series, std::string name) : rep_(std::move(series)), name_(std::move(name)) {}

Dual::Dual(ClosedFormDual form, std::string name) : rep_(form), name_(std::move(name)) {}

double Dual::value(double z) const {
    if (const auto* s = series()) return s->value(z);
    switch (std::get<ClosedFormDual>(rep_)) {
        case ClosedFormDual::Relu: {
            const double c = std::clamp(z, -1.0, 1.0);
            return (std::sqrt(std::max(0.0, 1.0 - c * c)) + (kPi - std::acos(c)) * c) / kPi;
        }
        case ClosedFormDual::NormalizedSine:
            return kSineScale * std::sinh(z);
        case ClosedFormDual::NormalizedErf:
            return kErfScale * std::asin(std::clamp(2.0 * z / 3.0, -1.0, 1.0));
    }
    return 0.0;
}

double Dual::derivative(double z) const {
    if (const auto* s = series()) return s->derivative(z);
    switch (std::get<ClosedFormDual>(rep_)) {
        case ClosedFormDual::Relu:
            return (kPi - std::acos(std::clamp(z, -1.0, 1.0))) / kPi;
        case ClosedFormDual::NormalizedSine:
            return kSineScale * std::cosh(z);
        case ClosedFormDual::NormalizedErf: {
            const double u = 2.0 * z / 3.0;
            return kErfScale * (2.0 / 3.0) / std::sqrt(1.0 - u * u);
        }
    }
    return 0.0;
}

double Dual::constant_term() const {
    if (const auto* s = series()) return s->coeff(0);
    return std::get<ClosedFormDual>(rep_) == ClosedFormDual::Relu ? 1.0 / kPi : 0.0;
}

double Dual::linear_term() const {
    if (const auto* s = series()) return s->coeff(1);
    switch (std::get<ClosedFormDual>(rep_)) {
        case ClosedFormDual::Relu: return 0.5;
        case ClosedFormDual::NormalizedSine: return kSineScale;
        case ClosedFormDual::NormalizedErf: return 2.0 * kErfScale / 3.0;
    }
    return 0.0;
}

double Dual::slope_at_one() const {
    if (const auto* s = series()) {
        double b = 0.0;
        for (std::size_t i = 1; i < s->coeffs().size(); ++i) b += static_cast<double>(i) * s->coeffs()[i];
        return b;
    }
    switch (std::get<ClosedFormDual>(rep_)) {
        case ClosedFormDual::Relu: return 1.0;
        case ClosedFormDual::NormalizedSine: return kSineScale * std::cosh(1.0);
        case ClosedFormDual::NormalizedErf: return 2.0 * kErfScale / std::sqrt(5.0);
    }
    return 0.0;
}

double Dual::ratio_to_linear(double x) const {
    if (const auto* s = series()) return s->ratio_to_linear(x);
    switch (std::get<ClosedFormDual>(rep_)) {
        case ClosedFormDual::Relu:
            throw NormalizationUndefined("relu dual has a constant term");
        case ClosedFormDual::NormalizedSine:
            return std::abs(x) < 1e-4 ? 1.0 + x * x / 6.0 : std::sinh(x) / x;
        case ClosedFormDual::NormalizedErf: {
            const double u = 2.0 * x / 3.0;
            return std::abs(u) < 1e-4 ? 1.0 + u * u / 6.0 : std::asin(u) / u;
        }
    }
    return 0.0;
}

double Dual::log_value_from_log(double log_z) const {
    if (const auto* s = series()) return s->log_value_from_log(log_z);
    if (std::get<ClosedFormDual>(rep_) == ClosedFormDual::Relu) return std::log(value(std::exp(log_z)));
    return std::log(linear_term()) + log_z + std::log(ratio_to_linear(std::exp(log_z)));
}

double Dual::log_derivative_from_log(double log_z) const {
    if (const auto* s = series()) return s->log_derivative_from_log(log_z);
    return std::log(derivative(std::exp(log_z)));
}

// ------------------------------------------------------------ ActivationSpec

ActivationSpec ActivationSpec::from_preset(const std::string& name, std::optional<int> d) {
    if (!known_preset(name)) throw UnknownPreset(name);
    ActivationSpec s;
    s.kind = name;
    s.dimension_hint = d;
    if (name == "relu") s.breakpoints = {0.0};
    return s;
}

ActivationSpec ActivationSpec::from_function(std::function<double(double)> f, std::vector<double> breakpoints) {
    ActivationSpec s;
    s.kind = "sampled";
    s.sampled = std::move(f);
    s.breakpoints = std::move(breakpoints);
    return s;
}

std::function<double(double)> ActivationSpec::function() const {
    if (kind == "sampled") {
        if (!sampled) throw std::invalid_argument("sampled activation has no function");
        return sampled;
    }
    if (kind == "linear") return [](double x) { return x; };
    if (kind == "hermite2") return [](double x) { return (x * x - 1.0) / std::sqrt(2.0); };
    if (kind == "relu") return [](double x) { return std::sqrt(2.0) * std::max(x, 0.0); };
    if (kind == "normalized_sine") {
        const double k = std::sqrt(2.0 * kE * kE / (kE * kE - 1.0));
        return [k](double x) { return k * std::sin(x); };
    }
    if (kind == "normalized_erf") {
        const double k = std::sqrt(kPi / (2.0 * std::asin(2.0 / 3.0)));
        return [k](double x) { return k * std::erf(x); };
    }
    if (kind == "corollary_d") {
        if (!dimension_hint || *dimension_hint < 1)
            throw std::invalid_argument("corollary_d requires d >= 1");
        const int d = *dimension_hint;
        return [d](double x) { return corollary_primal(d, x); };
    }
    throw UnknownPreset(kind);
}

// ---------------------------------------------------------------- quadrature

QuadratureRule gauss_hermite(int order) {
    if (order < 1) throw std::invalid_argument("quadrature order must be positive");
    const auto n = static_cast<Eigen::Index>(order);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(std::max<Eigen::Index>(n - 1, 0));
    for (Eigen::Index i = 0; i + 1 < n; ++i) sub[i] = std::sqrt(static_cast<double>(i + 1));

    QuadratureRule rule;
    if (n == 1) {
        rule.nodes = {0.0};
        rule.weights = {1.0};
        return rule;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalFailure("Golub-Welsch eigen-solve failed");

    std::vector<double> h;
    rule.nodes.resize(static_cast<std::size_t>(order));
    rule.weights.resize(static_cast<std::size_t>(order));
    double wsum = 0.0;
    for (int k = 0; k < order; ++k) {
        double x = solver.eigenvalues()[k];
        // Two Newton steps on h_n sharpen the eigenvalues; h_n' = sqrt(n) h_{n-1}.
        for (int it = 0; it < 2; ++it) {
            hermite_values(x, order, h);
            const double dh = std::sqrt(static_cast<double>(order)) * h[order - 1];
            if (dh != 0.0) x -= h[order] / dh;
        }
        hermite_values(x, order - 1, h);
        double s = 0.0;
        for (double v : h) s += v * v;
        rule.nodes[k] = x;
        rule.weights[k] = 1.0 / s;
        wsum += rule.weights[k];
    }
    for (double& w : rule.weights) w /= wsum;
    return rule;
}

namespace {

// Gauss-Legendre on [-1, 1] by Golub-Welsch.
QuadratureRule gauss_legendre(int order) {
    const auto n = static_cast<Eigen::Index>(order);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (Eigen::Index k = 1; k < n; ++k) sub[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) throw NumericalFailure("Golub-Welsch eigen-solve failed");
    QuadratureRule rule;
    for (Eigen::Index k = 0; k < n; ++k) {
        rule.nodes.push_back(solver.eigenvalues()[k]);
        rule.weights.push_back(2.0 * solver.eigenvectors()(0, k) * solver.eigenvectors()(0, k));
    }
    return rule;
}

// Standard normal measure on [-14, 14] as Gauss-Legendre panels that never straddle a breakpoint.
QuadratureRule split_normal_rule(std::vector<double> breakpoints) {
    constexpr double kReach = 14.0;
    constexpr double kPanel = 0.5;
    const QuadratureRule gl = gauss_legendre(24);
    std::vector<double> edges{-kReach, kReach};
    for (double b : breakpoints) {
        if (b > -kReach && b < kReach) edges.push_back(b);
    }
    std::sort(edges.begin(), edges.end());
    QuadratureRule rule;
    double wsum = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double lo = edges[i], hi = edges[i + 1];
        if (hi <= lo) continue;
        const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / kPanel)));
        const double h = (hi - lo) / panels;
        for (int p = 0; p < panels; ++p) {
            const double mid = lo + (p + 0.5) * h;
            for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
                const double x = mid + 0.5 * h * gl.nodes[k];
                const double w = 0.5 * h * gl.weights[k] * std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
                rule.nodes.push_back(x);
                rule.weights.push_back(w);
                wsum += w;
            }
        }
    }
    for (double& w : rule.weights) w /= wsum;
    return rule;
}

}  // namespace

DualSeries hermite_dual(const ActivationSpec& spec, int max_degree, int quad_order) {
    if (max_degree < 0) throw std::invalid_argument("max_degree must be non-negative");
    if (quad_order < 2 * max_degree)
        throw std::invalid_argument("quad_order must be at least 2 * max_degree");
    const auto phi = spec.function();
    const QuadratureRule rule =
        spec.breakpoints.empty() ? gauss_hermite(std::max(quad_order, 1)) : split_normal_rule(spec.breakpoints);

    std::vector<double> proj(static_cast<std::size_t>(max_degree) + 1, 0.0);
    double second_moment = 0.0;
    std::vector<double> h;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const double x = rule.nodes[k];
        const double f = phi(x);
        if (!std::isfinite(f)) throw NumericalFailure("activation is not finite at a quadrature node");
        hermite_values(x, max_degree, h);
        for (int i = 0; i <= max_degree; ++i) proj[i] += rule.weights[k] * f * h[i];
        second_moment += rule.weights[k] * f * f;
    }
    if (!std::isfinite(second_moment)) throw NumericalFailure("second moment is not finite");
    if (second_moment <= 0.0) throw NumericalFailure("activation has zero second moment");

    std::vector<double> coeffs(proj.size());
    double total = 0.0;
    for (std::size_t i = 0; i < proj.size(); ++i) {
        coeffs[i] = proj[i] * proj[i] / second_moment;
        if (!std::isfinite(coeffs[i])) throw NumericalFailure("non-finite Hermite coefficient");
        total += coeffs[i];
    }
    // Quadrature can overshoot the unit mass by rounding; rescale onto it in that case.
    if (total > 1.0) {
        for (double& c : coeffs) c /= total;
        total = 1.0;
    }
    return DualSeries(std::move(coeffs), std::max(0.0, 1.0 - total));
}

// ------------------------------------------------------------------- presets

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"corollary_d",     "hermite2",       "relu",
                                                "normalized_sine", "normalized_erf", "linear"};
    return names;
}

Dual preset(const std::string& name, std::optional<int> d) {
    if (name == "corollary_d") {
        if (!d) throw std::invalid_argument("corollary_d requires d >= 1");
        return Dual(corollary_series(*d), "corollary_d:" + std::to_string(*d));
    }
    if (name == "hermite2") return Dual(DualSeries({0.0, 0.0, 1.0}), name);
    if (name == "linear") return Dual(DualSeries({0.0, 1.0}), name);
    if (name == "relu") return Dual(ClosedFormDual::Relu, name);
    if (name == "normalized_sine") return Dual(ClosedFormDual::NormalizedSine, name);
    if (name == "normalized_erf") return Dual(ClosedFormDual::NormalizedErf, name);
    throw UnknownPreset(name);
}

Dual parse_activation(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    if (colon == std::string::npos) return preset(head);
    const std::string rest = text.substr(colon + 1);
    if (head == "series") {
        std::vector<double> c;
        std::stringstream ss(rest);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                c.push_back(std::stod(item, &used));
                if (used != item.size() && item.find_first_not_of(" \t", used) != std::string::npos)
                    throw std::invalid_argument(item);
            } catch (const std::logic_error&) {
                throw std::invalid_argument("bad series coefficient '" + item + "'");
            }
        }
        return Dual(DualSeries(std::move(c)), text);
    }
    int d = 0;
    try {
        std::size_t used = 0;
        d = std::stoi(rest, &used);
        if (used != rest.size()) throw std::invalid_argument(rest);
    } catch (const std::logic_error&) {
        throw std::invalid_argument("bad dimension in activation '" + text + "'");
    }
    return preset(head, d);
}

// ------------------------------------------------------------------ taxonomy

Moments moments(const Dual& dual) {
    Moments m;
    m.A2 = dual.constant_term();
    m.Aprime2 = dual.linear_term();
    m.Bprime = dual.slope_at_one();
    if (const auto* s = dual.series()) m.bprime_lower_bound = s->tail_mass() > 0.0;
    return m;
}

std::string to_string(TaxonomyCase c) {
    switch (c) {
        case TaxonomyCase::SingularKernel: return "SingularKernel";
        case TaxonomyCase::OneNN: return "OneNN";
        case TaxonomyCase::MajorityVote: return "MajorityVote";
    }
    return "?";
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::Chaotic: return "Chaotic";
        case Phase::Ordered: return "Ordered";
        case Phase::EdgeOfChaos: return "EdgeOfChaos";
    }
    return "?";
}

TaxonomyVerdict classify_taxonomy(const Dual& dual, std::optional<int> d, double tol) {
    TaxonomyVerdict v;
    v.moments = moments(dual);
    const auto& m = v.moments;
    if (m.A2 > tol) {
        v.taxonomy_case = TaxonomyCase::MajorityVote;
        if (m.Bprime > 1.0 + tol) v.phase = Phase::Chaotic;
        else if (m.Bprime < 1.0 - tol) v.phase = Phase::Ordered;
        else v.phase = Phase::EdgeOfChaos;
        return v;
    }
    if (m.Aprime2 <= tol) {
        v.taxonomy_case = TaxonomyCase::OneNN;
        return v;
    }
    v.taxonomy_case = TaxonomyCase::SingularKernel;
    if (m.Bprime <= 1.0 + tol) {
        throw InvalidRegime("dual '" + dual.name() +
                            "' has a zero constant term but slope at 1 not above 1");
    }
    const double alpha = -std::log(m.Aprime2) / std::log(m.Bprime);
    v.pole_order_z = alpha;
    v.pole_order_dist = 2.0 * alpha;
    const double nearest = std::round(2.0 * alpha);
    if (nearest >= 1.0 && std::abs(2.0 * alpha - nearest) <= tol) {
        v.optimal_for_dim = static_cast<int>(nearest);
    }
    if (d) v.optimal_for_requested_dim = v.optimal_for_dim && *v.optimal_for_dim == *d;
    return v;
}

// --------------------------------------------------------------- fixed points

FixedPointReport fixed_points(const Dual& dual, int grid_size) {
    if (grid_size < 2) throw std::invalid_argument("grid_size must be at least 2");
    FixedPointReport report;
    auto g = [&](double z) { return dual.value(z) - z; };

    std::vector<double> roots;
    double max_abs = 0.0;
    double prev_z = 0.0;
    double prev_g = g(0.0);
    max_abs = std::abs(prev_g);
    if (std::abs(prev_g) <= 1e-14) roots.push_back(0.0);
    for (int k = 1; k <= grid_size; ++k) {
        const double z = static_cast<double>(k) / grid_size;
        const double gz = g(z);
        max_abs = std::max(max_abs, std::abs(gz));
        if (std::abs(gz) <= 1e-14) {
            roots.push_back(z);
        } else if (std::abs(prev_g) > 1e-14 && (prev_g < 0.0) != (gz < 0.0)) {
            double lo = prev_z, hi = z, glo = prev_g;
            while (hi - lo > 1e-12) {
                const double mid = 0.5 * (lo + hi);
                const double gm = g(mid);
                if (gm == 0.0) { lo = hi = mid; break; }
                if ((gm < 0.0) == (glo < 0.0)) { lo = mid; glo = gm; } else { hi = mid; }
            }
            roots.push_back(0.5 * (lo + hi));
        }
        prev_z = z;
        prev_g = gz;
    }
    if (max_abs <= 1e-12) {
        report.continuum = true;
        roots = {1.0};
    }
    if (roots.empty() || std::abs(roots.back() - 1.0) > 1e-12) roots.push_back(1.0);
    else roots.back() = 1.0;

    for (double c : roots) {
        FixedPoint fp;
        fp.c = c;
        fp.derivative = dual.derivative(c);
        fp.stable = fp.derivative < 1.0;
        if (fp.stable) fp.ntk_limit = c / (1.0 - fp.derivative);
        report.points.push_back(fp);
    }
    return report;
}

}  // namespace ntk
