#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace ntk {

/// Truncated power series sum_i a_i z^i of a dual activation.
///
/// The coefficients are the squared normalized Hermite coefficients of the
/// primal activation, so every a_i is non-negative and sum_i a_i + tail_mass
/// equals the normalization value 1.
class DualSeries {
  public:
    DualSeries() = default;

    /// Validating constructor. Coefficients above -1e-12 are clamped to 0,
    /// anything more negative is rejected, and the total mass must be 1 to 1e-8.
    explicit DualSeries(std::vector<double> coeffs, double tail_mass = 0.0);

    const std::vector<double>& coeffs() const noexcept { return coeffs_; }
    double coeff(std::size_t i) const noexcept { return i < coeffs_.size() ? coeffs_[i] : 0.0; }
    int truncation_degree() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
    double tail_mass() const noexcept { return tail_mass_; }

    /// Set when the quadrature left more than 1% of the mass beyond the truncation degree.
    bool truncation_warning() const noexcept { return tail_mass_ > 0.01; }

    double value(double z) const;
    double derivative(double z) const;

    /// phi(x) / (a_1 x), evaluated without cancellation; 1 at x = 0.
    double ratio_to_linear(double x) const;

    /// log phi(exp(log_z)) that survives exp(log_z) underflowing.
    double log_value_from_log(double log_z) const;
    double log_derivative_from_log(double log_z) const;

  private:
    std::vector<double> coeffs_{0.0, 1.0};
    double tail_mass_ = 0.0;
};

void to_json(nlohmann::json& j, const DualSeries& s);
void from_json(const nlohmann::json& j, DualSeries& s);

/// Dual activations with closed forms that are evaluated directly, never truncated.
enum class ClosedFormDual {
    Relu,            // (sqrt(1 - z^2) + (pi - arccos z) z) / pi
    NormalizedSine,  // C sinh z,       C = 2e / (e^2 - 1)
    NormalizedErf,   // C asin(2z / 3), C = 1 / asin(2/3)
};

/// A dual activation on [0, 1]: a power series or an exact closed form.
class Dual {
  public:
    Dual(DualSeries series, std::string name = "series");
    Dual(ClosedFormDual form, std::string name);

    const std::string& name() const noexcept { return name_; }
    bool is_series() const noexcept { return std::holds_alternative<DualSeries>(rep_); }
    const DualSeries* series() const noexcept { return std::get_if<DualSeries>(&rep_); }

    double value(double z) const;
    double derivative(double z) const;

    double constant_term() const;  // phi(0)
    double linear_term() const;    // phi'(0)
    double slope_at_one() const;   // phi'(1)

    double ratio_to_linear(double x) const;
    double log_value_from_log(double log_z) const;
    double log_derivative_from_log(double log_z) const;

  private:
    std::variant<DualSeries, ClosedFormDual> rep_;
    std::string name_;
};

/// Primal activation handed to the Hermite projection.
struct ActivationSpec {
    std::string kind;                     // preset name, or "sampled"
    std::optional<int> dimension_hint;    // d for d-parameterized presets
    std::function<double(double)> sampled;
    /// Points where phi is not smooth. Gauss-Hermite converges only algebraically across
    /// a kink, so when any are listed the projection uses Gauss-Legendre panels split there.
    std::vector<double> breakpoints;

    static ActivationSpec from_preset(const std::string& name, std::optional<int> d = std::nullopt);
    static ActivationSpec from_function(std::function<double(double)> f, std::vector<double> breakpoints = {});

    /// Resolves the callable (preset primal or the sampled handle).
    std::function<double(double)> function() const;
};

/// Probabilists' Gauss-Hermite rule normalized to the standard normal measure.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
QuadratureRule gauss_hermite(int order);

/// Dual series from the Hermite expansion of a primal activation.
DualSeries hermite_dual(const ActivationSpec& spec, int max_degree = 30, int quad_order = 100);

/// Stable preset identifiers.
const std::vector<std::string>& preset_names();

/// Closed form where one exists, exact finite series for polynomial presets.
Dual preset(const std::string& name, std::optional<int> d = std::nullopt);

/// Parses "name", "name:d" or "series:a0,a1,...".
Dual parse_activation(const std::string& text);

struct Moments {
    double A2 = 0.0;        // phi(0)
    double Aprime2 = 0.0;   // phi'(0)
    double Bprime = 0.0;    // phi'(1)
    bool bprime_lower_bound = false;  // series truncated with tail mass: Bprime underestimates
};

Moments moments(const Dual& dual);

enum class TaxonomyCase { SingularKernel, OneNN, MajorityVote };
enum class Phase { Chaotic, Ordered, EdgeOfChaos };

std::string to_string(TaxonomyCase c);
std::string to_string(Phase p);

struct TaxonomyVerdict {
    TaxonomyCase taxonomy_case = TaxonomyCase::MajorityVote;
    std::optional<Phase> phase;
    std::optional<double> pole_order_z;     // exponent of (1 - z)
    std::optional<double> pole_order_dist;  // exponent of |x - x~|, twice the above
    std::optional<int> optimal_for_dim;
    std::optional<bool> optimal_for_requested_dim;  // only when a dimension was passed in
    Moments moments;
};

TaxonomyVerdict classify_taxonomy(const Dual& dual, std::optional<int> d = std::nullopt,
                                  double tol = 1e-8);

struct FixedPoint {
    double c = 0.0;
    double derivative = 0.0;
    bool stable = false;
    /// c / (1 - phi'(c)), the depth limit of the NTK off the diagonal; only for stable points.
    std::optional<double> ntk_limit;
};

struct FixedPointReport {
    std::vector<FixedPoint> points;
    bool continuum = false;  // phi(z) = z on the whole interval
};

FixedPointReport fixed_points(const Dual& dual, int grid_size = 2000);

}  // namespace ntk
