#pragma once

#include <functional>
#include <vector>

#include "ntk/dual_activation.hpp"

namespace ntk {

// Depth index convention: the 0-th iterate is the identity, so K^(0)(z) = z.

/// phi applied L times to z.
double iterate_dual(const Dual& dual, double z, int L);

/// K^(L)(z) through K^(L) = phi^(L)(z) + K^(L-1)(z) phi'(phi^(L-1)(z)).
/// Underflows to 0 for deep Case 1/2 kernels and overflows to +inf at z = 1 in the chaotic phase.
double ntk_recursion(const Dual& dual, double z, int L);

/// The same kernel as the explicit sum over i of phi^(i)(z) prod_{j=i}^{L-1} phi'(phi^(j)(z)).
double ntk_closed_form(const Dual& dual, double z, int L);

/// log K^(L)(z), computed entirely in the log domain.
double log_ntk(const Dual& dual, double z, int L);

struct DepthEntry {
    int depth = 0;
    double v = 0.0;  // raw iterate phi^(L)(z)
    double N = 0.0;  // phi^(L)(z) / a_1^L
    double P = 0.0;  // K^(L)(z) / (a_1^L (L + 1))
};

struct DepthTrace {
    double z = 0.0;
    std::vector<DepthEntry> entries;  // depths 0..L_max
};

/// Normalized NNGP and NTK for a dual with zero constant term and a positive linear term.
DepthTrace normalized_trace(const Dual& dual, double z, int L_max);

struct DepthLimit {
    double value = 0.0;      // lim N_L, which equals lim P_L
    double P_at_stop = 0.0;  // P_L at the stopping depth; approaches value only like 1/L
    int depth = 0;
    double achieved_tol = 0.0;  // last relative step |N_L - N_{L-1}| / N_L
    bool converged = false;
};

/// psi(z) for a singular-kernel dual. N_L converges geometrically once the iterate
/// leaves the neighbourhood of 1, so the stopping rule is applied to N_L.
DepthLimit ntk_depth_limit(const Dual& dual, double z, double tol = 1e-10, int max_depth = 100000);

/// The limit value alone, without the P_L bookkeeping.
double psi(const Dual& dual, double z);

struct PoleFit {
    double order_hat = 0.0;
    double b = 2.0;
    std::vector<double> eps_grid;
    std::vector<double> raw_orders;  // -log_b f(1 - b eps) / f(1 - eps) at each eps
    std::vector<double> residuals;   // |raw order - order_hat|
};

std::vector<double> default_eps_grid();

/// Fits the exponent alpha of a pole (1 - z)^-alpha at z = 1. Raw ratio orders are
/// extrapolated linearly in 1 / log(1 / eps) to eps = 0.
PoleFit estimate_pole_order(const std::function<double(double)>& f, double b = 2.0,
                            std::vector<double> eps_grid = default_eps_grid());

// x -> a x on [0, c], 1 - b (1 - x) on (c, 1], with c = (b - 1) / (b - a).
double piecewise_linear_threshold(double a, double b);
double piecewise_linear_map(double a, double b, double x);
double piecewise_linear_iterate(double a, double b, double z, int L);

/// lim_L f^(L)(z) / a^L, exact: the first L0 steps stay on the expanding branch.
double piecewise_linear_limit(double a, double b, double z);

/// c ((1 - c) / (1 - z))^(-log a / log b) above the threshold and z below it.
double piecewise_linear_theory(double a, double b, double z);

/// ((alpha - 1) / alpha)^d x / (1 - x / alpha)^d.
double f_alpha(double alpha, int d, double x);

/// L-fold iterate of f_alpha; with normalized set, scaled by (alpha / (alpha - 1))^(d L)
/// through a running ratio product.
double f_alpha_iterate(double alpha, int d, double z, int L, bool normalized);

struct Sandwich {
    double lower = 0.0;
    double upper = 0.0;
};

/// Analytic bounds on the normalized f_alpha iterate at depth L.
Sandwich f_alpha_sandwich(double alpha, int d, double z, int L);

}  // namespace ntk
