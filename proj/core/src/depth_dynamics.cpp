#include "ntk/depth_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ntk/errors.hpp"

namespace ntk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add_exp(double x, double y) {
    if (x == -kInf) return y;
    if (y == -kInf) return x;
    const double hi = std::max(x, y);
    return hi + std::log1p(std::exp(std::min(x, y) - hi));
}

void check_depth(int L) {
    if (L < 0) throw std::invalid_argument("depth must be non-negative");
}

void require_normalizable(const Dual& dual) {
    if (dual.constant_term() > 0.0)
        throw NormalizationUndefined("dual '" + dual.name() + "' has a non-zero constant term");
    if (dual.linear_term() <= 0.0)
        throw NormalizationUndefined("dual '" + dual.name() + "' has a zero linear term");
}

}  // namespace

double iterate_dual(const Dual& dual, double z, int L) {
    check_depth(L);
    double v = z;
    for (int l = 0; l < L; ++l) v = dual.value(v);
    return v;
}

double ntk_recursion(const Dual& dual, double z, int L) {
    check_depth(L);
    double v = z;
    double K = z;
    for (int l = 1; l <= L; ++l) {
        const double slope = dual.derivative(v);
        v = dual.value(v);
        K = v + K * slope;
        if (std::isinf(K)) return kInf;
    }
    return K;
}

double ntk_closed_form(const Dual& dual, double z, int L) {
    check_depth(L);
    std::vector<double> v(static_cast<std::size_t>(L) + 1);
    v[0] = z;
    for (int l = 1; l <= L; ++l) v[l] = dual.value(v[l - 1]);
    // Suffix products of the slopes, accumulated from the deepest term.
    double sum = 0.0;
    double prod = 1.0;
    for (int i = L; i >= 0; --i) {
        sum += v[i] * prod;
        if (i > 0) prod *= dual.derivative(v[i - 1]);
    }
    return std::isinf(sum) ? kInf : sum;
}

double log_ntk(const Dual& dual, double z, int L) {
    check_depth(L);
    if (z < 0.0) throw std::invalid_argument("log_ntk needs z >= 0");
    double lv = std::log(z);
    double lK = lv;
    for (int l = 1; l <= L; ++l) {
        const double lslope = dual.log_derivative_from_log(lv);
        lv = dual.log_value_from_log(lv);
        lK = log_add_exp(lv, lK + lslope);
    }
    return lK;
}

DepthTrace normalized_trace(const Dual& dual, double z, int L_max) {
    check_depth(L_max);
    require_normalizable(dual);
    if (z < 0.0 || z >= 1.0) throw std::invalid_argument("normalized_trace needs z in [0, 1)");
    const double a1 = dual.linear_term();

    DepthTrace trace;
    trace.z = z;
    trace.entries.reserve(static_cast<std::size_t>(L_max) + 1);
    DepthEntry e{0, z, z, z};
    trace.entries.push_back(e);
    for (int l = 1; l <= L_max; ++l) {
        const double prev_v = e.v;
        e.depth = l;
        e.N = e.N * dual.ratio_to_linear(prev_v);
        e.P = (e.N + e.P * l * dual.derivative(prev_v) / a1) / (l + 1);
        e.v = dual.value(prev_v);
        trace.entries.push_back(e);
    }
    return trace;
}

DepthLimit ntk_depth_limit(const Dual& dual, double z, double tol, int max_depth) {
    require_normalizable(dual);
    if (z < 0.0 || z > 1.0) throw std::invalid_argument("depth limit needs z in [0, 1]");
    DepthLimit out;
    if (z >= 1.0) {
        out.value = out.P_at_stop = kInf;
        out.converged = true;
        return out;
    }
    if (z == 0.0) {
        out.converged = true;
        return out;
    }
    const double a1 = dual.linear_term();
    double v = z, N = z, P = z;
    for (int l = 1; l <= max_depth; ++l) {
        const double prevN = N;
        N = N * dual.ratio_to_linear(v);
        P = (N + P * l * dual.derivative(v) / a1) / (l + 1);
        v = dual.value(v);
        if (!std::isfinite(N)) throw NumericalFailure("normalized iterate overflowed");
        out.depth = l;
        out.achieved_tol = std::abs(N - prevN) / N;
        if (out.achieved_tol < tol) {
            out.converged = true;
            break;
        }
    }
    out.value = N;
    out.P_at_stop = P;
    return out;
}

double psi(const Dual& dual, double z) {
    // Same stopping rule as ntk_depth_limit without tracking P_L.
    require_normalizable(dual);
    if (z >= 1.0) return kInf;
    if (z <= 0.0) return 0.0;
    double v = z, N = z;
    for (int l = 1; l <= 100000; ++l) {
        const double r = dual.ratio_to_linear(v);
        N *= r;
        v = dual.value(v);
        if (std::abs(r - 1.0) < 1e-10 * r) break;
    }
    if (!std::isfinite(N)) throw NumericalFailure("normalized iterate overflowed");
    return N;
}

// ------------------------------------------------------------------ pole fit

std::vector<double> default_eps_grid() { return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}; }

PoleFit estimate_pole_order(const std::function<double(double)>& f, double b,
                            std::vector<double> eps_grid) {
    if (!(b > 1.0)) throw std::invalid_argument("pole fit base must exceed 1");
    if (eps_grid.size() < 2) throw std::invalid_argument("pole fit needs at least two eps values");
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
        if (!(eps_grid[i] > 0.0) || b * eps_grid[i] >= 1.0)
            throw std::invalid_argument("eps values must satisfy 0 < b eps < 1");
        if (i > 0 && eps_grid[i] >= eps_grid[i - 1])
            throw std::invalid_argument("eps grid must be decreasing");
    }
    PoleFit fit;
    fit.b = b;
    fit.eps_grid = eps_grid;
    std::vector<double> xs;
    for (double eps : eps_grid) {
        const double z_near = 1.0 - eps;
        const double z_far = 1.0 - b * eps;
        const double f_near = f(z_near);
        const double f_far = f(z_far);
        if (!std::isfinite(f_near) || !std::isfinite(f_far) || f_near <= 0.0 || f_far <= 0.0)
            throw NumericalFailure("pole fit function is not finite and positive near 1");
        // 1 - z is exact for z in [1/2, 1], so the effective base is known exactly.
        const double base = (1.0 - z_far) / (1.0 - z_near);
        fit.raw_orders.push_back(-std::log(f_far / f_near) / std::log(base));
        xs.push_back(1.0 / std::log(1.0 / eps));
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += fit.raw_orders[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (fit.raw_orders[i] - my);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.order_hat = my - slope * mx;
    for (double r : fit.raw_orders) fit.residuals.push_back(std::abs(r - fit.order_hat));
    return fit;
}

// ----------------------------------------------------------- piecewise linear

double piecewise_linear_threshold(double a, double b) {
    if (!(0.0 < a && a < 1.0 && b > 1.0)) throw std::invalid_argument("need 0 < a < 1 < b");
    return (b - 1.0) / (b - a);
}

double piecewise_linear_map(double a, double b, double x) {
    const double c = piecewise_linear_threshold(a, b);
    return x <= c ? a * x : 1.0 - b * (1.0 - x);
}

double piecewise_linear_iterate(double a, double b, double z, int L) {
    check_depth(L);
    double x = z;
    for (int l = 0; l < L; ++l) x = piecewise_linear_map(a, b, x);
    return x;
}

double piecewise_linear_limit(double a, double b, double z) {
    const double c = piecewise_linear_threshold(a, b);
    if (z <= c) return z;
    if (z >= 1.0) return kInf;
    // Track the gap u = 1 - x on the expanding branch, where it grows by exactly b per step.
    double u = 1.0 - z;
    int L0 = 0;
    while (1.0 - u > c) {
        u *= b;
        ++L0;
    }
    return (1.0 - u) * std::pow(a, -L0);
}

double piecewise_linear_theory(double a, double b, double z) {
    const double c = piecewise_linear_threshold(a, b);
    if (z <= c) return z;
    const double alpha = -std::log(a) / std::log(b);
    return c * std::pow((1.0 - c) / (1.0 - z), alpha);
}

// -------------------------------------------------------------------- f_alpha

double f_alpha(double alpha, int d, double x) {
    const double q = (alpha - 1.0) / alpha;
    return std::pow(q, d) * x / std::pow(1.0 - x / alpha, d);
}

double f_alpha_iterate(double alpha, int d, double z, int L, bool normalized) {
    if (!(alpha > 1.0) || d < 1) throw std::invalid_argument("need alpha > 1 and d >= 1");
    check_depth(L);
    double v = z;
    double N = z;
    for (int l = 0; l < L; ++l) {
        N *= std::pow(1.0 - v / alpha, -d);
        v = f_alpha(alpha, d, v);
    }
    return normalized ? N : v;
}

Sandwich f_alpha_sandwich(double alpha, int d, double z, int L) {
    if (!(alpha > 1.0) || d < 1) throw std::invalid_argument("need alpha > 1 and d >= 1");
    check_depth(L);
    const double q = (alpha - 1.0) / alpha;
    double s_fast = 0.0, s_slow = 0.0;
    for (int i = 0; i < L; ++i) {
        s_fast += std::pow(q, d * i);
        s_slow += std::pow(q, i);
    }
    Sandwich s;
    s.lower = z / std::pow(1.0 - s_fast * z / alpha, d);
    s.upper = z / std::pow(1.0 - s_slow * z / alpha, d);
    return s;
}

}  // namespace ntk
