#include "dfrelay/specfun.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfr {

void SeriesTruncation::validate() const {
    if (max_terms < 1) throw std::domain_error("max_terms must be >= 1");
    if (!(rel_tol > 0.0)) throw std::domain_error("rel_tol must be > 0");
}

double q_function(double x) {
    if (!std::isfinite(x)) throw std::domain_error("q_function: non-finite argument");
    return 0.5 * std::erfc(x / std::sqrt(2.0));
}

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

double log_binomial(int n, int k) {
    if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

namespace {

void check_order(int v, double y) {
    if (v <= 0) throw std::domain_error("incomplete gamma: order must be a positive integer");
    if (!(y >= 0.0) || !std::isfinite(y)) throw std::domain_error("incomplete gamma: y must be finite and >= 0");
}

// Sum_{k<v} y^k/k! e^{-y}, accumulated from the largest terms downward.
double q_finite_sum(int v, double y) {
    if (y == 0.0) return 1.0;
    const double ly = std::log(y);
    double s = 0.0;
    for (int k = v - 1; k >= 0; --k) s += std::exp(k * ly - y - log_factorial(k));
    return s;
}

// e^{-y} y^v / v! * sum_j y^j / ((v+1)...(v+j))
double p_series(int v, double y) {
    if (y == 0.0) return 0.0;
    double term = 1.0, sum = 1.0;
    for (int j = 1; j < 100000; ++j) {
        term *= y / (v + j);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return std::exp(v * std::log(y) - y - log_factorial(v)) * sum;
}

}  // namespace

double gamma_q_int(int v, double y) {
    check_order(v, y);
    if (y < v) return 1.0 - p_series(v, y);
    return q_finite_sum(v, y);
}

double gamma_p_int(int v, double y) {
    check_order(v, y);
    if (y < v) return p_series(v, y);
    return 1.0 - q_finite_sum(v, y);
}

double incomplete_gamma_upper(int v, double y) {
    check_order(v, y);
    return std::exp(log_factorial(v - 1)) * q_finite_sum(v, y);
}

double incomplete_gamma_lower(int v, double y) {
    return std::exp(log_factorial(v - 1)) * gamma_p_int(v, y);
}

double laguerre(int n, double x) {
    if (n < 0) throw std::domain_error("laguerre: negative degree");
    if (!std::isfinite(x)) throw std::domain_error("laguerre: non-finite argument");
    if (n == 0) return 1.0;
    double lm1 = 1.0, l = 1.0 - x;
    for (int k = 1; k < n; ++k) {
        const double next = ((2.0 * k + 1.0 - x) * l - k * lm1) / (k + 1.0);
        lm1 = l;
        l = next;
    }
    return l;
}

double laguerre_generalized(int alpha, int n, double x) {
    if (n < 0 || alpha < 0) throw std::domain_error("laguerre_generalized: negative index");
    if (!std::isfinite(x)) throw std::domain_error("laguerre_generalized: non-finite argument");
    // sum_i (-1)^i C(n+alpha, n-i) x^i / i!
    double s = 0.0;
    double xp = 1.0;
    for (int i = 0; i <= n; ++i) {
        const double c = std::exp(log_binomial(n + alpha, n - i) - log_factorial(i));
        s += ((i % 2) ? -c : c) * xp;
        xp *= x;
    }
    return s;
}

double laguerre_generalized_recurrence(int alpha, int n, double x) {
    if (n < 0 || alpha < 0) throw std::domain_error("laguerre_generalized: negative index");
    if (n == 0) return 1.0;
    double lm1 = 1.0, l = 1.0 + alpha - x;
    for (int k = 1; k < n; ++k) {
        const double next = ((2.0 * k + 1.0 + alpha - x) * l - (k + alpha) * lm1) / (k + 1.0);
        lm1 = l;
        l = next;
    }
    return l;
}

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureTolerance& tol) {
    using boost::math::quadrature::gauss_kronrod;
    QuadratureResult r;
    double l1 = 0.0;
    try {
        r.value = gauss_kronrod<double, 31>::integrate(f, a, b, tol.max_depth, tol.rel_tol, &r.error, &l1);
    } catch (const std::exception&) {
        r.ok = false;
        return r;
    }
    r.ok = std::isfinite(r.value) && (r.error <= std::max(tol.abs_tol, tol.rel_tol * std::fabs(r.value)) * 10.0 ||
                                      r.error <= tol.abs_tol * 10.0);
    return r;
}

QuadratureResult integrate_half_line(const std::function<double(double)>& f, const QuadratureTolerance& tol) {
    auto mapped = [&f](double u) {
        if (u >= 1.0) return 0.0;
        const double w = 1.0 - u;
        const double v = f(u / w);
        return v == 0.0 ? 0.0 : v / (w * w);
    };
    return integrate(mapped, 0.0, 1.0, tol);
}

}  // namespace dfr
