#pragma once

#include <functional>

namespace dfr {

// Controls how an infinite series is cut off.
struct SeriesTruncation {
    int max_terms = 200;
    double rel_tol = 1e-10;

    void validate() const;
};

enum class StopReason { tolerance, max_terms };

struct SeriesResult {
    double value = 0.0;
    int terms = 0;
    StopReason stop = StopReason::tolerance;

    bool converged() const { return stop == StopReason::tolerance; }
};

// Gaussian tail probability.
double q_function(double x);

// Integer-order incomplete gamma functions, Gamma(v, y) and gamma(v, y).
double incomplete_gamma_upper(int v, double y);
double incomplete_gamma_lower(int v, double y);

// Regularized forms Q(v, y) = Gamma(v, y)/(v-1)! and P(v, y) = 1 - Q(v, y),
// each evaluated without cancellation.
double gamma_q_int(int v, double y);
double gamma_p_int(int v, double y);

// Laguerre polynomial L_n(x) by the three-term recurrence.
double laguerre(int n, double x);

// Generalized Laguerre L_n^alpha(x) by its finite binomial series.
double laguerre_generalized(int alpha, int n, double x);

// Same polynomial by the three-term recurrence; kept as an independent path.
double laguerre_generalized_recurrence(int alpha, int n, double x);

double log_factorial(int n);
double log_binomial(int n, int k);

struct QuadratureTolerance {
    double abs_tol = 1e-14;
    double rel_tol = 1e-10;
    int max_depth = 18;
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    bool ok = true;
};

// Adaptive Gauss-Kronrod on [a, b]; b may be +infinity.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureTolerance& tol = {});

// Integral over [0, inf) mapped onto [0, 1) by g = u/(1-u).
QuadratureResult integrate_half_line(const std::function<double(double)>& f,
                                     const QuadratureTolerance& tol = {});

}  // namespace dfr
