#include "metaprop/special_functions.hpp"

#include <cmath>
#include <limits>

#include "metaprop/errors.hpp"

namespace metaprop {

namespace {

constexpr double kEps = 1e-16;
constexpr double kFpMin = 1e-300;
constexpr int kMaxIter = 1000;

// Lanczos, g = 671/128, 14 terms
const double kLanczos[14] = {
    57.1562356658629235,     -59.5979603554754912,
    14.1360979747417471,     -0.491913816097620199,
    0.339946499848118887e-4, 0.465236289270485756e-4,
    -0.983744753048795646e-4, 0.158088703224912494e-3,
    -0.210264441724104883e-3, 0.217439618115212643e-3,
    -0.164318106536763890e-3, 0.844182239838527433e-4,
    -0.261908384015814087e-4, 0.368991826595316234e-5};

// series representation of P(a, x), valid for x < a + 1
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int i = 0; i < kMaxIter; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps)
            return sum * std::exp(-x + a * std::log(x) - ln_gamma(a));
    }
    throw ConvergenceError("incomplete gamma series did not converge");
}

// continued fraction for Q(a, x), valid for x >= a + 1 (modified Lentz)
double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kFpMin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps)
            return h * std::exp(-x + a * std::log(x) - ln_gamma(a));
    }
    throw ConvergenceError("incomplete gamma continued fraction did not converge");
}

// continued fraction for the incomplete beta (modified Lentz)
double beta_cf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) return h;
    }
    throw ConvergenceError("incomplete beta continued fraction did not converge");
}

double t_pdf(double t, double df) {
    const double lognorm = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) -
                           0.5 * std::log(df * 3.14159265358979323846);
    return std::exp(lognorm - 0.5 * (df + 1.0) * std::log1p(t * t / df));
}

}  // namespace

double ln_gamma(double x) {
    if (!(x > 0.0))
        throw DataError("ln_gamma requires x > 0");
    double y = x;
    double tmp = x + 671.0 / 128.0;
    tmp = (x + 0.5) * std::log(tmp) - tmp;
    double ser = 0.999999999999997092;
    for (int j = 0; j < 14; ++j) ser += kLanczos[j] / ++y;
    return tmp + std::log(2.5066282746310005 * ser / x);
}

double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0)
        throw DataError("gamma_p requires a > 0 and x >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0)
        throw DataError("gamma_q requires a > 0 and x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw DataError("incomplete_beta requires a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front = std::exp(ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) +
                                  a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double chisq_sf(double q, int df) {
    if (df < 1) throw DataError("chisq_sf requires df >= 1");
    if (!(q >= 0.0)) throw DataError("chisq_sf requires q >= 0");
    return gamma_q(0.5 * df, 0.5 * q);
}

double t_cdf(double t, double df) {
    if (!(df > 0.0)) throw DataError("t_cdf requires df > 0");
    if (!std::isfinite(t))
        return t > 0 ? 1.0 : 0.0;
    const double x = df / (df + t * t);
    const double half_tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

double t_quantile(double prob, double df) {
    if (!(df > 0.0)) throw DataError("t_quantile requires df > 0");
    if (!(prob > 0.0 && prob < 1.0))
        throw DataError("t_quantile requires 0 < prob < 1");
    if (prob == 0.5) return 0.0;
    if (prob < 0.5) return -t_quantile(1.0 - prob, df);

    // bracket the root of t_cdf(t) = prob on [0, hi]
    double hi = 1.0;
    while (t_cdf(hi, df) < prob && hi < 1e300) hi *= 2.0;
    double lo = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (t_cdf(mid, df) < prob)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-12 * (1.0 + hi)) break;
    }
    double t = 0.5 * (lo + hi);
    // Newton polish
    for (int i = 0; i < 8; ++i) {
        const double f = t_cdf(t, df) - prob;
        const double d = t_pdf(t, df);
        if (d <= 0.0) break;
        const double step = f / d;
        t -= step;
        if (t < lo || t > hi) {
            t = std::min(std::max(t, lo), hi);
            break;
        }
        if (std::fabs(step) < 1e-14 * (1.0 + std::fabs(t))) break;
    }
    return t;
}

}  // namespace metaprop
