#include "metaprop/effect_transforms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "metaprop/errors.hpp"
#include "metaprop/special_functions.hpp"

namespace metaprop {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kRadicandTol = 1e-12;
}  // namespace

void ProportionOutcome::validate() const {
    if (n < 1) {
        std::ostringstream msg;
        msg << "invalid outcome: n = " << n << " (need n >= 1)";
        throw DataError(msg.str());
    }
    if (k < 0 || k > n) {
        std::ostringstream msg;
        msg << "invalid outcome: k = " << k << " outside [0, " << n << "]";
        throw DataError(msg.str());
    }
}

EffectSize da_transform(const ProportionOutcome& outcome) {
    outcome.validate();
    const double k = static_cast<double>(outcome.k);
    const double n = static_cast<double>(outcome.n);
    EffectSize e;
    e.theta = 0.5 * (std::asin(std::sqrt(k / (n + 1.0))) +
                     std::asin(std::sqrt((k + 1.0) / (n + 1.0))));
    e.v = 1.0 / (4.0 * n + 2.0);
    return e;
}

double da_gamma_min(double n_hat) {
    if (std::isinf(n_hat)) return 0.0;
    return std::asin(std::sqrt(1.0 / (n_hat + 1.0)));
}

double da_gamma_max(double n_hat) {
    if (std::isinf(n_hat)) return kPi;
    return std::asin(std::sqrt(n_hat / (n_hat + 1.0))) + 0.5 * kPi;
}

double da_inverse(double gamma, double n_hat) {
    if (!std::isfinite(gamma) || std::isnan(n_hat) || !(n_hat > 0.0))
        throw DataError("da_inverse: non-finite gamma or non-positive n_hat");

    const double gmin = da_gamma_min(n_hat);
    const double gmax = da_gamma_max(n_hat);
    const double slack = 1e-9 * (1.0 + std::fabs(gamma));
    if (gamma < gmin - slack || gamma > gmax + slack) {
        std::ostringstream msg;
        msg << "da_inverse: gamma = " << gamma << " outside the attainable range ["
            << gmin << ", " << gmax << "] for n_hat = " << n_hat
            << " (inconsistent gamma/n_hat)";
        throw DataError(msg.str());
    }
    gamma = std::min(std::max(gamma, gmin), gmax);

    const double s = std::sin(gamma);
    const double bracket = s + (s - 1.0 / s) / n_hat;
    double radicand = 1.0 - bracket * bracket;
    if (radicand < 0.0) {
        if (radicand < -kRadicandTol) {
            std::ostringstream msg;
            msg << "da_inverse: radicand " << radicand
                << " negative beyond tolerance (inconsistent gamma/n_hat)";
            throw DataError(msg.str());
        }
        radicand = 0.0;
    }
    const double sgn = std::cos(gamma) >= 0.0 ? 1.0 : -1.0;
    double p = 0.5 * (1.0 - sgn * std::sqrt(radicand));
    if (p < 0.0 && p > -kRadicandTol) p = 0.0;
    if (p > 1.0 && p < 1.0 + kRadicandTol) p = 1.0;
    return p;
}

BacktransformedEstimate backtransform_ci(double mu, double var_mu, int h,
                                         double alpha, double n_hat) {
    if (h < 2) throw DataError("backtransform_ci: need h >= 2 studies");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw DataError("backtransform_ci: alpha must lie in (0, 1)");
    if (!std::isfinite(mu) || !(var_mu >= 0.0))
        throw DataError("backtransform_ci: invalid mu or var_mu");

    BacktransformedEstimate est;
    est.n_hat = n_hat;
    est.p_bar = da_inverse(2.0 * mu, n_hat);

    if (var_mu == 0.0) {
        est.lcb = est.ucb = est.p_bar;
        return est;
    }

    const double half = t_quantile(1.0 - 0.5 * alpha, static_cast<double>(h - 1)) *
                        std::sqrt(var_mu);

    if (est.p_bar * n_hat < 2.0) {
        est.lcb = 0.0;
    } else {
        try {
            est.lcb = da_inverse(2.0 * (mu - half), n_hat);
        } catch (const DataError&) {
            est.lcb = 0.0;  // bound fell past the attainable range
        }
    }
    if ((1.0 - est.p_bar) * n_hat < 2.0) {
        est.ucb = 1.0;
    } else {
        try {
            est.ucb = da_inverse(2.0 * (mu + half), n_hat);
        } catch (const DataError&) {
            est.ucb = 1.0;
        }
    }
    est.lcb = std::min(est.lcb, est.p_bar);
    est.ucb = std::max(est.ucb, est.p_bar);
    return est;
}

}  // namespace metaprop
