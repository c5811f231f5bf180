#ifndef METAPROP_EFFECT_TRANSFORMS_HPP
#define METAPROP_EFFECT_TRANSFORMS_HPP

#include <cstdint>

namespace metaprop {

// One (k, n) accuracy outcome: k correctly classified out of n instances.
struct ProportionOutcome {
    long long k = 0;
    long long n = 1;

    double proportion() const { return static_cast<double>(k) / static_cast<double>(n); }
    void validate() const;  // throws DataError on 0 <= k <= n, n >= 1 violations
};

// Effect size on the double-arcsine analysis scale.
// theta in [0, pi/2], sampling variance v = 1/(4n + 2).
struct EffectSize {
    double theta = 0.0;
    double v = 0.0;
};

struct BacktransformedEstimate {
    double p_bar = 0.0;
    double lcb = 0.0;
    double ucb = 0.0;
    double n_hat = 0.0;
};

/// Double-arcsine transform of a proportion outcome.
/// theta = [asin(sqrt(k/(n+1))) + asin(sqrt((k+1)/(n+1)))] / 2, v = 1/(4n+2).
/// Finite at k = 0 and k = n; no continuity correction.
EffectSize da_transform(const ProportionOutcome& outcome);

/// Inverse double-arcsine transform with effective sample size n_hat.
/// gamma is a transformed proportion on the doubled scale (gamma = 2*theta).
/// Throws DataError when gamma is inconsistent with n_hat (outside the
/// attainable range, or the radicand is negative beyond -1e-12).
double da_inverse(double gamma, double n_hat);

/// Attainable range of gamma = 2*theta for effective sample size n_hat.
double da_gamma_min(double n_hat);
double da_gamma_max(double n_hat);

/// Backtransformed point estimate with t-based confidence bounds.
/// mu and var_mu live on the analysis scale; h is the study count (df = h-1).
/// LCB is forced to 0 when p_bar*n_hat < 2, UCB forced to 1 when
/// (1-p_bar)*n_hat < 2; a bound whose argument leaves the attainable range
/// of the transform is clamped to the corresponding scale limit.
BacktransformedEstimate backtransform_ci(double mu, double var_mu, int h,
                                         double alpha, double n_hat);

}  // namespace metaprop

#endif
