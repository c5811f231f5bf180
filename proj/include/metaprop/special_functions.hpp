#ifndef METAPROP_SPECIAL_FUNCTIONS_HPP
#define METAPROP_SPECIAL_FUNCTIONS_HPP

namespace metaprop {

/// log Gamma(x) for x > 0, relative error <= 1e-12 on [0.5, 1e6].
double ln_gamma(double x);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Chi-square survival function P(X > q) with df degrees of freedom.
double chisq_sf(double q, int df);

/// Student-t CDF.
double t_cdf(double t, double df);

/// Student-t quantile (inverse CDF), absolute error <= 1e-8.
/// Built so that t_quantile(1 - p, df) == -t_quantile(p, df) exactly.
double t_quantile(double prob, double df);

}  // namespace metaprop

#endif
