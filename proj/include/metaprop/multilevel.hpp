#ifndef METAPROP_MULTILEVEL_HPP
#define METAPROP_MULTILEVEL_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "metaprop/dataset.hpp"
#include "metaprop/features.hpp"

namespace metaprop {

struct VarianceComponents {
    double sigma2_xi = 0.0;    // between-study variance
    double sigma2_zeta = 0.0;  // within-study variance, constant across studies
};

// One study's block of the marginal covariance:
//   M_j = J * sigma2_xi + I * sigma2_zeta + diag(v_ij)
struct CovarianceBlock {
    double sigma2_xi = 0.0;
    double sigma2_zeta = 0.0;
    std::vector<double> sampling_var;

    int size() const { return static_cast<int>(sampling_var.size()); }
    Eigen::MatrixXd dense() const;
};

struct BlockCovariance {
    std::vector<CovarianceBlock> blocks;

    int total_size() const;
    Eigen::MatrixXd dense() const;
};

BlockCovariance marginal_covariance(const VarianceComponents& components,
                                    const Dataset& dataset);

struct WeightSolve {
    Eigen::MatrixXd solution;  // W * rhs, W = M^-1
    double log_det = 0.0;      // log |M|
};

/// Applies W = M^-1 to columns and accumulates log|M| without assembling M.
/// Per block, with D = I*sigma2_zeta + diag(v):
///   (D + sigma2_xi 11')^-1 = D^-1 - sigma2_xi D^-1 11' D^-1 / (1 + sigma2_xi 1'D^-1 1)
///   log|M_j| = sum log D_ii + log(1 + sigma2_xi 1'D^-1 1)
/// Throws DataError on a singular block (any D_ii <= 0).
WeightSolve block_weight_solve(const BlockCovariance& cov, const Eigen::MatrixXd& rhs);

/// Pooled estimate of the m sampling variances:
///   sigma2_eps = (m-1) sum(1/v) / [ (sum 1/v)^2 - sum 1/v^2 ]
double pooled_sampling_variance(const Dataset& dataset);

struct I2Decomposition {
    double xi = 0.0;
    double zeta = 0.0;
    double eps = 0.0;
};

/// Fractions of total variance per level; empty when the total is zero.
std::optional<I2Decomposition> i_squared(const VarianceComponents& components,
                                         double sigma2_eps);

struct CochranQ {
    double q = 0.0;
    int df = 0;
    double p_value = 1.0;
};

/// Heterogeneity test with sampling-variance-only weights and a
/// fixed-effects weighted least squares fit; df = m - p.
CochranQ cochran_q(const Dataset& dataset, const FeatureMatrix& X);

struct StudyEffect {
    std::string study_id;
    int trials = 0;
    double kappa = 0.0;      // shrinkage estimate of the study effect
    double var_kappa = 0.0;
};

struct FitOptions {
    // pin the within-study variance (two-level reduction); automatic when
    // every study has a single trial, where it is unidentifiable
    std::optional<double> fix_sigma2_zeta;
    double floor = 1e-12;         // variance floor; optimum here reports 0
    int max_evals = 4000;         // per restart
    double rel_obj_tol = 1e-10;
    double simplex_tol = 1e-8;
};

struct FitResult {
    VarianceComponents components;
    bool xi_at_boundary = false;
    bool zeta_at_boundary = false;
    bool zeta_fixed = false;

    Eigen::VectorXd beta;       // GLS coefficients, intercept first
    Eigen::MatrixXd cov_beta;   // (X' W X)^-1
    std::vector<std::string> column_names;
    Eigen::VectorXd fitted;     // X beta, trial order

    double mu = 0.0;      // intercept on the analysis scale
    double var_mu = 0.0;
    double n_hat = 0.0;   // 1 / var_mu

    double q_stat = 0.0;
    int q_df = 0;
    double q_pvalue = 1.0;

    double i2_xi = 0.0;
    double i2_zeta = 0.0;
    double i2_eps = 0.0;
    double sigma2_eps = 0.0;

    double reml_loglik = 0.0;
    std::vector<StudyEffect> study_effects;

    int n_studies = 0;
    int n_trials = 0;
    long evals = 0;
};

/// Three-level random-effects fit by restricted maximum likelihood:
/// minimizes log|M| + log|X'WX| + r'Wr over (sigma2_xi, sigma2_zeta) >= 0
/// with Nelder-Mead on the log scale (3 dispersed restarts incl. a
/// method-of-moments start), beta by GLS. Throws ConvergenceError if no
/// restart converges, RankError on a rank-deficient design.
FitResult reml_fit(const Dataset& dataset, const FeatureMatrix& X,
                   const FitOptions& options = {});

struct MlFit {
    VarianceComponents components;
    double loglik = 0.0;
};

/// Full (unrestricted) maximum-likelihood refit of the variance components;
/// its log-likelihood is comparable across fixed-effect structures.
MlFit ml_fit(const Dataset& dataset, const FeatureMatrix& X,
             const FitOptions& options = {});

/// Per-study conditional-mean (shrinkage) estimates
///   kappa_j = x_j' beta + sigma2_xi 1' M_j^-1 (y_j - X_j beta)
/// with variance sigma2_xi - sigma2_xi^2 1'M_j^-1 1 plus the fixed-effect
/// uncertainty propagated through the same linear map.
std::vector<StudyEffect> study_shrinkage(const FitResult& fit, const Dataset& dataset,
                                         const FeatureMatrix& X);

}  // namespace metaprop

#endif
