#include "metaprop/multilevel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "metaprop/errors.hpp"
#include "metaprop/special_functions.hpp"

namespace metaprop {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct GlsSolve {
    Eigen::VectorXd beta;
    Eigen::MatrixXd cov_beta;   // (X'WX)^-1
    double log_det_m = 0.0;
    double log_det_xtwx = 0.0;
    double quad = 0.0;          // r' W r
};

GlsSolve gls_solve(const BlockCovariance& cov, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& y) {
    const int p = static_cast<int>(X.cols());
    Eigen::MatrixXd rhs(X.rows(), p + 1);
    rhs.leftCols(p) = X;
    rhs.col(p) = y;
    const WeightSolve ws = block_weight_solve(cov, rhs);
    const Eigen::MatrixXd WX = ws.solution.leftCols(p);
    const Eigen::VectorXd Wy = ws.solution.col(p);

    Eigen::MatrixXd xtwx = X.transpose() * WX;
    xtwx = 0.5 * (xtwx + xtwx.transpose()).eval();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
        throw ConvergenceError("X'WX is not positive definite");

    GlsSolve out;
    out.beta = ldlt.solve(X.transpose() * Wy);
    out.cov_beta = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    out.log_det_m = ws.log_det;
    out.log_det_xtwx = ldlt.vectorD().array().log().sum();
    const Eigen::VectorXd r = y - X * out.beta;
    const Eigen::VectorXd Wr = Wy - WX * out.beta;
    out.quad = r.dot(Wr);
    return out;
}

struct NelderMeadResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    long evals = 0;
    bool converged = false;
};

// Nelder-Mead with a per-coordinate lower bound (projection). Convergence
// when the relative objective spread and the simplex diameter fall below
// the configured thresholds.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> start, double step, double lower,
                             int max_evals, double rel_obj_tol, double simplex_tol) {
    const std::size_t n = start.size();
    long evals = 0;
    auto clamp = [&](std::vector<double>& x) {
        for (double& xi : x) xi = std::max(xi, lower);
    };
    auto eval = [&](std::vector<double> x) {
        clamp(x);
        ++evals;
        return f(x);
    };

    std::vector<std::vector<double>> verts(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) verts[i + 1][i] += step;
    for (auto& v : verts) clamp(v);
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(verts[i]);

    NelderMeadResult result;
    while (evals < max_evals) {
        // order vertices best..worst
        std::vector<std::size_t> order(n + 1);
        for (std::size_t i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order[0], worst = order[n], second = order[n - 1];

        double diameter = 0.0;
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t d = 0; d < n; ++d)
                diameter = std::max(diameter, std::fabs(verts[i][d] - verts[best][d]));
        const double spread = std::fabs(fv[worst] - fv[best]);
        if (spread <= rel_obj_tol * (1.0 + std::fabs(fv[best])) && diameter <= simplex_tol) {
            result.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t d = 0; d < n; ++d) centroid[d] += verts[i][d];
        }
        for (double& c : centroid) c /= static_cast<double>(n);

        auto blend = [&](double coef) {
            std::vector<double> x(n);
            for (std::size_t d = 0; d < n; ++d)
                x[d] = centroid[d] + coef * (centroid[d] - verts[worst][d]);
            return x;
        };

        std::vector<double> xr = blend(1.0);
        clamp(xr);
        const double fr = eval(xr);
        if (fr < fv[best]) {
            std::vector<double> xe = blend(2.0);
            clamp(xe);
            const double fe = eval(xe);
            if (fe < fr) {
                verts[worst] = xe;
                fv[worst] = fe;
            } else {
                verts[worst] = xr;
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            verts[worst] = xr;
            fv[worst] = fr;
        } else {
            const bool outside = fr < fv[worst];
            std::vector<double> xc = blend(outside ? 0.5 : -0.5);
            clamp(xc);
            const double fc = eval(xc);
            if (fc < (outside ? fr : fv[worst])) {
                verts[worst] = xc;
                fv[worst] = fc;
            } else {
                // shrink toward the best vertex
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t d = 0; d < n; ++d)
                        verts[i][d] = verts[best][d] + 0.5 * (verts[i][d] - verts[best][d]);
                    fv[i] = eval(verts[i]);
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    result.x = verts[best];
    result.f = fv[best];
    result.evals = evals;
    return result;
}

// method-of-moments style start for the total heterogeneity
double moment_start(const Dataset& dataset, const FeatureMatrix& X) {
    const CochranQ q = cochran_q(dataset, X);
    const std::vector<double> v = dataset.sampling_variances();
    double sw = 0.0, sw2 = 0.0;
    for (double vi : v) {
        sw += 1.0 / vi;
        sw2 += 1.0 / (vi * vi);
    }
    const double c = sw - sw2 / sw;
    double tau2 = c > 0.0 ? (q.q - q.df) / c : 0.0;
    if (!std::isfinite(tau2)) tau2 = 0.0;
    return std::min(std::max(tau2, 1e-8), 10.0);
}

struct VarianceFit {
    VarianceComponents components;
    bool xi_at_boundary = false;
    bool zeta_at_boundary = false;
    bool zeta_fixed = false;
    long evals = 0;
};

VarianceFit optimize_components(const Dataset& dataset, const FeatureMatrix& X,
                                bool restricted, const FitOptions& options) {
    dataset.validate();
    const int m = dataset.trial_count();
    const int p = X.cols();
    if (X.rows() != m) throw DataError("design matrix rows do not match trial count");
    if (p >= m) throw DataError("design has as many columns as trials");
    const auto qr = X.values.colPivHouseholderQr();
    if (qr.rank() < p) throw RankError("design matrix is rank deficient");

    const Eigen::VectorXd y =
        Eigen::Map<const Eigen::VectorXd>(dataset.effects().data(), m).eval();

    VarianceFit fit;
    const std::vector<int> sizes = dataset.study_sizes();
    const bool all_singleton =
        std::all_of(sizes.begin(), sizes.end(), [](int s) { return s == 1; });
    std::optional<double> fixed_zeta = options.fix_sigma2_zeta;
    if (!fixed_zeta && all_singleton) fixed_zeta = 0.0;  // unidentifiable
    fit.zeta_fixed = fixed_zeta.has_value();

    const double floor_log = std::log(options.floor);
    auto objective = [&](const std::vector<double>& u) {
        VarianceComponents comps;
        comps.sigma2_xi = std::exp(u[0]);
        comps.sigma2_zeta = fixed_zeta ? *fixed_zeta : std::exp(u[1]);
        try {
            const GlsSolve g = gls_solve(marginal_covariance(comps, dataset), X.values, y);
            const double f = restricted ? g.log_det_m + g.log_det_xtwx + g.quad
                                        : g.log_det_m + g.quad;
            return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    const double tau2 = moment_start(dataset, X);
    std::vector<std::vector<double>> starts;
    if (fixed_zeta) {
        starts = {{std::log(tau2)}, {std::log(tau2 * 0.01 + options.floor)},
                  {std::log(std::min(tau2 * 100.0, 10.0))}};
    } else {
        starts = {{std::log(0.5 * tau2), std::log(0.5 * tau2)},
                  {std::log(0.9 * tau2), std::log(0.1 * tau2 + options.floor)},
                  {std::log(0.1 * tau2 + options.floor), std::log(0.9 * tau2)}};
    }

    NelderMeadResult best;
    bool any_converged = false;
    for (const auto& start : starts) {
        NelderMeadResult r = nelder_mead(objective, start, 1.0, floor_log,
                                         options.max_evals, options.rel_obj_tol,
                                         options.simplex_tol);
        fit.evals += r.evals;
        if (r.converged) any_converged = true;
        if (r.converged && r.f < best.f) best = r;
    }
    if (!any_converged)
        throw ConvergenceError("REML/ML optimization did not converge within the evaluation budget");

    const double boundary_tol = floor_log + 1e-6;
    fit.components.sigma2_xi = std::exp(best.x[0]);
    if (best.x[0] <= boundary_tol) {
        fit.components.sigma2_xi = 0.0;
        fit.xi_at_boundary = true;
    }
    if (fixed_zeta) {
        fit.components.sigma2_zeta = *fixed_zeta;
    } else {
        fit.components.sigma2_zeta = std::exp(best.x[1]);
        if (best.x[1] <= boundary_tol) {
            fit.components.sigma2_zeta = 0.0;
            fit.zeta_at_boundary = true;
        }
    }
    return fit;
}

}  // namespace

Eigen::MatrixXd CovarianceBlock::dense() const {
    const int n = size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, sigma2_xi);
    for (int i = 0; i < n; ++i) m(i, i) += sigma2_zeta + sampling_var[i];
    return m;
}

int BlockCovariance::total_size() const {
    int n = 0;
    for (const CovarianceBlock& b : blocks) n += b.size();
    return n;
}

Eigen::MatrixXd BlockCovariance::dense() const {
    const int n = total_size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    int offset = 0;
    for (const CovarianceBlock& b : blocks) {
        m.block(offset, offset, b.size(), b.size()) = b.dense();
        offset += b.size();
    }
    return m;
}

BlockCovariance marginal_covariance(const VarianceComponents& components,
                                    const Dataset& dataset) {
    if (!(components.sigma2_xi >= 0.0) || !(components.sigma2_zeta >= 0.0) ||
        !std::isfinite(components.sigma2_xi) || !std::isfinite(components.sigma2_zeta))
        throw DataError("variance components must be non-negative and finite");
    BlockCovariance cov;
    cov.blocks.reserve(dataset.studies.size());
    for (const Study& s : dataset.studies) {
        CovarianceBlock block;
        block.sigma2_xi = components.sigma2_xi;
        block.sigma2_zeta = components.sigma2_zeta;
        block.sampling_var.reserve(s.trials.size());
        for (const Trial& t : s.trials) block.sampling_var.push_back(t.effect.v);
        cov.blocks.push_back(std::move(block));
    }
    return cov;
}

WeightSolve block_weight_solve(const BlockCovariance& cov, const Eigen::MatrixXd& rhs) {
    if (rhs.rows() != cov.total_size())
        throw DataError("block_weight_solve: rhs rows do not match covariance size");
    WeightSolve out;
    out.solution.resize(rhs.rows(), rhs.cols());
    int offset = 0;
    for (const CovarianceBlock& block : cov.blocks) {
        const int n = block.size();
        double inv_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = block.sigma2_zeta + block.sampling_var[i];
            if (!(d > 0.0)) throw DataError("singular covariance block: non-positive diagonal");
            inv_sum += 1.0 / d;
            out.log_det += std::log(d);
        }
        const double denom = 1.0 + block.sigma2_xi * inv_sum;
        out.log_det += std::log(denom);
        for (int c = 0; c < rhs.cols(); ++c) {
            double weighted_sum = 0.0;
            for (int i = 0; i < n; ++i)
                weighted_sum += rhs(offset + i, c) /
                                (block.sigma2_zeta + block.sampling_var[i]);
            const double correction = block.sigma2_xi * weighted_sum / denom;
            for (int i = 0; i < n; ++i) {
                const double d = block.sigma2_zeta + block.sampling_var[i];
                out.solution(offset + i, c) = (rhs(offset + i, c) - correction) / d;
            }
        }
        offset += n;
    }
    return out;
}

double pooled_sampling_variance(const Dataset& dataset) {
    const std::vector<double> v = dataset.sampling_variances();
    const int m = static_cast<int>(v.size());
    if (m < 2) throw DataError("pooled_sampling_variance needs m >= 2 trials");
    double sw = 0.0, sw2 = 0.0;
    for (double vi : v) {
        sw += 1.0 / vi;
        sw2 += 1.0 / (vi * vi);
    }
    return (m - 1) * sw / (sw * sw - sw2);
}

std::optional<I2Decomposition> i_squared(const VarianceComponents& components,
                                         double sigma2_eps) {
    const double total = components.sigma2_xi + components.sigma2_zeta + sigma2_eps;
    if (!(total > 0.0)) return std::nullopt;
    I2Decomposition i2;
    i2.xi = components.sigma2_xi / total;
    i2.zeta = components.sigma2_zeta / total;
    i2.eps = sigma2_eps / total;
    return i2;
}

CochranQ cochran_q(const Dataset& dataset, const FeatureMatrix& X) {
    const int m = dataset.trial_count();
    const int p = X.cols();
    if (X.rows() != m) throw DataError("design matrix rows do not match trial count");
    if (m - p <= 0) throw DataError("Cochran's Q needs df = m - p > 0");

    const Eigen::VectorXd y =
        Eigen::Map<const Eigen::VectorXd>(dataset.effects().data(), m).eval();
    const std::vector<double> v = dataset.sampling_variances();
    Eigen::VectorXd w(m);
    for (int i = 0; i < m; ++i) w(i) = 1.0 / v[i];

    const Eigen::MatrixXd Xw = w.asDiagonal() * X.values;
    Eigen::MatrixXd xtwx = X.values.transpose() * Xw;
    xtwx = 0.5 * (xtwx + xtwx.transpose()).eval();
    const Eigen::VectorXd beta = xtwx.ldlt().solve(X.values.transpose() * (w.asDiagonal() * y));
    const Eigen::VectorXd r = y - X.values * beta;

    CochranQ out;
    out.q = (w.array() * r.array().square()).sum();
    out.df = m - p;
    out.p_value = chisq_sf(out.q, out.df);
    return out;
}

FitResult reml_fit(const Dataset& dataset, const FeatureMatrix& X,
                   const FitOptions& options) {
    const VarianceFit vf = optimize_components(dataset, X, /*restricted=*/true, options);

    const int m = dataset.trial_count();
    const int p = X.cols();
    const Eigen::VectorXd y =
        Eigen::Map<const Eigen::VectorXd>(dataset.effects().data(), m).eval();
    const GlsSolve g = gls_solve(marginal_covariance(vf.components, dataset), X.values, y);

    FitResult fit;
    fit.components = vf.components;
    fit.xi_at_boundary = vf.xi_at_boundary;
    fit.zeta_at_boundary = vf.zeta_at_boundary;
    fit.zeta_fixed = vf.zeta_fixed;
    fit.evals = vf.evals;
    fit.beta = g.beta;
    fit.cov_beta = g.cov_beta;
    fit.column_names = X.column_names;
    fit.fitted = X.values * g.beta;
    fit.mu = g.beta(0);
    fit.var_mu = g.cov_beta(0, 0);
    fit.n_hat = 1.0 / fit.var_mu;
    fit.reml_loglik = -0.5 * (g.log_det_m + g.log_det_xtwx + g.quad +
                              (m - p) * kLog2Pi);

    const CochranQ q = cochran_q(dataset, X);
    fit.q_stat = q.q;
    fit.q_df = q.df;
    fit.q_pvalue = q.p_value;

    fit.sigma2_eps = pooled_sampling_variance(dataset);
    if (const auto i2 = i_squared(fit.components, fit.sigma2_eps)) {
        fit.i2_xi = i2->xi;
        fit.i2_zeta = i2->zeta;
        fit.i2_eps = i2->eps;
    }
    fit.n_studies = dataset.study_count();
    fit.n_trials = m;
    fit.study_effects = study_shrinkage(fit, dataset, X);
    return fit;
}

MlFit ml_fit(const Dataset& dataset, const FeatureMatrix& X, const FitOptions& options) {
    const VarianceFit vf = optimize_components(dataset, X, /*restricted=*/false, options);
    const int m = dataset.trial_count();
    const Eigen::VectorXd y =
        Eigen::Map<const Eigen::VectorXd>(dataset.effects().data(), m).eval();
    const GlsSolve g = gls_solve(marginal_covariance(vf.components, dataset), X.values, y);
    MlFit fit;
    fit.components = vf.components;
    fit.loglik = -0.5 * (g.log_det_m + g.quad + m * kLog2Pi);
    return fit;
}

std::vector<StudyEffect> study_shrinkage(const FitResult& fit, const Dataset& dataset,
                                         const FeatureMatrix& X) {
    const double s2xi = fit.components.sigma2_xi;
    const double s2zeta = fit.components.sigma2_zeta;
    std::vector<StudyEffect> effects;
    effects.reserve(dataset.studies.size());

    int row = 0;
    for (const Study& s : dataset.studies) {
        const int mj = static_cast<int>(s.trials.size());
        double inv_sum = 0.0;
        double resid_weighted = 0.0;
        Eigen::VectorXd x_weighted = Eigen::VectorXd::Zero(X.cols());
        Eigen::VectorXd x_mean = Eigen::VectorXd::Zero(X.cols());
        for (int i = 0; i < mj; ++i) {
            const double d = s2zeta + s.trials[i].effect.v;
            const double resid = s.trials[i].effect.theta - fit.fitted(row + i);
            inv_sum += 1.0 / d;
            resid_weighted += resid / d;
            x_weighted += X.values.row(row + i).transpose() / d;
            x_mean += X.values.row(row + i).transpose();
        }
        x_mean /= static_cast<double>(mj);
        const double denom = 1.0 + s2xi * inv_sum;

        StudyEffect e;
        e.study_id = s.id;
        e.trials = mj;
        // 1' M_j^-1 z = (sum z_i / D_i) / (1 + s2xi * sum 1/D_i)
        e.kappa = x_mean.dot(fit.beta) + s2xi * resid_weighted / denom;
        const double cond_var = s2xi - s2xi * s2xi * inv_sum / denom;
        const Eigen::VectorXd a = x_mean - s2xi / denom * x_weighted;
        e.var_kappa = cond_var + a.dot(fit.cov_beta * a);
        effects.push_back(std::move(e));
        row += mj;
    }
    return effects;
}

}  // namespace metaprop
