#pragma once

// Estimating-equation baselines for block-structured linkage.
//
//   Lahiri-Larsen:  X' Q' (y - Q mu(beta)) = 0
//   Chambers:       X'    (y - Q mu(beta)) = 0
//
// Q is the block averaging operator, applied through group means.

#include "linkglm/block_partition.hpp"
#include "linkglm/estimators.hpp"
#include "linkglm/family.hpp"

#include <cmath>
#include <optional>

namespace linkglm {

/// Block-diagonal averaging operator Q = bdiag(1/n_j * ones(n_j, n_j)).
class ExchangeOperator {
public:
    explicit ExchangeOperator(BlockPartition blocks) : blocks_(std::move(blocks)) {}

    const BlockPartition& blocks() const { return blocks_; }
    Index n() const { return blocks_.n(); }

    /// Q * v (Q is symmetric, so also Q' * v).
    template <class Derived>
    auto apply(const Eigen::MatrixBase<Derived>& v) const
    {
        using Scalar = typename Derived::Scalar;
        Matrix<Scalar> out(v.rows(), v.cols());
        for (const auto& g : blocks_.groups()) {
            Eigen::Matrix<Scalar, 1, Eigen::Dynamic> avg = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(v.cols());
            for (Index i : g) avg += v.row(i);
            avg /= Scalar(static_cast<double>(g.size()));
            for (Index i : g) out.row(i) = avg;
        }
        return out;
    }

    template <class Scalar = double>
    Matrix<Scalar> dense() const
    {
        Matrix<Scalar> q = Matrix<Scalar>::Zero(n(), n());
        for (const auto& g : blocks_.groups())
            for (Index i : g)
                for (Index j : g) q(i, j) = Scalar(1) / Scalar(static_cast<double>(g.size()));
        return q;
    }

private:
    BlockPartition blocks_;
};

template <class Scalar>
struct EstimatingEquationFit {
    Vector<Scalar> beta;
    Matrix<Scalar> covariance;
    bool converged = false;
    int newton_iterations = 0;
    Scalar equation_residual = std::numeric_limits<Scalar>::quiet_NaN();
    // Chambers only: the covariance omits the unspecified positive semidefinite term.
    bool covariance_lower_bound = false;
    // Chambers only: deviance of the fit on the merged data exceeds that of the intercept-only model.
    bool worse_than_intercept_only = false;
};

struct NewtonOptions {
    int max_iter = 100;
    double tol = 1e-10;      // on ||equation||_inf, scaled by 1 + ||X'y||_inf
    int max_backtracks = 40;
};

enum class EquationKind { LahiriLarsen, Chambers };

namespace detail {

template <class Scalar>
Vector<Scalar> means_of(const Family<Scalar>& f, const Vector<Scalar>& eta)
{
    Vector<Scalar> mu(eta.size());
    for (Index i = 0; i < eta.size(); ++i) mu(i) = mean(f, eta(i));
    return mu;
}

template <class Scalar>
bool all_admissible(const Family<Scalar>& f, const Vector<Scalar>& eta)
{
    for (Index i = 0; i < eta.size(); ++i)
        if (!eta_admissible(f, eta(i))) return false;
    return true;
}

template <class Scalar>
Vector<Scalar> equation(EquationKind kind, const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                        const ExchangeOperator& q, const Vector<Scalar>& beta)
{
    const Vector<Scalar> eta = X * beta;
    if (!all_admissible(f, eta)) throw DomainError("estimating equation: inadmissible linear predictor");
    const Vector<Scalar> resid = y - q.apply(means_of(f, eta));
    if (kind == EquationKind::Chambers) return X.transpose() * resid;
    return X.transpose() * q.apply(resid);
}

/// Jacobian of the negated equation: X' Q D X with D = diag(d mu / d eta).
template <class Scalar>
Matrix<Scalar> equation_jacobian(const Family<Scalar>& f, const Matrix<Scalar>& X, const ExchangeOperator& q,
                                 const Vector<Scalar>& beta)
{
    const Vector<Scalar> eta = X * beta;
    Vector<Scalar> dmu(eta.size());
    for (Index i = 0; i < eta.size(); ++i) dmu(i) = mean_derivative(f, eta(i));
    const Matrix<Scalar> dx = X.array().colwise() * dmu.array();
    return q.apply(X).transpose() * dx;
}

} // namespace detail

/// X' Q' (y - Q mu(beta)), evaluated through group means.
template <class Scalar>
Vector<Scalar> ll_equation(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                           const ExchangeOperator& q, const Vector<Scalar>& beta)
{
    return detail::equation(EquationKind::LahiriLarsen, f, X, y, q, beta);
}

/// X' (y - Q mu(beta)).
template <class Scalar>
Vector<Scalar> chambers_equation(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                 const ExchangeOperator& q, const Vector<Scalar>& beta)
{
    return detail::equation(EquationKind::Chambers, f, X, y, q, beta);
}

/// Damped Newton root finding with residual-norm backtracking. Failure to
/// converge is reported through the returned fit, never thrown.
template <class Scalar>
EstimatingEquationFit<Scalar> solve_estimating_equation(EquationKind kind, const Family<Scalar>& f, const Matrix<Scalar>& X,
                                                        const Vector<Scalar>& y, const ExchangeOperator& q,
                                                        const Vector<Scalar>& start, const NewtonOptions& opts = {})
{
    EstimatingEquationFit<Scalar> fit;
    fit.beta = start;
    const Scalar scale = Scalar(1) + (X.transpose() * y).template lpNorm<Eigen::Infinity>();
    auto residual_norm = [&](const Vector<Scalar>& b) -> Scalar {
        try {
            const Vector<Scalar> r = detail::equation(kind, f, X, y, q, b);
            return r.allFinite() ? r.norm() : std::numeric_limits<Scalar>::infinity();
        } catch (const DomainError&) {
            return std::numeric_limits<Scalar>::infinity();
        }
    };
    Scalar rnorm = residual_norm(fit.beta);
    if (!std::isfinite(static_cast<double>(rnorm))) {
        fit.equation_residual = rnorm;
        return fit;
    }
    bool singular = false;
    for (int it = 1; it <= opts.max_iter; ++it) {
        fit.newton_iterations = it;
        const Vector<Scalar> r = detail::equation(kind, f, X, y, q, fit.beta);
        const Matrix<Scalar> jac = detail::equation_jacobian(f, X, q, fit.beta);
        Eigen::FullPivLU<Matrix<Scalar>> lu(jac);
        if (!lu.isInvertible()) {
            // A root with a singular Jacobian is not identified.
            singular = true;
            break;
        }
        if (r.template lpNorm<Eigen::Infinity>() <= Scalar(opts.tol) * scale) {
            fit.converged = true;
            break;
        }
        const Vector<Scalar> step = lu.solve(r);
        Scalar t = Scalar(1);
        bool accepted = false;
        for (int k = 0; k <= opts.max_backtracks; ++k, t /= Scalar(2)) {
            const Vector<Scalar> cand = fit.beta + t * step;
            const Scalar cn = residual_norm(cand);
            if (cn < rnorm || (cn <= rnorm && k == 0)) {
                fit.beta = cand;
                rnorm = cn;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    try {
        fit.equation_residual = detail::equation(kind, f, X, y, q, fit.beta).template lpNorm<Eigen::Infinity>();
        if (!fit.converged && !singular && fit.equation_residual <= Scalar(opts.tol) * scale) fit.converged = true;
    } catch (const DomainError&) {
        fit.equation_residual = std::numeric_limits<Scalar>::infinity();
        fit.converged = false;
    }
    return fit;
}

namespace detail {

template <class Scalar>
Vector<Scalar> baseline_start(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y)
{
    try {
        return fit_glm(f, X, y).beta;
    } catch (const NumericError&) {
        return Vector<Scalar>::Zero(X.cols());
    }
}

template <class Scalar>
bool psd_symmetrize(Matrix<Scalar>& c)
{
    c = (c + c.transpose()).eval() / Scalar(2);
    return c.allFinite();
}

} // namespace detail

/// Lahiri-Larsen estimator with sandwich covariance J^{-1} M J^{-T}, where
/// J = X'QDX and M = X'Q V Q X, V = diag Var(y | eta).
template <class Scalar>
EstimatingEquationFit<Scalar> fit_ll(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                     const BlockPartition& blocks, const NewtonOptions& opts = {},
                                     const std::optional<Vector<Scalar>>& start = std::nullopt)
{
    if (blocks.num_blocks() < 1 || blocks.n() != X.rows()) throw InvalidInput("fit_ll: block partition does not match the data");
    const ExchangeOperator q(blocks);
    auto fit = solve_estimating_equation(EquationKind::LahiriLarsen, f, X, y, q,
                                         start ? *start : detail::baseline_start(f, X, y), opts);
    const Index d = X.cols();
    fit.covariance = Matrix<Scalar>::Constant(d, d, std::numeric_limits<Scalar>::quiet_NaN());
    if (!std::isfinite(static_cast<double>(fit.equation_residual))) return fit;
    const Vector<Scalar> eta = X * fit.beta;
    Vector<Scalar> var(eta.size());
    for (Index i = 0; i < eta.size(); ++i) var(i) = variance(f, eta(i));
    const Matrix<Scalar> qx = q.apply(X);
    const Matrix<Scalar> jac = detail::equation_jacobian(f, X, q, fit.beta);
    const Matrix<Scalar> meat = qx.transpose() * (qx.array().colwise() * var.array()).matrix();
    Eigen::FullPivLU<Matrix<Scalar>> lu(jac);
    if (lu.isInvertible()) {
        const Matrix<Scalar> jinv = lu.inverse();
        fit.covariance = jinv * meat * jinv.transpose();
        detail::psd_symmetrize(fit.covariance);
    }
    return fit;
}

/// Chambers estimator. The covariance is the sandwich with the unspecified
/// positive semidefinite term dropped (flagged as a lower bound). The middle
/// matrix X' Pi V Pi' X uses pi_star when supplied, otherwise its expectation
/// under uniform within-block permutations, X' diag(Q v) X.
template <class Scalar>
EstimatingEquationFit<Scalar> fit_chambers(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                           const BlockPartition& blocks, const NewtonOptions& opts = {},
                                           const std::optional<IndexMap>& pi_star = std::nullopt,
                                           const std::optional<Vector<Scalar>>& start = std::nullopt)
{
    if (blocks.num_blocks() < 1 || blocks.n() != X.rows()) throw InvalidInput("fit_chambers: block partition does not match the data");
    const ExchangeOperator q(blocks);
    auto fit = solve_estimating_equation(EquationKind::Chambers, f, X, y, q,
                                         start ? *start : detail::baseline_start(f, X, y), opts);
    fit.covariance_lower_bound = true;
    const Index d = X.cols();
    fit.covariance = Matrix<Scalar>::Constant(d, d, std::numeric_limits<Scalar>::quiet_NaN());
    if (!std::isfinite(static_cast<double>(fit.equation_residual))) {
        fit.worse_than_intercept_only = true;
        return fit;
    }
    const Vector<Scalar> eta = X * fit.beta;
    Vector<Scalar> var(eta.size());
    for (Index i = 0; i < eta.size(); ++i) var(i) = variance(f, eta(i));
    Matrix<Scalar> meat = Matrix<Scalar>::Zero(d, d);
    if (pi_star) {
        for (Index i = 0; i < X.rows(); ++i) {
            const auto xr = X.row((*pi_star)[static_cast<std::size_t>(i)]);
            meat.noalias() += var(i) * xr.transpose() * xr;
        }
    } else {
        const Vector<Scalar> vbar = q.apply(var);
        meat = X.transpose() * (X.array().colwise() * vbar.array()).matrix();
    }
    const Matrix<Scalar> jac = detail::equation_jacobian(f, X, q, fit.beta);
    Eigen::FullPivLU<Matrix<Scalar>> lu(jac);
    if (lu.isInvertible()) {
        const Matrix<Scalar> jinv = lu.inverse();
        fit.covariance = jinv * meat * jinv.transpose();
        detail::psd_symmetrize(fit.covariance);
    }
    // Deviance check against the intercept-only model on the merged data.
    try {
        Scalar dev_fit = Scalar(0), dev_null = Scalar(0);
        const Scalar ybar = y.mean();
        bool ok = in_mean_space(f, ybar);
        for (Index i = 0; ok && i < y.size(); ++i) {
            const Scalar mu = mean(f, eta(i));
            if (!in_mean_space(f, mu)) {
                ok = false;
                break;
            }
            dev_fit += unit_deviance(f, y(i), mu);
            dev_null += unit_deviance(f, y(i), ybar);
        }
        fit.worse_than_intercept_only = !ok || dev_fit > dev_null;
    } catch (const std::exception&) {
        fit.worse_than_intercept_only = true;
    }
    return fit;
}

} // namespace linkglm
