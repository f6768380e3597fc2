#pragma once

// Penalized GLM with observation-specific l1-penalized offsets.
//
//   l(beta, xi) = (1/n) sum_i nll(y_i, x_i'beta + sqrt(n) xi_i)
//   l_pen       = l + lambda * ||xi||_1            (optionally s.t. C xi = 0)
//
// Solved by block coordinate descent: an exact coordinate-wise update of xi
// followed by a single Fisher-scoring step in beta with step halving.

#include "linkglm/block_partition.hpp"
#include "linkglm/family.hpp"
#include "linkglm/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace linkglm {

template <class Scalar>
struct GroundTruth {
    Vector<Scalar> y_star;
    IndexMap pi_star;
};

template <class Scalar>
struct MergedDataset {
    Matrix<Scalar> X;
    Vector<Scalar> y;
    std::optional<GroundTruth<Scalar>> truth;
    std::optional<BlockPartition> blocks;

    Index n() const { return X.rows(); }
    Index d() const { return X.cols(); }

    void validate(const Family<Scalar>& f) const
    {
        if (X.rows() != y.size()) throw InvalidInput("design has " + std::to_string(X.rows()) + " rows but response has " + std::to_string(y.size()));
        if (d() < 1 || n() < d()) throw InvalidInput("need n >= d >= 1");
        if (!X.allFinite()) throw InvalidInput("design matrix has non-finite entries");
        for (Index i = 0; i < n(); ++i)
            if (!in_support(f, y(i))) throw InvalidInput("response " + std::to_string(i) + " outside the family support");
        if (truth) {
            const auto& t = *truth;
            if (t.y_star.size() != n() || static_cast<Index>(t.pi_star.size()) != n() || !is_bijection(t.pi_star))
                throw InvalidInput("ground truth has inconsistent size or pi_star is not a bijection");
            for (Index i = 0; i < n(); ++i)
                if (y(i) != t.y_star(t.pi_star[static_cast<std::size_t>(i)]))
                    throw InvalidInput("y[" + std::to_string(i) + "] != y_star[pi_star[" + std::to_string(i) + "]]");
        }
        if (blocks && blocks->n() != n()) throw InvalidInput("block partition does not cover the data");
    }
};

struct FitOptions {
    double tol = 1e-8;            // max |theta^(t+1) - theta^(t)|
    double rel_objective_tol = 1e-10;
    int max_iter = 500;
    int max_halvings = 30;
    double clamp_eps = 1e-10;     // margin to the mean-space boundary in the xi update
};

template <class Scalar>
struct PenalizedFit {
    Vector<Scalar> beta;
    Vector<Scalar> xi;
    Scalar lambda = Scalar(0);
    int iterations = 0;
    bool converged = false;
    std::vector<Scalar> objective_trace;
    int clamped_count = 0;

    Scalar objective() const { return objective_trace.empty() ? std::numeric_limits<Scalar>::quiet_NaN() : objective_trace.back(); }
};

template <class Scalar>
struct GlmFit {
    Vector<Scalar> beta;
    bool converged = false;
    int iterations = 0;
    Scalar deviance = Scalar(0);  // 2 * sum nll, up to a data-only constant
};

namespace detail {

template <class Scalar>
bool eta_admissible(const Family<Scalar>& f, Scalar eta)
{
    if (!std::isfinite(static_cast<double>(eta))) return false;
    if (f.kind == FamilyKind::Gamma && f.link == LinkKind::Canonical) return eta < Scalar(0);
    return true;
}

/// Sum of nll over observations, +inf if any linear predictor is inadmissible.
template <class Scalar>
Scalar nll_sum(const Family<Scalar>& f, const Vector<Scalar>& y, const Vector<Scalar>& eta)
{
    Scalar s = Scalar(0);
    for (Index i = 0; i < y.size(); ++i) {
        if (!eta_admissible(f, eta(i))) return std::numeric_limits<Scalar>::infinity();
        s += nll(f, y(i), eta(i));
    }
    return s;
}

template <class Scalar>
Vector<Scalar> nll_gradients(const Family<Scalar>& f, const Vector<Scalar>& y, const Vector<Scalar>& eta)
{
    Vector<Scalar> g(y.size());
    for (Index i = 0; i < y.size(); ++i) g(i) = nll_gradient(f, y(i), eta(i));
    return g;
}

template <class Scalar>
Vector<Scalar> fisher_weights(const Family<Scalar>& f, const Vector<Scalar>& eta)
{
    Vector<Scalar> w(eta.size());
    for (Index i = 0; i < eta.size(); ++i) w(i) = fisher_weight(f, eta(i));
    return w;
}

[[noreturn]] inline void throw_rank_deficient(const std::vector<Index>& cols, const char* where)
{
    std::ostringstream os;
    os << where << ": X'WX is singular; linearly dependent column(s):";
    for (Index c : cols) os << ' ' << c;
    throw RankDeficiencyError(os.str(), cols);
}

/// Solves (X' W X) delta = rhs.
template <class Scalar>
Vector<Scalar> solve_weighted_normal(const Matrix<Scalar>& X, const Vector<Scalar>& w, const Vector<Scalar>& rhs, const char* where)
{
    const Matrix<Scalar> xw = X.array().colwise() * w.array().sqrt();
    Matrix<Scalar> h = Matrix<Scalar>::Zero(X.cols(), X.cols());
    h.template selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
    Eigen::LLT<Matrix<Scalar>> llt(h.template selfadjointView<Eigen::Lower>());
    bool singular = llt.info() != Eigen::Success;
    if (!singular) {
        const Scalar diag_max = h.diagonal().maxCoeff();
        const Scalar pivot_min = llt.matrixLLT().diagonal().array().square().minCoeff();
        singular = !(pivot_min > diag_max * Scalar(X.cols()) * std::numeric_limits<Scalar>::epsilon());
    }
    if (singular) {
        Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(xw);
        if (qr.rank() < X.cols()) {
            std::vector<Index> cols;
            for (Index k = qr.rank(); k < X.cols(); ++k) cols.push_back(qr.colsPermutation().indices()(k));
            std::sort(cols.begin(), cols.end());
            throw_rank_deficient(cols, where);
        }
        Matrix<Scalar> full = h.template selfadjointView<Eigen::Lower>();
        return full.colPivHouseholderQr().solve(rhs);
    }
    return llt.solve(rhs);
}

} // namespace detail

/// eta = X beta + sqrt(n) xi.
template <class Scalar>
Vector<Scalar> linear_predictors(const Matrix<Scalar>& X, const Vector<Scalar>& beta, const Vector<Scalar>& xi)
{
    using std::sqrt;
    return X * beta + sqrt(Scalar(X.rows())) * xi;
}

/// Smooth part l(theta).
template <class Scalar>
Scalar smooth_objective(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                        const Vector<Scalar>& beta, const Vector<Scalar>& xi)
{
    return detail::nll_sum(f, y, linear_predictors(X, beta, xi)) / Scalar(X.rows());
}

/// l(theta) + lambda ||xi||_1. Throws DomainError for inadmissible linear predictors.
template <class Scalar>
Scalar objective(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                 const Vector<Scalar>& beta, const Vector<Scalar>& xi, Scalar lambda)
{
    const Scalar s = smooth_objective(f, X, y, beta, xi);
    if (!std::isfinite(static_cast<double>(s))) throw DomainError("objective: inadmissible linear predictor");
    return s + lambda * xi.template lpNorm<1>();
}

template <class Scalar>
Scalar objective(const Family<Scalar>& f, const MergedDataset<Scalar>& data,
                 const Vector<Scalar>& beta, const Vector<Scalar>& xi, Scalar lambda)
{
    return objective(f, data.X, data.y, beta, xi, lambda);
}

/// Gradient of the smooth part, stacked as [d/dbeta; d/dxi].
template <class Scalar>
Vector<Scalar> smooth_gradient(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                               const Vector<Scalar>& beta, const Vector<Scalar>& xi)
{
    using std::sqrt;
    const Index n = X.rows();
    const Vector<Scalar> g = detail::nll_gradients(f, y, linear_predictors(X, beta, xi));
    Vector<Scalar> out(X.cols() + n);
    out.head(X.cols()) = X.transpose() * g / Scalar(n);
    out.tail(n) = g / sqrt(Scalar(n));
    return out;
}

/// Exact minimizer over xi_i of the i-th coordinate problem given eta_hat = x_i'beta.
/// Canonical links use the closed-form threshold update; the Gamma log link
/// has its own closed form. Sets *clamped if the mean had to be pulled back
/// into the open mean space.
template <class Scalar>
Scalar xi_update(const Family<Scalar>& f, Scalar y, Scalar eta_hat, Scalar lambda, Index n,
                 bool* clamped = nullptr, Scalar eps = Scalar(1e-10))
{
    using std::abs;
    using std::exp;
    using std::log;
    using std::sqrt;
    const Scalar rn = sqrt(Scalar(n));
    if (f.kind == FamilyKind::Gamma && f.link == LinkKind::Log) {
        const Scalar r = y * exp(-detail::clamp_eta(eta_hat)) - Scalar(1);
        if (abs(r) / rn <= lambda) return Scalar(0);
        Scalar denom = Scalar(1) + sign_of(r) * rn * lambda;
        if (!(denom > eps)) {
            if (clamped) *clamped = true;
            denom = eps;
        }
        return (log(y) - log(denom) - eta_hat) / rn;
    }
    const Scalar mu = mean(f, eta_hat);
    const Scalar resid = y - mu;
    if (abs(resid) / rn <= lambda) return Scalar(0);
    const Scalar s = sign_of(resid) * rn;
    const Scalar target = linear_predictor_clamped(f, y - s * lambda, clamped, eps);
    return (target - eta_hat) / rn;
}

/// One Fisher-scoring step in beta with xi fixed, halving the step while the
/// smooth objective increases.
template <class Scalar>
Vector<Scalar> beta_update(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                           const Vector<Scalar>& beta, const Vector<Scalar>& xi, int max_halvings = 30)
{
    using std::sqrt;
    const Vector<Scalar> offset = sqrt(Scalar(X.rows())) * xi;
    const Vector<Scalar> eta = X * beta + offset;
    const Vector<Scalar> w = detail::fisher_weights(f, eta);
    const Vector<Scalar> rhs = -(X.transpose() * detail::nll_gradients(f, y, eta));
    const Vector<Scalar> step = detail::solve_weighted_normal(X, w, rhs, "beta_update");
    const Scalar current = detail::nll_sum(f, y, eta);
    Scalar t = Scalar(1);
    for (int h = 0; h <= max_halvings; ++h, t /= Scalar(2)) {
        const Vector<Scalar> candidate = beta + t * step;
        if (detail::nll_sum(f, y, Vector<Scalar>(X * candidate + offset)) <= current) return candidate;
    }
    return beta;
}

template <class Scalar>
Vector<Scalar> beta_update(const Family<Scalar>& f, const MergedDataset<Scalar>& data,
                           const Vector<Scalar>& beta, const Vector<Scalar>& xi)
{
    return beta_update(f, data.X, data.y, beta, xi);
}

namespace detail {

template <class Scalar>
Scalar initial_mean(const Family<Scalar>& f, Scalar y)
{
    switch (f.kind) {
    case FamilyKind::Gaussian: return y;
    case FamilyKind::Poisson: return y + Scalar(0.1);
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return (y + Scalar(0.5)) / (f.m() + Scalar(1));
    case FamilyKind::Gamma: return y;
    }
    return y;
}

} // namespace detail

/// Maximum-likelihood GLM fit by Fisher scoring with step halving. Offsets are
/// added to the linear predictor. Throws NumericError on divergence (for
/// example complete separation); non-convergence within max_iter is flagged.
template <class Scalar>
GlmFit<Scalar> fit_glm(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                       const Vector<Scalar>& offsets, int max_iter = 100, Scalar tol = Scalar(1e-12))
{
    using std::abs;
    const Index n = X.rows();
    if (y.size() != n || offsets.size() != n) throw InvalidInput("fit_glm: dimension mismatch");
    // Weighted least squares on the working response from a data-based start.
    Vector<Scalar> eta0(n), z(n), w(n);
    for (Index i = 0; i < n; ++i) {
        bool unused = false;
        const Scalar mu0 = detail::initial_mean(f, y(i));
        eta0(i) = linear_predictor_clamped(f, mu0, &unused, Scalar(1e-6));
        const Scalar wi = fisher_weight(f, eta0(i));
        w(i) = wi;
        z(i) = eta0(i) - offsets(i) - nll_gradient(f, y(i), eta0(i)) / wi;
    }
    GlmFit<Scalar> fit;
    fit.beta = detail::solve_weighted_normal(X, w, Vector<Scalar>(X.transpose() * (w.array() * z.array()).matrix()), "fit_glm");
    if (!std::isfinite(static_cast<double>(detail::nll_sum(f, y, Vector<Scalar>(X * fit.beta + offsets))))) {
        // Start from the intercept-free zero predictor when WLS lands outside the domain.
        fit.beta.setZero();
    }
    for (int it = 1; it <= max_iter; ++it) {
        fit.iterations = it;
        const Vector<Scalar> eta = X * fit.beta + offsets;
        const Vector<Scalar> wk = detail::fisher_weights(f, eta);
        const Vector<Scalar> rhs = -(X.transpose() * detail::nll_gradients(f, y, eta));
        const Vector<Scalar> step = detail::solve_weighted_normal(X, wk, rhs, "fit_glm");
        const Scalar current = detail::nll_sum(f, y, eta);
        Scalar t = Scalar(1);
        Vector<Scalar> next = fit.beta;
        for (int h = 0; h <= 40; ++h, t /= Scalar(2)) {
            const Vector<Scalar> cand = fit.beta + t * step;
            if (detail::nll_sum(f, y, Vector<Scalar>(X * cand + offsets)) <= current) {
                next = cand;
                break;
            }
        }
        const Scalar change = (next - fit.beta).template lpNorm<Eigen::Infinity>();
        fit.beta = next;
        const Scalar eta_max = (X * fit.beta + offsets).cwiseAbs().maxCoeff();
        if (!fit.beta.allFinite() || eta_max >= Scalar(kEtaBound) ||
            ((f.kind == FamilyKind::Binomial || f.kind == FamilyKind::Bernoulli) && eta_max >= Scalar(kSeparationEta)))
            throw NumericError("fit_glm: diverging linear predictor (separation or ill-posed fit)");
        if (change <= tol * (Scalar(1) + fit.beta.template lpNorm<Eigen::Infinity>())) {
            fit.converged = true;
            break;
        }
    }
    fit.deviance = Scalar(2) * detail::nll_sum(f, y, Vector<Scalar>(X * fit.beta + offsets));
    return fit;
}

template <class Scalar>
GlmFit<Scalar> fit_glm(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y)
{
    return fit_glm(f, X, y, Vector<Scalar>(Vector<Scalar>::Zero(X.rows())));
}

/// ||grad_xi l(beta, 0)||_inf. For lambda above this value the penalized fit
/// started from beta_naive keeps xi = 0.
template <class Scalar>
Scalar lambda_max(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y, const Vector<Scalar>& beta_naive)
{
    const Vector<Scalar> g = smooth_gradient(f, X, y, beta_naive, Vector<Scalar>(Vector<Scalar>::Zero(X.rows())));
    return g.tail(X.rows()).template lpNorm<Eigen::Infinity>();
}

template <class Scalar>
struct StartingPoint {
    Vector<Scalar> beta;
    Vector<Scalar> xi;
};

namespace detail {

template <class Scalar>
bool converged_step(const Vector<Scalar>& b0, const Vector<Scalar>& b1, const Vector<Scalar>& x0, const Vector<Scalar>& x1,
                    Scalar obj0, Scalar obj1, const FitOptions& opts)
{
    using std::abs;
    using std::max;
    const Scalar dtheta = max((b1 - b0).template lpNorm<Eigen::Infinity>(), (x1 - x0).template lpNorm<Eigen::Infinity>());
    const Scalar dobj = abs(obj0 - obj1) / max(Scalar(1), abs(obj1));
    return dtheta < Scalar(opts.tol) && dobj < Scalar(opts.rel_objective_tol);
}

template <class Scalar>
int count_clamped_eta(const Vector<Scalar>& eta)
{
    int c = 0;
    for (Index i = 0; i < eta.size(); ++i)
        if (eta(i) > Scalar(kEtaBound) || eta(i) < -Scalar(kEtaBound)) ++c;
    return c;
}

} // namespace detail

/// Minimizes l(beta, xi) + lambda ||xi||_1 by block coordinate descent.
/// Starts from xi = 0 and the ordinary GLM fit unless a starting point is given.
template <class Scalar>
PenalizedFit<Scalar> fit_penalized(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y, Scalar lambda,
                                   const FitOptions& opts = {}, const std::optional<StartingPoint<Scalar>>& start = std::nullopt)
{
    if (!(lambda >= Scalar(0))) throw InvalidInput("lambda must be non-negative");
    const Index n = X.rows();
    PenalizedFit<Scalar> fit;
    fit.lambda = lambda;
    if (start) {
        fit.beta = start->beta;
        fit.xi = start->xi;
    } else {
        fit.beta = fit_glm(f, X, y).beta;
        fit.xi = Vector<Scalar>::Zero(n);
    }
    Scalar obj = objective(f, X, y, fit.beta, fit.xi, lambda);
    fit.objective_trace.push_back(obj);
    int clamped = 0;
    for (int it = 1; it <= opts.max_iter; ++it) {
        fit.iterations = it;
        const Vector<Scalar> eta_hat = X * fit.beta;
        Vector<Scalar> xi_next(n);
        for (Index i = 0; i < n; ++i) {
            bool c = false;
            xi_next(i) = xi_update(f, y(i), eta_hat(i), lambda, n, &c, Scalar(opts.clamp_eps));
            clamped += c ? 1 : 0;
        }
        const Vector<Scalar> beta_next = beta_update(f, X, y, fit.beta, xi_next, opts.max_halvings);
        const Scalar obj_next = objective(f, X, y, beta_next, xi_next, lambda);
        const bool done = detail::converged_step(fit.beta, beta_next, fit.xi, xi_next, obj, obj_next, opts);
        fit.beta = beta_next;
        fit.xi = xi_next;
        obj = obj_next;
        fit.objective_trace.push_back(obj);
        if (done) {
            fit.converged = true;
            break;
        }
    }
    fit.clamped_count = clamped + detail::count_clamped_eta(linear_predictors(X, fit.beta, fit.xi));
    return fit;
}

template <class Scalar>
PenalizedFit<Scalar> fit_penalized(const Family<Scalar>& f, const MergedDataset<Scalar>& data, Scalar lambda, const FitOptions& opts = {})
{
    return fit_penalized(f, data.X, data.y, lambda, opts);
}

namespace detail {

/// argmin_t  sum_i [g_i (t_i - x_i) + h_i/2 (t_i - x_i)^2 + lambda |t_i|]  s.t. sum_i t_i = 0.
/// The stationarity conditions give t_i(nu) = soft(x_i - (g_i + nu)/h_i, lambda/h_i), whose
/// sum is continuous, piecewise linear and non-increasing in the multiplier nu. The root is
/// located between consecutive breakpoints and then solved on that linear piece.
template <class Scalar>
void solve_sum_zero_soft_threshold(const std::vector<Index>& idx, const Vector<Scalar>& x, const Vector<Scalar>& g,
                                   const Vector<Scalar>& h, Scalar lambda, Vector<Scalar>& out)
{
    using std::abs;
    const std::size_t m = idx.size();
    auto t_at = [&](std::size_t k, Scalar nu) {
        const Index i = idx[k];
        const Scalar z = x(i) - (g(i) + nu) / h(i);
        const Scalar thr = lambda / h(i);
        if (z > thr) return z - thr;
        if (z < -thr) return z + thr;
        return Scalar(0);
    };
    auto total = [&](Scalar nu) {
        Scalar s = Scalar(0);
        for (std::size_t k = 0; k < m; ++k) s += t_at(k, nu);
        return s;
    };
    std::vector<Scalar> bp;
    bp.reserve(2 * m);
    for (std::size_t k = 0; k < m; ++k) {
        const Index i = idx[k];
        const Scalar c = h(i) * x(i) - g(i);
        bp.push_back(c - lambda);
        bp.push_back(c + lambda);
    }
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());

    std::vector<Scalar> sums(bp.size());
    for (std::size_t k = 0; k < bp.size(); ++k) sums[k] = total(bp[k]);

    Scalar nu;
    Scalar inv_h_sum = Scalar(0);
    for (std::size_t k = 0; k < m; ++k) inv_h_sum += Scalar(1) / h(idx[k]);
    if (sums.front() <= Scalar(0)) {
        // Left of every breakpoint all t_i are on their positive branch (slope -sum 1/h).
        nu = bp.front() + sums.front() / inv_h_sum;
    } else if (sums.back() >= Scalar(0)) {
        nu = bp.back() + sums.back() / inv_h_sum;
    } else {
        std::size_t k = 0;
        while (!(sums[k] >= Scalar(0) && sums[k + 1] <= Scalar(0))) ++k;
        const Scalar s0 = sums[k], s1 = sums[k + 1];
        nu = s0 == s1 ? bp[k] : bp[k] + s0 * (bp[k + 1] - bp[k]) / (s0 - s1);
    }
    Scalar residual = Scalar(0);
    std::size_t free_count = 0;
    for (std::size_t k = 0; k < m; ++k) {
        out(idx[k]) = t_at(k, nu);
        residual += out(idx[k]);
        if (out(idx[k]) != Scalar(0)) ++free_count;
    }
    // Remove rounding residue from the sum by a weighted shift on the active set.
    if (free_count > 0 && residual != Scalar(0)) {
        Scalar w = Scalar(0);
        for (std::size_t k = 0; k < m; ++k)
            if (out(idx[k]) != Scalar(0)) w += Scalar(1) / h(idx[k]);
        for (std::size_t k = 0; k < m; ++k)
            if (out(idx[k]) != Scalar(0)) out(idx[k]) -= residual * (Scalar(1) / h(idx[k])) / w;
    }
}

} // namespace detail

/// Minimizes l(beta, xi) + lambda ||xi||_1 subject to sum_{i in G_j} xi_i = 0 for
/// every block. The xi-block is updated by minimizing the second-order model of l
/// (diagonal in xi) under the constraints, followed by a backtracking line search
/// on the penalized objective; beta is updated by one Fisher step as in the
/// unconstrained solver. Singleton blocks force xi_i = 0.
template <class Scalar>
PenalizedFit<Scalar> fit_penalized_constrained(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                               Scalar lambda, const BlockPartition& blocks, const FitOptions& opts = {},
                                               const std::optional<StartingPoint<Scalar>>& start = std::nullopt)
{
    using std::sqrt;
    if (!(lambda >= Scalar(0))) throw InvalidInput("lambda must be non-negative");
    const Index n = X.rows();
    if (blocks.n() != n) throw InvalidInput("block partition size does not match the data");
    const Scalar rn = sqrt(Scalar(n));
    PenalizedFit<Scalar> fit;
    fit.lambda = lambda;
    if (start) {
        fit.beta = start->beta;
        fit.xi = start->xi;
        for (Index j = 0; j < blocks.num_blocks(); ++j)
            if (blocks.is_singleton(j)) fit.xi(blocks.group(j).front()) = Scalar(0);
    } else {
        fit.beta = fit_glm(f, X, y).beta;
        fit.xi = Vector<Scalar>::Zero(n);
    }
    Scalar obj = objective(f, X, y, fit.beta, fit.xi, lambda);
    fit.objective_trace.push_back(obj);
    const Scalar tiny = Scalar(1e-12);
    for (int it = 1; it <= opts.max_iter; ++it) {
        fit.iterations = it;
        const Vector<Scalar> eta = linear_predictors(X, fit.beta, fit.xi);
        Vector<Scalar> g(n), h(n);
        for (Index i = 0; i < n; ++i) {
            g(i) = nll_gradient(f, y(i), eta(i)) / rn;
            h(i) = std::max(nll_hessian(f, y(i), eta(i)), tiny);
        }
        Vector<Scalar> model = Vector<Scalar>::Zero(n);
        for (Index j = 0; j < blocks.num_blocks(); ++j) {
            if (blocks.is_singleton(j)) continue;
            detail::solve_sum_zero_soft_threshold(blocks.group(j), fit.xi, g, h, lambda, model);
        }
        // Backtracking on the penalized objective; convex combinations stay feasible.
        const Vector<Scalar> dir = model - fit.xi;
        Vector<Scalar> xi_next = fit.xi;
        Scalar t = Scalar(1);
        for (int k = 0; k <= opts.max_halvings; ++k, t /= Scalar(2)) {
            const Vector<Scalar> cand = fit.xi + t * dir;
            const Scalar s = smooth_objective(f, X, y, fit.beta, cand);
            if (std::isfinite(static_cast<double>(s)) && s + lambda * cand.template lpNorm<1>() <= obj) {
                xi_next = cand;
                break;
            }
        }
        const Vector<Scalar> beta_next = beta_update(f, X, y, fit.beta, xi_next, opts.max_halvings);
        const Scalar obj_next = objective(f, X, y, beta_next, xi_next, lambda);
        const bool done = detail::converged_step(fit.beta, beta_next, fit.xi, xi_next, obj, obj_next, opts);
        fit.beta = beta_next;
        fit.xi = xi_next;
        obj = obj_next;
        fit.objective_trace.push_back(obj);
        if (done) {
            fit.converged = true;
            break;
        }
    }
    fit.clamped_count = detail::count_clamped_eta(linear_predictors(X, fit.beta, fit.xi));
    return fit;
}

template <class Scalar>
PenalizedFit<Scalar> fit_penalized_constrained(const Family<Scalar>& f, const MergedDataset<Scalar>& data, Scalar lambda,
                                               const BlockPartition& blocks, const FitOptions& opts = {})
{
    return fit_penalized_constrained(f, data.X, data.y, lambda, blocks, opts);
}

} // namespace linkglm
