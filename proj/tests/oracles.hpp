#pragma once

// Reference computations written independently of the library code paths.

#include "linkglm/block_partition.hpp"
#include "linkglm/family.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using linkglm::FamilyKind;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Golden-section search for the minimizer of a unimodal function on [a, b].
inline double golden_section(const std::function<double(double)>& fn, double a, double b, double tol = 1e-12)
{
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = fn(c), fd = fn(d);
    while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = fn(d);
        }
    }
    return 0.5 * (a + b);
}

/// Central differences with step h.
inline Vec fd_gradient(const std::function<double(const Vec&)>& fn, const Vec& x, double h = 1e-5)
{
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return g;
}

/// Negative log-likelihood without constants, written out per family.
inline double nll(FamilyKind kind, int m, double y, double eta)
{
    switch (kind) {
    case FamilyKind::Gaussian: return -y * eta + 0.5 * eta * eta;
    case FamilyKind::Poisson: return -y * eta + std::exp(eta);
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return -y * eta + m * (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)));
    case FamilyKind::Gamma: return y * std::exp(-eta) + eta;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline double mean(FamilyKind kind, int m, double eta)
{
    switch (kind) {
    case FamilyKind::Gaussian: return eta;
    case FamilyKind::Poisson: return std::exp(eta);
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return m / (1.0 + std::exp(-eta));
    case FamilyKind::Gamma: return std::exp(eta);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

/// (1/n) sum nll(y_i, x_i'beta + sqrt(n) xi_i) + lambda ||xi||_1, one term at a time.
inline double penalized_objective(FamilyKind kind, int m, const Mat& X, const Vec& y, const Vec& beta, const Vec& xi,
                                  double lambda)
{
    const auto n = X.rows();
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double eta = 0.0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) eta += X(i, j) * beta(j);
        eta += std::sqrt(static_cast<double>(n)) * xi(i);
        s += nll(kind, m, y(i), eta);
    }
    double pen = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) pen += std::abs(xi(i));
    return s / static_cast<double>(n) + lambda * pen;
}

/// Textbook IRLS for canonical links: z = eta + (y - mu)/v, weights v.
inline Vec irls(FamilyKind kind, int m, const Mat& X, const Vec& y, int iters = 200)
{
    Vec beta = Vec::Zero(X.cols());
    for (int it = 0; it < iters; ++it) {
        const Vec eta = X * beta;
        Vec w(eta.size()), z(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double mu = mean(kind, m, eta(i));
            double v = 1.0;
            if (kind == FamilyKind::Poisson) v = mu;
            if (kind == FamilyKind::Binomial || kind == FamilyKind::Bernoulli) v = mu * (1.0 - mu / m);
            w(i) = v;
            z(i) = eta(i) + (y(i) - mu) / v;
        }
        const Mat xtw = X.transpose() * w.asDiagonal();
        const Vec next = (xtw * X).ldlt().solve(xtw * z);
        const double change = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        if (change < 1e-14) break;
    }
    return beta;
}

/// Minimum of -sum_i y_i eta_{map(i)} over all permutations that respect the blocks.
inline double min_assignment(const Vec& eta, const Vec& y, const linkglm::BlockPartition& blocks)
{
    double total = 0.0;
    for (const auto& g : blocks.groups()) {
        std::vector<linkglm::Index> perm = g;
        std::sort(perm.begin(), perm.end());
        double best = std::numeric_limits<double>::infinity();
        do {
            double v = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) v -= y(g[k]) * eta(perm[k]);
            best = std::min(best, v);
        } while (std::next_permutation(perm.begin(), perm.end()));
        total += best;
    }
    return total;
}

/// Dense block averaging matrix.
inline Mat dense_q(const linkglm::BlockPartition& blocks)
{
    Mat q = Mat::Zero(blocks.n(), blocks.n());
    for (const auto& g : blocks.groups())
        for (auto i : g)
            for (auto j : g) q(i, j) = 1.0 / static_cast<double>(g.size());
    return q;
}

/// Global minimum of the Gaussian (unit scale) penalized objective subject to
/// C xi = 0, by enumerating all sign patterns of xi. On each pattern the
/// problem is an equality-constrained quadratic program; the best
/// sign-consistent stationary point is the global minimizer.
inline double gaussian_constrained_minimum(const Mat& X, const Vec& y, double lambda, const linkglm::BlockPartition& blocks,
                                           Vec* beta_out = nullptr, Vec* xi_out = nullptr)
{
    const auto n = X.rows(), d = X.cols();
    const double rn = std::sqrt(static_cast<double>(n));
    const Mat C = blocks.constraint_matrix<double>();
    std::vector<int> sign(static_cast<std::size_t>(n), -1);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i)
            if (sign[static_cast<std::size_t>(i)] != 0) free.push_back(i);
        const auto p = d + static_cast<Eigen::Index>(free.size());
        // Variables v = [beta; xi_free]; eta = A v.
        Mat A = Mat::Zero(n, p);
        A.leftCols(d) = X;
        Vec lin = Vec::Zero(p);
        for (std::size_t k = 0; k < free.size(); ++k) {
            A(free[k], d + static_cast<Eigen::Index>(k)) = rn;
            lin(d + static_cast<Eigen::Index>(k)) = lambda * sign[static_cast<std::size_t>(free[k])];
        }
        Mat E = Mat::Zero(C.rows(), p);
        for (std::size_t k = 0; k < free.size(); ++k) E.col(d + static_cast<Eigen::Index>(k)) = C.col(free[k]);
        // minimize (1/n)(0.5 v'A'Av - y'Av) + lin'v  s.t. E v = 0
        const Mat H = A.transpose() * A / static_cast<double>(n);
        const Vec g = lin - A.transpose() * y / static_cast<double>(n);
        Mat K = Mat::Zero(p + E.rows(), p + E.rows());
        K.topLeftCorner(p, p) = H;
        K.topRightCorner(p, E.rows()) = E.transpose();
        K.bottomLeftCorner(E.rows(), p) = E;
        Vec rhs = Vec::Zero(p + E.rows());
        rhs.head(p) = -g;
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(K);
        const Vec sol = cod.solve(rhs);
        if ((K * sol - rhs).norm() < 1e-9 * (1.0 + rhs.norm())) {
            const Vec v = sol.head(p);
            bool consistent = true;
            for (std::size_t k = 0; k < free.size() && consistent; ++k)
                consistent = sign[static_cast<std::size_t>(free[k])] * v(d + static_cast<Eigen::Index>(k)) >= -1e-12;
            if (consistent) {
                Vec xi = Vec::Zero(n);
                for (std::size_t k = 0; k < free.size(); ++k) xi(free[k]) = v(d + static_cast<Eigen::Index>(k));
                const Vec beta = v.head(d);
                const double val = penalized_objective(FamilyKind::Gaussian, 1, X, y, beta, xi, lambda);
                if (val < best) {
                    best = val;
                    if (beta_out) *beta_out = beta;
                    if (xi_out) *xi_out = xi;
                }
            }
        }
        std::size_t k = 0;
        while (k < sign.size() && sign[k] == 1) sign[k++] = -1;
        if (k == sign.size()) break;
        ++sign[k];
    }
    return best;
}

} // namespace oracle
