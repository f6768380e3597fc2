#pragma once

// Exponential-family kernel: cumulant, link pair, variance, tail probabilities
// and unit deviance for the response distributions used throughout the library.
//
// Per-observation negative log-likelihood (dispersion omitted) is written as a
// function of the linear predictor eta:
//   canonical link:  -y * eta + psi(eta)
//   Gamma, log link:  y * exp(-eta) + eta

#include "linkglm/types.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace linkglm {

enum class FamilyKind { Gaussian, Poisson, Binomial, Bernoulli, Gamma };
enum class LinkKind { Canonical, Log };

inline constexpr double kEtaBound = 700.0;
inline constexpr double kSeparationEta = 30.0; // |logit| beyond which a binomial fit is treated as separated

template <class Scalar>
struct Family {
    FamilyKind kind = FamilyKind::Gaussian;
    // Gaussian: sigma^2, Gamma: 1/shape, otherwise 1.
    Scalar dispersion = Scalar(1);
    // Binomial trials; 1 for Bernoulli.
    int trials = 1;
    LinkKind link = LinkKind::Canonical;

    static Family gaussian(Scalar sigma2 = Scalar(1)) { return make(FamilyKind::Gaussian, sigma2, 1, LinkKind::Canonical); }
    static Family poisson() { return make(FamilyKind::Poisson, Scalar(1), 1, LinkKind::Canonical); }
    static Family binomial(int m) { return make(FamilyKind::Binomial, Scalar(1), m, LinkKind::Canonical); }
    static Family bernoulli() { return make(FamilyKind::Bernoulli, Scalar(1), 1, LinkKind::Canonical); }
    static Family gamma(Scalar shape, LinkKind link = LinkKind::Log)
    {
        if (!(shape > Scalar(0))) throw InvalidInput("gamma shape must be positive");
        return make(FamilyKind::Gamma, Scalar(1) / shape, 1, link);
    }

    static Family make(FamilyKind kind, Scalar dispersion, int trials, LinkKind link)
    {
        Family f;
        f.kind = kind;
        f.dispersion = dispersion;
        f.trials = kind == FamilyKind::Bernoulli ? 1 : trials;
        f.link = link;
        f.validate();
        return f;
    }

    void validate() const
    {
        if (!(dispersion > Scalar(0)) || !std::isfinite(static_cast<double>(dispersion)))
            throw InvalidInput("dispersion must be positive and finite");
        if (trials < 1) throw InvalidInput("binomial trials must be >= 1");
        if (link == LinkKind::Log && kind != FamilyKind::Gamma)
            throw InvalidInput("log link is only supported for the gamma family");
    }

    bool canonical() const { return link == LinkKind::Canonical; }
    bool binomial_like() const { return kind == FamilyKind::Binomial || kind == FamilyKind::Bernoulli; }
    Scalar shape() const { return Scalar(1) / dispersion; }
    Scalar m() const { return Scalar(trials); }
};

inline std::string to_string(FamilyKind k)
{
    switch (k) {
    case FamilyKind::Gaussian: return "gaussian";
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Binomial: return "binomial";
    case FamilyKind::Bernoulli: return "bernoulli";
    case FamilyKind::Gamma: return "gamma";
    }
    return "unknown";
}

inline std::string to_string(LinkKind k) { return k == LinkKind::Log ? "log" : "canonical"; }

inline FamilyKind parse_family_kind(const std::string& s)
{
    if (s == "gaussian") return FamilyKind::Gaussian;
    if (s == "poisson") return FamilyKind::Poisson;
    if (s == "binomial") return FamilyKind::Binomial;
    if (s == "bernoulli") return FamilyKind::Bernoulli;
    if (s == "gamma") return FamilyKind::Gamma;
    throw InvalidInput("unknown family '" + s + "'");
}

inline LinkKind parse_link_kind(const std::string& s)
{
    if (s == "canonical") return LinkKind::Canonical;
    if (s == "log") return LinkKind::Log;
    throw InvalidInput("unknown link '" + s + "'");
}

namespace detail {

template <class Scalar>
Scalar log1pexp(Scalar x)
{
    using std::exp;
    using std::log1p;
    return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

template <class Scalar>
Scalar logistic(Scalar x)
{
    using std::exp;
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
    const Scalar e = exp(x);
    return e / (Scalar(1) + e);
}

template <class Scalar>
Scalar clamp_eta(Scalar eta, bool* clamped = nullptr)
{
    const Scalar bound(kEtaBound);
    if (eta > bound || eta < -bound) {
        if (clamped) *clamped = true;
        return eta > Scalar(0) ? bound : -bound;
    }
    return eta;
}

template <class Scalar>
void require_finite(Scalar x, const char* what)
{
    if (!std::isfinite(static_cast<double>(x))) throw DomainError(std::string(what) + ": non-finite argument");
}

// y log(y / mu) with the continuous extension at y = 0.
template <class Scalar>
Scalar xlogy_ratio(Scalar y, Scalar mu)
{
    using std::log;
    return y == Scalar(0) ? Scalar(0) : y * log(y / mu);
}

} // namespace detail

/// Natural-parameter cumulant psi(theta).
template <class Scalar>
Scalar cumulant(const Family<Scalar>& f, Scalar theta)
{
    using std::exp;
    using std::log;
    detail::require_finite(theta, "cumulant");
    switch (f.kind) {
    case FamilyKind::Gaussian: return theta * theta / Scalar(2);
    case FamilyKind::Poisson: return exp(detail::clamp_eta(theta));
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return f.m() * detail::log1pexp(theta);
    case FamilyKind::Gamma:
        if (!(theta < Scalar(0))) throw DomainError("gamma cumulant requires theta < 0");
        return -log(-theta);
    }
    return Scalar(0);
}

/// Inverse link h: linear predictor -> mean.
template <class Scalar>
Scalar mean(const Family<Scalar>& f, Scalar eta)
{
    using std::exp;
    detail::require_finite(eta, "mean");
    switch (f.kind) {
    case FamilyKind::Gaussian: return eta;
    case FamilyKind::Poisson: return exp(detail::clamp_eta(eta));
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return f.m() * detail::logistic(eta);
    case FamilyKind::Gamma:
        if (f.link == LinkKind::Log) return exp(detail::clamp_eta(eta));
        if (!(eta < Scalar(0))) throw DomainError("gamma canonical link requires eta < 0");
        return Scalar(-1) / eta;
    }
    return eta;
}

template <class Scalar>
bool in_mean_space(const Family<Scalar>& f, Scalar mu)
{
    if (!std::isfinite(static_cast<double>(mu))) return false;
    switch (f.kind) {
    case FamilyKind::Gaussian: return true;
    case FamilyKind::Poisson:
    case FamilyKind::Gamma: return mu > Scalar(0);
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return mu > Scalar(0) && mu < f.m();
    }
    return false;
}

/// Link g = h^{-1}: mean -> linear predictor.
template <class Scalar>
Scalar linear_predictor(const Family<Scalar>& f, Scalar mu)
{
    using std::log;
    if (!in_mean_space(f, mu)) throw DomainError("linear_predictor: mean outside the open mean space");
    switch (f.kind) {
    case FamilyKind::Gaussian: return mu;
    case FamilyKind::Poisson: return log(mu);
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return log(mu) - log(f.m() - mu);
    case FamilyKind::Gamma: return f.link == LinkKind::Log ? log(mu) : Scalar(-1) / mu;
    }
    return mu;
}

/// Clamps mu into the open mean space (margin eps) and applies the link.
template <class Scalar>
Scalar linear_predictor_clamped(const Family<Scalar>& f, Scalar mu, bool* clamped, Scalar eps = Scalar(1e-10))
{
    Scalar lo = -std::numeric_limits<Scalar>::infinity();
    Scalar hi = std::numeric_limits<Scalar>::infinity();
    switch (f.kind) {
    case FamilyKind::Gaussian: break;
    case FamilyKind::Poisson:
    case FamilyKind::Gamma: lo = eps; break;
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli:
        lo = eps;
        hi = f.m() - eps;
        break;
    }
    if (mu < lo || mu > hi) {
        if (clamped) *clamped = true;
        mu = mu < lo ? lo : hi;
    }
    return linear_predictor(f, mu);
}

/// d mu / d eta. Equals psi''(eta) for canonical links.
template <class Scalar>
Scalar mean_derivative(const Family<Scalar>& f, Scalar eta)
{
    switch (f.kind) {
    case FamilyKind::Gaussian: return Scalar(1);
    case FamilyKind::Poisson: return mean(f, eta);
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: {
        const Scalar p = detail::logistic(eta);
        return f.m() * p * (Scalar(1) - p);
    }
    case FamilyKind::Gamma: {
        const Scalar mu = mean(f, eta);
        return f.link == LinkKind::Log ? mu : mu * mu;
    }
    }
    return Scalar(1);
}

/// Var(y | eta) including dispersion.
template <class Scalar>
Scalar variance(const Family<Scalar>& f, Scalar eta)
{
    switch (f.kind) {
    case FamilyKind::Gaussian: return f.dispersion;
    case FamilyKind::Poisson:
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return mean_derivative(f, eta);
    case FamilyKind::Gamma: {
        const Scalar mu = mean(f, eta);
        return f.dispersion * mu * mu;
    }
    }
    return Scalar(1);
}

/// Variance function V(mu) including dispersion, evaluated on the mean scale.
template <class Scalar>
Scalar variance_of_mean(const Family<Scalar>& f, Scalar mu)
{
    switch (f.kind) {
    case FamilyKind::Gaussian: return f.dispersion;
    case FamilyKind::Poisson: return mu;
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return mu * (Scalar(1) - mu / f.m());
    case FamilyKind::Gamma: return f.dispersion * mu * mu;
    }
    return Scalar(1);
}

template <class Scalar>
bool in_support(const Family<Scalar>& f, Scalar y)
{
    if (!std::isfinite(static_cast<double>(y))) return false;
    switch (f.kind) {
    case FamilyKind::Gaussian: return true;
    case FamilyKind::Poisson: return y >= Scalar(0);
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: return y >= Scalar(0) && y <= f.m();
    case FamilyKind::Gamma: return y > Scalar(0);
    }
    return false;
}

// ---------------------------------------------------------------------------
// Negative log-likelihood kernel in the linear predictor.

template <class Scalar>
Scalar nll(const Family<Scalar>& f, Scalar y, Scalar eta)
{
    using std::exp;
    if (f.kind == FamilyKind::Gamma && f.link == LinkKind::Log) {
        const Scalar e = detail::clamp_eta(eta);
        return y * exp(-e) + e;
    }
    return -y * eta + cumulant(f, eta);
}

/// d nll / d eta.
template <class Scalar>
Scalar nll_gradient(const Family<Scalar>& f, Scalar y, Scalar eta)
{
    using std::exp;
    if (f.kind == FamilyKind::Gamma && f.link == LinkKind::Log)
        return Scalar(1) - y * exp(-detail::clamp_eta(eta));
    return mean(f, eta) - y;
}

/// d^2 nll / d eta^2 (observed).
template <class Scalar>
Scalar nll_hessian(const Family<Scalar>& f, Scalar y, Scalar eta)
{
    using std::exp;
    if (f.kind == FamilyKind::Gamma && f.link == LinkKind::Log) return y * exp(-detail::clamp_eta(eta));
    return mean_derivative(f, eta);
}

/// Expected d^2 nll / d eta^2 (Fisher weight).
template <class Scalar>
Scalar fisher_weight(const Family<Scalar>& f, Scalar eta)
{
    if (f.kind == FamilyKind::Gamma && f.link == LinkKind::Log) return Scalar(1);
    return mean_derivative(f, eta);
}

// ---------------------------------------------------------------------------

/// p* = P(Y >= y | eta) if y >= h(eta), else P(Y <= y | eta).
template <class Scalar>
Scalar tail_probability(const Family<Scalar>& f, Scalar eta, Scalar y)
{
    using std::ceil;
    using std::floor;
    using std::sqrt;
    namespace bm = boost::math;
    const Scalar mu = mean(f, eta);
    const bool upper = y >= mu;
    Scalar p = Scalar(0);
    try {
        switch (f.kind) {
        case FamilyKind::Gaussian: {
            bm::normal_distribution<Scalar> d(mu, sqrt(f.dispersion));
            p = upper ? bm::cdf(bm::complement(d, y)) : bm::cdf(d, y);
            break;
        }
        case FamilyKind::Poisson: {
            bm::poisson_distribution<Scalar> d(mu);
            if (upper) {
                const Scalar k = ceil(y);
                p = k <= Scalar(0) ? Scalar(1) : bm::cdf(bm::complement(d, k - Scalar(1)));
            } else {
                const Scalar k = floor(y);
                p = k < Scalar(0) ? Scalar(0) : bm::cdf(d, k);
            }
            break;
        }
        case FamilyKind::Binomial:
        case FamilyKind::Bernoulli: {
            bm::binomial_distribution<Scalar> d(f.m(), mu / f.m());
            if (upper) {
                const Scalar k = ceil(y);
                p = k <= Scalar(0) ? Scalar(1) : (k > f.m() ? Scalar(0) : bm::cdf(bm::complement(d, k - Scalar(1))));
            } else {
                const Scalar k = floor(y);
                p = k < Scalar(0) ? Scalar(0) : bm::cdf(d, k < f.m() ? k : f.m());
            }
            break;
        }
        case FamilyKind::Gamma: {
            bm::gamma_distribution<Scalar> d(f.shape(), mu / f.shape());
            if (y <= Scalar(0)) {
                p = upper ? Scalar(1) : Scalar(0);
            } else {
                p = upper ? bm::cdf(bm::complement(d, y)) : bm::cdf(d, y);
            }
            break;
        }
        }
    } catch (const std::exception& e) {
        throw NumericError(std::string("tail_probability: ") + e.what());
    }
    if (p < Scalar(0)) p = Scalar(0);
    if (p > Scalar(1)) p = Scalar(1);
    return p;
}

/// Unit deviance d(y, mu) >= 0, zero iff y == mu. Dispersion is not applied.
template <class Scalar>
Scalar unit_deviance(const Family<Scalar>& f, Scalar y, Scalar mu)
{
    using std::log;
    if (!in_mean_space(f, mu)) throw DomainError("unit_deviance: mean outside the open mean space");
    Scalar d = Scalar(0);
    switch (f.kind) {
    case FamilyKind::Gaussian: d = (y - mu) * (y - mu); break;
    case FamilyKind::Poisson: d = Scalar(2) * (detail::xlogy_ratio(y, mu) - (y - mu)); break;
    case FamilyKind::Binomial:
    case FamilyKind::Bernoulli: {
        const Scalar m = f.m();
        d = Scalar(2) * (detail::xlogy_ratio(y, mu) + detail::xlogy_ratio(m - y, m - mu));
        break;
    }
    case FamilyKind::Gamma:
        if (!(y > Scalar(0))) throw DomainError("unit_deviance: gamma response must be positive");
        d = Scalar(2) * (-log(y / mu) + (y - mu) / mu);
        break;
    }
    return d < Scalar(0) ? Scalar(0) : d;
}

} // namespace linkglm
