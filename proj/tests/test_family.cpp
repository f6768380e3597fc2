#include "linkglm/family.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace linkglm;
using F = Family<double>;

namespace {

std::vector<F> all_families()
{
    return {F::gaussian(1.0), F::gaussian(4.0), F::poisson(), F::binomial(25), F::bernoulli(), F::gamma(5.0),
            F::gamma(5.0, LinkKind::Canonical)};
}

double random_eta(const F& f, std::mt19937_64& rng)
{
    if (f.kind == FamilyKind::Gamma && f.link == LinkKind::Canonical) return -std::exp(std::uniform_real_distribution<>(-3, 3)(rng));
    return std::uniform_real_distribution<>(-5, 5)(rng);
}

} // namespace

TEST_SUITE("family")
{
    TEST_CASE("cumulant values")
    {
        CHECK(cumulant(F::poisson(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(cumulant(F::gaussian(), 2.0) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(cumulant(F::binomial(25), 0.0) == doctest::Approx(17.3286795139986327).epsilon(1e-14));
        CHECK(std::isfinite(cumulant(F::binomial(3), 800.0)));
        CHECK(cumulant(F::binomial(3), 800.0) == doctest::Approx(2400.0));
        CHECK_THROWS_AS(cumulant(F::gamma(2.0, LinkKind::Canonical), 0.5), DomainError);
        CHECK_THROWS_AS(cumulant(F::poisson(), std::nan("")), DomainError);
    }

    TEST_CASE("mean and link")
    {
        CHECK(mean(F::poisson(), 0.0) == 1.0);
        CHECK(mean(F::binomial(25), 0.0) == doctest::Approx(12.5).epsilon(1e-15));
        CHECK(linear_predictor(F::gamma(3.0), std::exp(2.0)) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK_THROWS_AS(linear_predictor(F::poisson(), 0.0), DomainError);
        CHECK_THROWS_AS(linear_predictor(F::binomial(4), 4.0), DomainError);
        CHECK_THROWS_AS(linear_predictor(F::gamma(1.0), -1.0), DomainError);
    }

    TEST_CASE("variance values")
    {
        CHECK(variance(F::gaussian(4.0), 0.3) == 4.0);
        CHECK(variance(F::gaussian(4.0), -7.0) == 4.0);
        CHECK(variance(F::poisson(), std::log(3.0)) == doctest::Approx(3.0).epsilon(1e-14));
        CHECK(variance(F::gamma(50.0), std::log(10.0)) == doctest::Approx(2.0).epsilon(1e-14));
    }

    TEST_CASE("gamma variance matches sampled variance")
    {
        std::mt19937_64 rng(11);
        std::gamma_distribution<double> g(50.0, 10.0 / 50.0);
        const int draws = 1000000;
        double s = 0, s2 = 0;
        for (int i = 0; i < draws; ++i) {
            const double v = g(rng);
            s += v;
            s2 += v * v;
        }
        const double m = s / draws;
        const double var = (s2 - draws * m * m) / (draws - 1);
        CHECK(var == doctest::Approx(variance(F::gamma(50.0), std::log(10.0))).epsilon(0.01));
    }

    TEST_CASE("tail probability values")
    {
        CHECK(tail_probability(F::gaussian(), 0.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(tail_probability(F::poisson(), std::log(4.0), 4.0) == doctest::Approx(0.566529879633291066).epsilon(1e-12));
        CHECK(tail_probability(F::gaussian(), 0.0, 1.96) == doctest::Approx(0.0249978951482204362).epsilon(1e-12));
        CHECK(tail_probability(F::gaussian(), 0.0, -1.96) == doctest::Approx(0.0249978951482204362).epsilon(1e-12));
    }

    TEST_CASE("tail probability is a monotone probability above the mean")
    {
        std::mt19937_64 rng(5);
        for (const auto& f : all_families()) {
            for (int rep = 0; rep < 20; ++rep) {
                const double eta = std::uniform_real_distribution<>(-1.5, 1.5)(rng);
                const double eta_adm = f.kind == FamilyKind::Gamma && f.link == LinkKind::Canonical ? -std::exp(eta) : eta;
                const double mu = mean(f, eta_adm);
                double prev = 1.0;
                for (int k = 0; k < 40; ++k) {
                    double y = mu + 0.25 * k * std::sqrt(variance(f, eta_adm));
                    if (f.kind == FamilyKind::Binomial || f.kind == FamilyKind::Bernoulli) y = std::min(y, double(f.m()));
                    const double p = tail_probability(f, eta_adm, y);
                    CHECK(p >= 0.0);
                    CHECK(p <= 1.0);
                    CHECK(p <= prev + 1e-15);
                    prev = p;
                }
            }
        }
    }

    TEST_CASE("unit deviance values")
    {
        CHECK(unit_deviance(F::poisson(), 5.0, 5.0) == 0.0);
        CHECK(unit_deviance(F::poisson(), 2.0, 1.0) == doctest::Approx(0.772588722239781238).epsilon(1e-14));
        CHECK(unit_deviance(F::gaussian(), 3.0, 1.0) == doctest::Approx(4.0).epsilon(1e-15));
        CHECK(unit_deviance(F::poisson(), 0.0, 2.0) == doctest::Approx(4.0).epsilon(1e-15));
        CHECK_THROWS_AS(unit_deviance(F::poisson(), 1.0, 0.0), DomainError);
    }

    TEST_CASE("link round trip")
    {
        std::mt19937_64 rng(1);
        for (const auto& f : all_families()) {
            for (int k = 0; k < 200; ++k) {
                const double eta = random_eta(f, rng);
                CHECK(std::abs(linear_predictor(f, mean(f, eta)) - eta) <= 1e-10 * (1.0 + std::abs(eta)));
            }
        }
    }

    TEST_CASE("mean derivative matches finite differences")
    {
        std::mt19937_64 rng(2);
        for (const auto& f : all_families()) {
            for (int k = 0; k < 50; ++k) {
                const double eta = random_eta(f, rng);
                const double h = 1e-5 * (1.0 + std::abs(eta));
                const double fd = (mean(f, eta + h) - mean(f, eta - h)) / (2 * h);
                const double an = mean_derivative(f, eta);
                CHECK(an > 0.0);
                CHECK(std::abs(an - fd) / (1.0 + std::abs(an)) < 1e-6);
            }
        }
    }

    TEST_CASE("nll derivatives match finite differences")
    {
        std::mt19937_64 rng(3);
        for (const auto& f : all_families()) {
            for (int k = 0; k < 50; ++k) {
                const double eta = random_eta(f, rng) * 0.5;
                const double y = f.kind == FamilyKind::Gaussian ? 0.7 : (f.kind == FamilyKind::Gamma ? 1.3 : 1.0);
                const double h = 1e-5;
                const double g = (nll(f, y, eta + h) - nll(f, y, eta - h)) / (2 * h);
                const double hs = (nll_gradient(f, y, eta + h) - nll_gradient(f, y, eta - h)) / (2 * h);
                CHECK(std::abs(nll_gradient(f, y, eta) - g) / (1.0 + std::abs(g)) < 1e-6);
                CHECK(std::abs(nll_hessian(f, y, eta) - hs) / (1.0 + std::abs(hs)) < 1e-6);
            }
        }
    }

    TEST_CASE("unit deviance vanishes only at the mean and is convex in the mean")
    {
        for (const auto& f : {F::gaussian(), F::poisson(), F::binomial(10), F::gamma(2.0)}) {
            for (double y : {0.5, 1.0, 3.0, 7.0}) {
                if (!in_support(f, y)) continue;
                CHECK(unit_deviance(f, y, y) <= 1e-12);
                CHECK(unit_deviance(f, y, y * 1.01) > 0.0);
                // The gamma deviance is convex in mu only on (0, 2y].
                const double hi = f.kind == FamilyKind::Gamma ? 2.0 * y : (f.kind == FamilyKind::Binomial ? 9.9 : 3.0 * y + 2);
                const double lo = 0.05;
                const int steps = 200;
                const double dm = (hi - lo) / steps;
                for (int k = 1; k < steps; ++k) {
                    const double m = lo + k * dm;
                    const double second = unit_deviance(f, y, m - dm) - 2 * unit_deviance(f, y, m) + unit_deviance(f, y, m + dm);
                    CHECK(second >= -1e-8);
                }
            }
        }
    }

    TEST_CASE("family validation")
    {
        CHECK_THROWS_AS(F::gaussian(0.0), InvalidInput);
        CHECK_THROWS_AS(F::binomial(0), InvalidInput);
        CHECK_THROWS_AS(F::gamma(-1.0), InvalidInput);
        F f = F::poisson();
        f.link = LinkKind::Log;
        CHECK_THROWS_AS(f.validate(), InvalidInput);
        CHECK(parse_family_kind("binomial") == FamilyKind::Binomial);
        CHECK_THROWS_AS(parse_family_kind("negbin"), InvalidInput);
        CHECK(F::gamma(4.0).dispersion == doctest::Approx(0.25));
    }

    TEST_CASE("overflow guards")
    {
        bool clamped = false;
        CHECK(detail::clamp_eta(1000.0, &clamped) == kEtaBound);
        CHECK(clamped);
        CHECK(std::isfinite(mean(F::binomial(5), 1000.0)));
        CHECK(mean(F::binomial(5), -1000.0) >= 0.0);
        CHECK(std::isfinite(nll(F::binomial(5), 2.0, 800.0)));
    }
}
