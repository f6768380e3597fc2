#include "linkglm/estimators.hpp"
#include "linkglm/simlab.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace linkglm;
using F = Family<double>;
using Vec = Vector<double>;
using Mat = Matrix<double>;

namespace {

Mat random_design(Index n, Index d, std::mt19937_64& rng, bool intercept = true)
{
    std::normal_distribution<double> z;
    Mat X(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) X(i, j) = (intercept && j == 0) ? 1.0 : z(rng);
    return X;
}

Vec responses(const F& f, const Mat& X, const Vec& beta, std::mt19937_64& rng)
{
    return sim::sample_responses(f, Vec(X * beta), rng);
}

double coordinate_objective(const F& f, double y, double eta_hat, double lambda, Index n, double t)
{
    return oracle::nll(f.kind, f.trials, y, eta_hat + std::sqrt(double(n)) * t) / double(n) + lambda * std::abs(t);
}

} // namespace

TEST_SUITE("estimators")
{
    TEST_CASE("objective values")
    {
        Mat X = Mat::Ones(1, 1);
        CHECK(objective(F::gaussian(), X, Vec(Vec::Zero(1)), Vec(Vec::Zero(1)), Vec(Vec::Zero(1)), 1.0) == 0.0);
        CHECK(objective(F::poisson(), X, Vec(Vec::Ones(1)), Vec(Vec::Zero(1)), Vec(Vec::Zero(1)), 3.0) == doctest::Approx(1.0).epsilon(1e-15));
    }

    TEST_CASE("objective matches a straight-line evaluation")
    {
        std::mt19937_64 rng(4);
        for (const auto& f : {F::gaussian(), F::poisson(), F::binomial(25), F::bernoulli(), F::gamma(3.0)}) {
            const Mat X = random_design(20, 3, rng);
            const Vec beta = 0.3 * Vec::Random(3);
            Vec xi = 0.05 * Vec::Random(20);
            const Vec y = responses(f, X, beta, rng);
            const double lib = objective(f, X, y, beta, xi, 0.7);
            const double ref = oracle::penalized_objective(f.kind, f.trials, X, y, beta, xi, 0.7);
            CHECK(std::abs(lib - ref) <= 1e-12 * (1.0 + std::abs(ref)));
        }
    }

    TEST_CASE("objective rejects inadmissible predictors")
    {
        Mat X = Mat::Ones(2, 1);
        CHECK_THROWS_AS(objective(F::gamma(1.0, LinkKind::Canonical), X, Vec(Vec::Ones(2)), Vec(Vec::Ones(1)), Vec(Vec::Zero(2)), 0.1), DomainError);
    }

    TEST_CASE("smooth gradient matches finite differences")
    {
        std::mt19937_64 rng(8);
        for (const auto& f : {F::gaussian(2.0), F::poisson(), F::binomial(5), F::gamma(4.0)}) {
            const Mat X = random_design(15, 3, rng);
            const Vec beta = 0.2 * Vec::Random(3);
            const Vec xi = 0.05 * Vec::Random(15);
            const Vec y = responses(f, X, beta, rng);
            Vec theta(18);
            theta << beta, xi;
            auto fn = [&](const Vec& t) { return smooth_objective(f, X, y, Vec(t.head(3)), Vec(t.tail(15))); };
            const Vec fd = oracle::fd_gradient(fn, theta);
            const Vec an = smooth_gradient(f, X, y, beta, xi);
            CHECK((an - fd).cwiseAbs().maxCoeff() / (1.0 + an.cwiseAbs().maxCoeff()) < 1e-6);
        }
    }

    TEST_CASE("xi update values")
    {
        CHECK(xi_update(F::gaussian(), 3.0, 1.0, 0.5, 4) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(xi_update(F::poisson(), 10.0, 0.0, 0.1, 100) == doctest::Approx(0.219722457733621938).epsilon(1e-14));
        CHECK(xi_update(F::poisson(), std::exp(0.4), 0.4, 0.0, 9) == doctest::Approx(0.0).scale(1.0));
        CHECK(xi_update(F::binomial(25), 5.0, std::log(0.25), 0.01, 50) == doctest::Approx(0.0).scale(1.0));
        CHECK(xi_update(F::gamma(2.0), std::exp(1.5), 1.5, 0.2, 30) == 0.0);
    }

    TEST_CASE("xi update agrees with golden-section search")
    {
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> u(0, 1);
        for (const auto& f : {F::gaussian(), F::poisson(), F::binomial(10), F::gamma(3.0)}) {
            for (int k = 0; k < 40; ++k) {
                const Index n = 10 + static_cast<Index>(u(rng) * 200);
                const double eta = -1.0 + 2.0 * u(rng);
                double y = 0;
                if (f.kind == FamilyKind::Gaussian) y = eta + 4.0 * (u(rng) - 0.5);
                if (f.kind == FamilyKind::Poisson) y = std::floor(10.0 * u(rng));
                if (f.kind == FamilyKind::Binomial) y = std::floor(11.0 * u(rng));
                if (f.kind == FamilyKind::Gamma) y = 0.1 + 5.0 * u(rng);
                const double lambda = 0.3 * u(rng);
                bool clamped = false;
                const double xi = xi_update(f, y, eta, lambda, n, &clamped);
                if (clamped) continue;
                const double g = oracle::golden_section([&](double t) { return coordinate_objective(f, y, eta, lambda, n, t); },
                                                        -5.0, 5.0);
                CHECK(std::abs(xi - g) < 1e-7);
            }
        }
    }

    TEST_CASE("xi update for a zero count stays inside the mean space")
    {
        bool clamped = false;
        const double xi = xi_update(F::poisson(), 0.0, 2.0, 0.3, 25, &clamped);
        CHECK_FALSE(clamped);
        CHECK(xi == doctest::Approx((std::log(1.5) - 2.0) / 5.0).epsilon(1e-14));
    }

    TEST_CASE("one beta step from zero gives least squares for the gaussian family")
    {
        std::mt19937_64 rng(3);
        const Mat X = random_design(30, 4, rng);
        const Vec y = Vec::Random(30);
        const Vec ols = X.colPivHouseholderQr().solve(y);
        const Vec b = beta_update(F::gaussian(), X, y, Vec(Vec::Zero(4)), Vec(Vec::Zero(30)));
        CHECK((b - ols).cwiseAbs().maxCoeff() < 1e-10);
        const Vec again = beta_update(F::gaussian(), X, y, b, Vec(Vec::Zero(30)));
        CHECK((again - b).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("beta step reports rank deficiency")
    {
        std::mt19937_64 rng(3);
        Mat X = random_design(20, 3, rng);
        X.col(2) = 2.0 * X.col(1);
        try {
            (void)fit_glm(F::gaussian(), X, Vec(Vec::Random(20)));
            FAIL("expected RankDeficiencyError");
        } catch (const RankDeficiencyError& e) {
            CHECK(e.columns.size() == 1);
            CHECK((e.columns[0] == 1 || e.columns[0] == 2));
        }
    }

    TEST_CASE("poisson fit matches a textbook IRLS")
    {
        std::mt19937_64 rng(17);
        const Mat X = random_design(50, 3, rng);
        Vec beta(3);
        beta << 0.5, 0.3, -0.2;
        const Vec y = responses(F::poisson(), X, beta, rng);
        const Vec ref = oracle::irls(FamilyKind::Poisson, 1, X, y);
        const auto fit = fit_glm(F::poisson(), X, y);
        CHECK(fit.converged);
        CHECK((fit.beta - ref).cwiseAbs().maxCoeff() < 1e-8);
        // beta_update iterated with xi = 0 reaches the same point
        Vec b = Vec::Zero(3);
        for (int k = 0; k < 100; ++k) b = beta_update(F::poisson(), X, y, b, Vec(Vec::Zero(50)));
        CHECK((b - ref).cwiseAbs().maxCoeff() < 1e-8);
    }

    TEST_CASE("glm fits: closed forms and score equations")
    {
        std::mt19937_64 rng(23);
        const Mat X = random_design(40, 3, rng);
        const Vec y = Vec::Random(40);
        const Vec ols = (X.transpose() * X).ldlt().solve(X.transpose() * y);
        CHECK((fit_glm(F::gaussian(), X, y).beta - ols).cwiseAbs().maxCoeff() < 1e-10);

        const Mat ones = Mat::Ones(25, 1);
        Vec counts(25);
        for (Index i = 0; i < 25; ++i) counts(i) = double(i % 7);
        CHECK(fit_glm(F::poisson(), ones, counts).beta(0) == doctest::Approx(std::log(counts.mean())).epsilon(1e-12));

        const Mat Xb = random_design(100, 5, rng);
        Vec bb(5);
        bb << 0.2, -0.3, 0.1, 0.25, -0.15;
        const Vec yb = responses(F::binomial(25), Xb, bb, rng);
        const auto fit = fit_glm(F::binomial(25), Xb, yb);
        Vec mu(100);
        for (Index i = 0; i < 100; ++i) mu(i) = mean(F::binomial(25), Xb.row(i).dot(fit.beta));
        CHECK((Xb.transpose() * (yb - mu)).cwiseAbs().maxCoeff() < 1e-6);
    }

    TEST_CASE("glm fit reports divergence under complete separation")
    {
        Mat X(6, 2);
        X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
        Vec y(6);
        y << 0, 0, 0, 1, 1, 1;
        CHECK_THROWS_AS(fit_glm(F::bernoulli(), X, y), NumericError);
    }

    TEST_CASE("penalized fit above lambda_max coincides with the naive fit")
    {
        std::mt19937_64 rng(31);
        for (const auto& f : {F::gaussian(), F::poisson(), F::binomial(5)}) {
            const Mat X = random_design(80, 4, rng);
            const Vec y = responses(f, X, Vec(0.3 * Vec::Ones(4)), rng);
            const auto naive = fit_glm(f, X, y);
            const double lmax = lambda_max(f, X, y, naive.beta);
            const auto fit = fit_penalized(f, X, y, 2.0 * lmax);
            CHECK(fit.converged);
            CHECK(fit.xi.cwiseAbs().maxCoeff() == 0.0);
            CHECK((fit.beta - naive.beta).cwiseAbs().maxCoeff() < 1e-10);
        }
    }

    TEST_CASE("penalized fit: descent and optimality conditions")
    {
        std::mt19937_64 rng(41);
        for (const auto& f : {F::gaussian(), F::poisson(), F::binomial(8), F::gamma(5.0)}) {
            const Index n = 120;
            const Mat X = random_design(n, 3, rng);
            Vec beta(3);
            beta << 0.5, 0.4, -0.3;
            Vec y = responses(f, X, beta, rng);
            const auto pi = sim::generate_permutation_ksparse(n, 20, rng);
            y = permute(y, pi);
            const auto naive = fit_glm(f, X, y);
            const double lambda = 0.3 * lambda_max(f, X, y, naive.beta);
            FitOptions opts;
            opts.max_iter = 5000;
            const auto fit = fit_penalized(f, X, y, lambda, opts);
            CHECK(fit.converged);
            for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
                CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] + 1e-10);
            const Vec g = smooth_gradient(f, X, y, fit.beta, fit.xi);
            CHECK(g.head(3).cwiseAbs().maxCoeff() < 1e-6);
            for (Index i = 0; i < n; ++i) {
                const double gi = g(3 + i);
                if (fit.xi(i) == 0.0) {
                    CHECK(std::abs(gi) <= lambda + 1e-6);
                } else {
                    CHECK(std::abs(gi + lambda * sign_of(fit.xi(i))) < 1e-6);
                }
            }
        }
    }

    TEST_CASE("offset magnitude decreases along the lambda path")
    {
        std::mt19937_64 rng(43);
        const Index n = 100;
        const Mat X = random_design(n, 3, rng);
        Vec y = responses(F::gaussian(), X, Vec(Vec::Ones(3)), rng);
        y = permute(y, sim::generate_permutation_ksparse(n, 15, rng));
        const double lmax = lambda_max(F::gaussian(), X, y, fit_glm(F::gaussian(), X, y).beta);
        double prev = -1.0;
        for (double c : sim::log_grid(0.05, 1.2, 10)) {
            const auto fit = fit_penalized(F::gaussian(), X, y, c * lmax);
            const double l1 = fit.xi.lpNorm<1>();
            if (prev >= 0.0) CHECK(l1 <= prev + 1e-12);
            prev = l1;
        }
    }

    TEST_CASE("lambda zero attains a perfect fit")
    {
        std::mt19937_64 rng(47);
        for (const auto& f : {F::gaussian(), F::poisson()}) {
            const Mat X = random_design(12, 2, rng);
            Vec y = responses(f, X, Vec(Vec::Ones(2)), rng);
            for (Index i = 0; i < y.size(); ++i) y(i) = std::max(y(i), f.kind == FamilyKind::Poisson ? 1.0 : y(i));
            FitOptions opts;
            opts.max_iter = 2000;
            const auto fit = fit_penalized(f, X, y, 0.0, opts);
            const Vec eta = linear_predictors(X, fit.beta, fit.xi);
            for (Index i = 0; i < y.size(); ++i) CHECK(std::abs(mean(f, eta(i)) - y(i)) < 1e-6);
        }
    }

    TEST_CASE("without mismatches the penalized fit stays close to the oracle")
    {
        std::mt19937_64 rng(53);
        const Index n = 400, d = 5;
        const Mat X = random_design(n, d, rng);
        const Vec beta = Vec::Ones(d) * 0.5;
        const Vec y = responses(F::gaussian(), X, beta, rng);
        const double lambda = sim::lambda_grid(std::sqrt(1.0 + 0.25 * (d - 1)), n, d, {1.0})[0];
        const auto fit = fit_penalized(F::gaussian(), X, y, lambda);
        const auto oracle_fit = fit_glm(F::gaussian(), X, y);
        CHECK((fit.beta - oracle_fit.beta).norm() < 0.05);
        CHECK((fit.xi.array() != 0.0).count() < n / 10);
    }

    TEST_CASE("sum-zero soft threshold solves its subproblem")
    {
        std::mt19937_64 rng(59);
        for (int rep = 0; rep < 50; ++rep) {
            const Index m = 2 + rep % 6;
            Vec x = Vec::Random(m), g = Vec::Random(m), h = (Vec::Random(m).array() + 1.5).matrix();
            const double lambda = 0.2 * (rep % 4);
            std::vector<Index> idx(static_cast<std::size_t>(m));
            std::iota(idx.begin(), idx.end(), Index{0});
            Vec t = Vec::Zero(m);
            detail::solve_sum_zero_soft_threshold(idx, x, g, h, lambda, t);
            CHECK(std::abs(t.sum()) < 1e-12);
            // optimality: no feasible pairwise transfer improves the model
            auto model = [&](const Vec& v) {
                double s = 0;
                for (Index i = 0; i < m; ++i) s += g(i) * (v(i) - x(i)) + 0.5 * h(i) * (v(i) - x(i)) * (v(i) - x(i)) + lambda * std::abs(v(i));
                return s;
            };
            const double base = model(t);
            for (Index a = 0; a < m; ++a)
                for (Index b = 0; b < m; ++b) {
                    if (a == b) continue;
                    Vec v = t;
                    v(a) += 1e-4;
                    v(b) -= 1e-4;
                    CHECK(model(v) >= base - 1e-12);
                }
        }
    }

    TEST_CASE("constrained fit: singletons reduce to the naive fit")
    {
        std::mt19937_64 rng(61);
        const Mat X = random_design(30, 3, rng);
        const Vec y = responses(F::poisson(), X, Vec(0.3 * Vec::Ones(3)), rng);
        const auto fit = fit_penalized_constrained(F::poisson(), X, y, 0.01, BlockPartition::singletons(30));
        CHECK(fit.xi.cwiseAbs().maxCoeff() == 0.0);
        CHECK((fit.beta - fit_glm(F::poisson(), X, y).beta).cwiseAbs().maxCoeff() < 1e-10);
    }

    TEST_CASE("constrained fit matches the sign-enumeration oracle")
    {
        std::mt19937_64 rng(67);
        for (int rep = 0; rep < 6; ++rep) {
            const Index n = 8;
            const Mat X = random_design(n, 2, rng);
            Vec y = X * Vec::Ones(2) + 0.3 * Vec::Random(n);
            y(1) += 4.0;
            y(5) -= 3.0;
            const BlockPartition blocks = rep % 2 == 0 ? BlockPartition::single(n) : BlockPartition::consecutive({3, 1, 4});
            const double lambda = 0.05 + 0.1 * rep;
            FitOptions opts;
            opts.max_iter = 20000;
            opts.tol = 1e-11;
            opts.rel_objective_tol = 1e-14;
            const auto fit = fit_penalized_constrained(F::gaussian(), X, y, lambda, blocks, opts);
            const double ref = oracle::gaussian_constrained_minimum(X, y, lambda, blocks);
            CHECK(fit.objective() == doctest::Approx(ref).epsilon(1e-5));
            for (const auto& g : blocks.groups()) {
                double s = 0;
                for (Index i : g) s += fit.xi(i);
                CHECK(std::abs(s) < 1e-10);
                if (g.size() == 1) CHECK(fit.xi(g[0]) == 0.0);
            }
        }
    }

    TEST_CASE("a swapped pair in a block of two gives opposite offsets")
    {
        std::mt19937_64 rng(71);
        const Index n = 40;
        const Mat X = random_design(n, 2, rng);
        Vec y = X * Vec::Ones(2) + 0.1 * Vec::Random(n);
        y(0) += 5.0;
        y(1) -= 5.0;
        std::vector<Index> sizes{2};
        sizes.insert(sizes.end(), static_cast<std::size_t>(n - 2), 1);
        const auto fit = fit_penalized_constrained(F::gaussian(), X, y, 0.05, BlockPartition::consecutive(sizes));
        CHECK(fit.xi(0) > 0.0);
        CHECK(fit.xi(0) == doctest::Approx(-fit.xi(1)).epsilon(1e-10));
    }

    TEST_CASE("constrained fit keeps block sums at zero for non-gaussian families")
    {
        std::mt19937_64 rng(73);
        const Index n = 150;
        const Mat X = random_design(n, 3, rng);
        const auto blocks = BlockPartition::consecutive(std::vector<Index>(30, 5));
        for (const auto& f : {F::poisson(), F::binomial(10)}) {
            Vec y = responses(f, X, Vec(0.4 * Vec::Ones(3)), rng);
            y = permute(y, sim::generate_permutation_blocks(blocks, rng));
            const auto fit = fit_penalized_constrained(f, X, y, 0.02, blocks);
            CHECK(fit.converged);
            for (const auto& g : blocks.groups()) {
                double s = 0;
                for (Index i : g) s += fit.xi(i);
                CHECK(std::abs(s) < 1e-10);
            }
            for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
                CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] + 1e-10);
        }
    }

    TEST_CASE("merged dataset validation")
    {
        MergedDataset<double> d;
        d.X = Mat::Ones(3, 1);
        d.y = Vec::Ones(3);
        CHECK_NOTHROW(d.validate(F::poisson()));
        d.y(0) = -1;
        CHECK_THROWS_AS(d.validate(F::poisson()), InvalidInput);
        d.y << 1, 2, 3;
        d.truth = GroundTruth<double>{Vec((Vec(3) << 2, 1, 3).finished()), IndexMap{1, 0, 2}};
        CHECK_NOTHROW(d.validate(F::poisson()));
        d.truth->pi_star = {0, 1, 2};
        CHECK_THROWS_AS(d.validate(F::poisson()), InvalidInput);
    }
}
