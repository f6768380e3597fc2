#include "linkglm/baselines.hpp"
#include "linkglm/simlab.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace linkglm;
using F = Family<double>;
using Vec = Vector<double>;
using Mat = Matrix<double>;

namespace {

Mat design(Index n, Index d, std::mt19937_64& rng)
{
    std::normal_distribution<double> z;
    Mat X(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) X(i, j) = j == 0 ? 1.0 : z(rng);
    return X;
}

Mat permutation_matrix(const IndexMap& map)
{
    const auto n = static_cast<Index>(map.size());
    Mat p = Mat::Zero(n, n);
    for (Index i = 0; i < n; ++i) p(i, map[static_cast<std::size_t>(i)]) = 1.0;
    return p;
}

} // namespace

TEST_SUITE("baselines")
{
    TEST_CASE("exchange operator identities")
    {
        std::mt19937_64 rng(1);
        const auto blocks = BlockPartition::consecutive({3, 1, 4, 2, 2});
        const ExchangeOperator q(blocks);
        const Mat Q = q.dense();
        CHECK((Q - oracle::dense_q(blocks)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((Q * Q - Q).cwiseAbs().maxCoeff() < 1e-15);
        CHECK((Q - Q.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK((Q * Vec::Ones(12) - Vec::Ones(12)).cwiseAbs().maxCoeff() < 1e-15);
        for (int rep = 0; rep < 20; ++rep) {
            const Mat P = permutation_matrix(sim::generate_permutation_blocks(blocks, rng));
            CHECK((Q.transpose() * P - Q).cwiseAbs().maxCoeff() < 1e-15);
        }
        const Mat V = Mat::Random(12, 3);
        CHECK((q.apply(V) - Q * V).cwiseAbs().maxCoeff() < 1e-14);
    }

    TEST_CASE("estimating equations match dense evaluation")
    {
        std::mt19937_64 rng(2);
        const auto blocks = BlockPartition::consecutive({4, 4, 2, 1, 1});
        const ExchangeOperator q(blocks);
        const Mat Q = q.dense();
        const Mat X = design(12, 3, rng);
        const Vec beta = 0.3 * Vec::Random(3);
        for (const auto& f : {F::poisson(), F::binomial(4), F::gaussian()}) {
            const Vec y = sim::sample_responses(f, Vec(X * beta), rng);
            Vec mu(12);
            for (Index i = 0; i < 12; ++i) mu(i) = mean(f, X.row(i).dot(beta));
            const Vec ll = X.transpose() * Q.transpose() * (y - Q * mu);
            const Vec ch = X.transpose() * (y - Q * mu);
            CHECK((ll_equation(f, X, y, q, beta) - ll).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((chambers_equation(f, X, y, q, beta) - ch).cwiseAbs().maxCoeff() < 1e-12);
        }
    }

    TEST_CASE("singleton blocks reduce both equations to the GLM score")
    {
        std::mt19937_64 rng(3);
        const Mat X = design(30, 3, rng);
        const Vec y = sim::sample_responses(F::poisson(), Vec(X * Vec::Constant(3, 0.2)), rng);
        const ExchangeOperator q(BlockPartition::singletons(30));
        const Vec beta = Vec::Constant(3, 0.1);
        Vec mu(30);
        for (Index i = 0; i < 30; ++i) mu(i) = std::exp(X.row(i).dot(beta));
        const Vec score = X.transpose() * (y - mu);
        CHECK((ll_equation(F::poisson(), X, y, q, beta) - score).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((chambers_equation(F::poisson(), X, y, q, beta) - score).cwiseAbs().maxCoeff() < 1e-12);
        const auto glm = fit_glm(F::poisson(), X, y);
        const auto ll = fit_ll(F::poisson(), X, y, BlockPartition::singletons(30));
        const auto ch = fit_chambers(F::poisson(), X, y, BlockPartition::singletons(30));
        CHECK(ll.converged);
        CHECK(ch.converged);
        CHECK((ll.beta - glm.beta).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((ch.beta - glm.beta).cwiseAbs().maxCoeff() < 1e-8);
    }

    TEST_CASE("gaussian lahiri-larsen closed form and covariance")
    {
        std::mt19937_64 rng(4);
        const Index n = 60;
        std::vector<Index> sizes(20, 3);
        const auto blocks = BlockPartition::consecutive(sizes);
        const Mat X = design(n, 3, rng);
        const Vec y = X * Vec::Ones(3) + Vec::Random(n);
        const double phi = 2.5;
        const auto fit = fit_ll(F::gaussian(phi), X, y, blocks);
        const Mat Q = oracle::dense_q(blocks);
        const Mat xqx = X.transpose() * Q * X;
        const Vec closed = xqx.ldlt().solve(X.transpose() * Q * y);
        const Mat cov = phi * xqx.inverse();
        CHECK(fit.converged);
        CHECK((fit.beta - closed).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((fit.covariance - cov).cwiseAbs().maxCoeff() < 1e-10);
    }

    TEST_CASE("single block leaves the slope unidentified")
    {
        std::mt19937_64 rng(5);
        const Mat X = design(20, 2, rng);
        const Vec y = sim::sample_responses(F::poisson(), Vec(X * Vec::Constant(2, 0.3)), rng);
        CHECK_FALSE(fit_ll(F::poisson(), X, y, BlockPartition::single(20)).converged);
    }

    TEST_CASE("uniform within-block permutations average to the exchange operator")
    {
        std::mt19937_64 rng(6);
        const auto blocks = BlockPartition::consecutive({3, 4, 1, 2});
        Mat mean_p = Mat::Zero(10, 10);
        const int draws = 10000;
        for (int k = 0; k < draws; ++k) mean_p += permutation_matrix(sim::generate_permutation_blocks(blocks, rng));
        mean_p /= draws;
        CHECK((mean_p - oracle::dense_q(blocks)).cwiseAbs().maxCoeff() < 0.02);
    }

    TEST_CASE("covariances are symmetric positive semidefinite")
    {
        std::mt19937_64 rng(7);
        const Index n = 200;
        const auto blocks = BlockPartition::consecutive(std::vector<Index>(40, 5));
        const Mat X = design(n, 3, rng);
        const Vec beta = Vec::Constant(3, 0.3);
        Vec y = sim::sample_responses(F::poisson(), Vec(X * beta), rng);
        const auto pi = sim::generate_permutation_blocks(blocks, rng);
        y = permute(y, pi);
        for (const auto& fit : {fit_ll(F::poisson(), X, y, blocks), fit_chambers(F::poisson(), X, y, blocks)}) {
            CHECK(fit.converged);
            CHECK((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            Eigen::SelfAdjointEigenSolver<Mat> es(fit.covariance);
            CHECK(es.eigenvalues().minCoeff() > -1e-12);
        }
        CHECK(fit_chambers(F::poisson(), X, y, blocks).covariance_lower_bound);
    }

    TEST_CASE("lahiri-larsen is approximately unbiased under block mismatch")
    {
        const Index n = 250, d = 3;
        const auto blocks = BlockPartition::consecutive(std::vector<Index>(50, 5));
        std::mt19937_64 rng(8);
        const Mat X = design(n, d, rng);
        Vec beta(d);
        beta << 0.5, 0.4, -0.3;
        const Vec eta = X * beta;
        const int reps = 150;
        Mat est(reps, d);
        for (int r = 0; r < reps; ++r) {
            const Vec y_star = sim::sample_responses(F::poisson(), eta, rng);
            const Vec y = permute(y_star, sim::generate_permutation_blocks(blocks, rng));
            const auto fit = fit_ll(F::poisson(), X, y, blocks);
            REQUIRE(fit.converged);
            est.row(r) = fit.beta.transpose();
        }
        const Vec avg = est.colwise().mean().transpose();
        for (Index j = 0; j < d; ++j) {
            const double se = std::sqrt((est.col(j).array() - avg(j)).square().sum() / (reps - 1) / reps);
            CHECK(std::abs(avg(j) - beta(j)) < 3.5 * se);
        }
    }
}
