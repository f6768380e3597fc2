#pragma once

// Synthetic experiments: random designs, coefficient and permutation
// generation, lambda calibration and a replication runner.

#include "linkglm/block_partition.hpp"
#include "linkglm/estimators.hpp"
#include "linkglm/family.hpp"
#include "linkglm/rng.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace linkglm::sim {

using Vec = Vector<double>;
using Mat = Matrix<double>;

enum class Design { StdNormal, UniformSqrt3, RescaledT5 };
enum class PermutationScheme { KSparse, BlockUniform };
enum class SigmaMode { KnownBeta, DataOnly };
enum class Method { Naive, Oracle, Proposed, Constrained, LahiriLarsen, Chambers, Sorting };

std::string to_string(Design d);
std::string to_string(PermutationScheme p);
std::string to_string(SigmaMode m);
std::string to_string(Method m);
Design parse_design(const std::string& s);
PermutationScheme parse_permutation_scheme(const std::string& s);
SigmaMode parse_sigma_mode(const std::string& s);
Method parse_method(const std::string& s);

/// True for methods whose estimate depends on lambda.
bool lambda_dependent(Method m);

struct SimulationScenario {
    std::string name = "scenario";
    Family<double> family = Family<double>::poisson();
    Index n = 1000;
    Index d = 50;                   // columns of X, intercept included
    double beta_norm = 1.0;         // ||beta*||_2 over the non-intercept coefficients
    double intercept = 0.0;         // beta_0*
    double mismatch_fraction = 0.0; // k / n for KSparse
    Design design = Design::UniformSqrt3;
    PermutationScheme permutation = PermutationScheme::KSparse;
    std::vector<Index> block_sizes; // BlockUniform: consecutive blocks
    std::vector<double> prefactors;
    int replications = 100;
    std::uint64_t seed = 1;
    SigmaMode sigma_mode = SigmaMode::KnownBeta;
    std::vector<Method> methods{Method::Naive, Method::Oracle, Method::Proposed};
    FitOptions fit_options{};
    int threads = 0;                // 0: hardware concurrency

    void validate() const;
    Index k() const;
    BlockPartition blocks() const;
};

/// Logarithmically spaced values from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int count);

/// n x p matrix of i.i.d. unit-variance entries.
Mat generate_design(Design design, Index n, Index p, std::mt19937_64& rng);
Mat generate_design(Design design, Index n, Index p, std::uint64_t seed);
Mat with_intercept(const Mat& x);

/// N(0, I) draw rescaled to the given l2 norm (uniform direction on the sphere).
Vec generate_beta(Index d, double norm, std::mt19937_64& rng);
Vec generate_beta(Index d, double norm, std::uint64_t seed);

/// Uniform over maps moving exactly k indices: random k-subset, random
/// permutation of it, redrawn while it has a fixed point.
IndexMap generate_permutation_ksparse(Index n, Index k, std::mt19937_64& rng);
IndexMap generate_permutation_ksparse(Index n, Index k, std::uint64_t seed);

/// Independent uniform permutation within every block.
IndexMap generate_permutation_blocks(const BlockPartition& blocks, std::mt19937_64& rng);
IndexMap generate_permutation_blocks(const BlockPartition& blocks, std::uint64_t seed);

/// One response per mean; binomial responses are sums of m Bernoulli draws.
Vec sample_responses(const Family<double>& f, const Vec& eta, std::mt19937_64& rng);

/// Gauss-Hermite nodes and weights for integrals against the standard normal density.
struct Quadrature {
    Vec nodes;
    Vec weights;
};
Quadrature gauss_hermite_normal(int points);

/// Expected conditional SD of y, E[sqrt(Var(y|eta))] with eta ~ N(intercept, beta_norm^2),
/// by quadrature.
double sigma_y_known(const Family<double>& f, double intercept, double beta_norm, int points = 80);

/// sqrt(mean of the variance function evaluated at the responses).
double sigma_y_data(const Family<double>& f, const Vec& y);

/// lambda = C * sigma_y * sqrt(log(n + d) / n) for every pre-factor C.
std::vector<double> lambda_grid(double sigma_y, Index n, Index d, const std::vector<double>& prefactors);
std::vector<double> lambda_grid(const Family<double>& f, const SimulationScenario& s);

/// sum_i d(mu_star_i, mu_hat_i) with d the unit deviance.
double deviance_between_means(const Family<double>& f, const Vec& mu_star, const Vec& mu_hat);

struct MethodRecord {
    Method method = Method::Naive;
    double prefactor = 0.0;
    double lambda = 0.0;
    double beta_error = 0.0;
    double theta_error = 0.0;
    double deviance = 0.0;
    double hamming = 0.0;
    bool converged = true;
    int iterations = 0;
    bool na = false;
    double runtime_ms = 0.0;

    bool operator==(const MethodRecord&) const = default;
};

struct ReplicationResult {
    int replication = 0;
    double sigma_y = 0.0;
    double lambda_max = 0.0;
    double realized_mismatch_fraction = 0.0;
    std::vector<MethodRecord> records;

    bool operator==(const ReplicationResult&) const = default;
};

/// Ground-truth data of one replication.
struct ReplicationData {
    Mat X;
    Vec beta_star;
    Vec y_star;
    Vec y;
    IndexMap pi_star;
    BlockPartition blocks;
};

ReplicationData draw_replication(const SimulationScenario& s, int replication);
ReplicationResult run_replication(const SimulationScenario& s, int replication);

/// Runs all replications (in parallel when threads > 1); output ordered by index.
std::vector<ReplicationResult> run_replications(const SimulationScenario& s);

/// Pre-factor with the smallest mean theta error for the proposed method.
double best_prefactor(const std::vector<ReplicationResult>& results, Method m = Method::Proposed);

} // namespace linkglm::sim
