#include "linkglm/simlab.hpp"

#include "linkglm/baselines.hpp"
#include "linkglm/matching.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

namespace linkglm::sim {

std::string to_string(Design d)
{
    switch (d) {
    case Design::StdNormal: return "std_normal";
    case Design::UniformSqrt3: return "uniform_sqrt3";
    case Design::RescaledT5: return "rescaled_t5";
    }
    return "unknown";
}

std::string to_string(PermutationScheme p) { return p == PermutationScheme::KSparse ? "ksparse" : "block_uniform"; }

std::string to_string(SigmaMode m) { return m == SigmaMode::KnownBeta ? "known_beta" : "data_only"; }

std::string to_string(Method m)
{
    switch (m) {
    case Method::Naive: return "naive";
    case Method::Oracle: return "oracle";
    case Method::Proposed: return "proposed";
    case Method::Constrained: return "constrained";
    case Method::LahiriLarsen: return "ll";
    case Method::Chambers: return "chambers";
    case Method::Sorting: return "sorting";
    }
    return "unknown";
}

Design parse_design(const std::string& s)
{
    if (s == "std_normal") return Design::StdNormal;
    if (s == "uniform_sqrt3") return Design::UniformSqrt3;
    if (s == "rescaled_t5") return Design::RescaledT5;
    throw InvalidInput("unknown design '" + s + "'");
}

PermutationScheme parse_permutation_scheme(const std::string& s)
{
    if (s == "ksparse") return PermutationScheme::KSparse;
    if (s == "block_uniform") return PermutationScheme::BlockUniform;
    throw InvalidInput("unknown permutation scheme '" + s + "'");
}

SigmaMode parse_sigma_mode(const std::string& s)
{
    if (s == "known_beta") return SigmaMode::KnownBeta;
    if (s == "data_only") return SigmaMode::DataOnly;
    throw InvalidInput("unknown sigma mode '" + s + "'");
}

Method parse_method(const std::string& s)
{
    for (Method m : {Method::Naive, Method::Oracle, Method::Proposed, Method::Constrained, Method::LahiriLarsen,
                     Method::Chambers, Method::Sorting})
        if (to_string(m) == s) return m;
    throw InvalidInput("unknown method '" + s + "'");
}

bool lambda_dependent(Method m) { return m == Method::Proposed || m == Method::Constrained; }

void SimulationScenario::validate() const
{
    family.validate();
    if (n < 2) throw InvalidInput("n must be at least 2");
    if (d < 1 || d > n) throw InvalidInput("need 1 <= d <= n");
    if (!(beta_norm >= 0.0)) throw InvalidInput("beta_norm must be non-negative");
    if (!(mismatch_fraction >= 0.0 && mismatch_fraction < 1.0)) throw InvalidInput("mismatch_fraction must lie in [0, 1)");
    if (replications < 1) throw InvalidInput("replications must be positive");
    if (prefactors.empty()) throw InvalidInput("prefactor grid is empty");
    for (double c : prefactors)
        if (!(c > 0.0)) throw InvalidInput("prefactors must be positive");
    if (methods.empty()) throw InvalidInput("no methods selected");
    if (permutation == PermutationScheme::KSparse && k() == 1) throw InvalidInput("k = 1 admits no permutation without fixed points");
    if (permutation == PermutationScheme::BlockUniform) {
        Index total = 0;
        for (Index b : block_sizes) {
            if (b < 1) throw InvalidInput("block sizes must be positive");
            total += b;
        }
        if (total != n) throw InvalidInput("block sizes must sum to n");
    }
}

Index SimulationScenario::k() const
{
    return static_cast<Index>(std::llround(static_cast<double>(n) * mismatch_fraction));
}

BlockPartition SimulationScenario::blocks() const
{
    if (permutation == PermutationScheme::BlockUniform) return BlockPartition::consecutive(block_sizes);
    return BlockPartition::single(n);
}

std::vector<double> log_grid(double lo, double hi, int count)
{
    if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw InvalidInput("log_grid: need count >= 1 and 0 < lo <= hi");
    std::vector<double> g(static_cast<std::size_t>(count));
    if (count == 1) {
        g[0] = lo;
        return g;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
    g.back() = hi;
    return g;
}

Mat generate_design(Design design, Index n, Index p, std::mt19937_64& rng)
{
    Mat x(n, p);
    switch (design) {
    case Design::StdNormal: {
        std::normal_distribution<double> dist(0.0, 1.0);
        for (Index j = 0; j < p; ++j)
            for (Index i = 0; i < n; ++i) x(i, j) = dist(rng);
        break;
    }
    case Design::UniformSqrt3: {
        const double a = std::sqrt(3.0);
        std::uniform_real_distribution<double> dist(-a, a);
        for (Index j = 0; j < p; ++j)
            for (Index i = 0; i < n; ++i) x(i, j) = dist(rng);
        break;
    }
    case Design::RescaledT5: {
        std::student_t_distribution<double> dist(5.0);
        const double scale = std::sqrt(3.0 / 5.0);
        for (Index j = 0; j < p; ++j)
            for (Index i = 0; i < n; ++i) x(i, j) = scale * dist(rng);
        break;
    }
    }
    return x;
}

Mat generate_design(Design design, Index n, Index p, std::uint64_t seed)
{
    auto rng = make_stream(seed, 0, StreamPurpose::Design);
    return generate_design(design, n, p, rng);
}

Mat with_intercept(const Mat& x)
{
    Mat out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

Vec generate_beta(Index d, double norm, std::mt19937_64& rng)
{
    Vec b = Vec::Zero(d);
    if (d == 0 || norm == 0.0) return b;
    std::normal_distribution<double> dist(0.0, 1.0);
    do {
        for (Index j = 0; j < d; ++j) b(j) = dist(rng);
    } while (b.norm() == 0.0);
    b *= norm / b.norm();
    return b;
}

Vec generate_beta(Index d, double norm, std::uint64_t seed)
{
    auto rng = make_stream(seed, 0, StreamPurpose::Beta);
    return generate_beta(d, norm, rng);
}

IndexMap generate_permutation_ksparse(Index n, Index k, std::mt19937_64& rng)
{
    if (k < 0 || k > n) throw InvalidInput("k must lie in [0, n]");
    if (k == 1) throw InvalidInput("k = 1 admits no permutation without fixed points");
    IndexMap map = identity_map(n);
    if (k == 0) return map;
    // Random k-subset by partial Fisher-Yates.
    std::vector<Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Index(0));
    for (Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<Index> subset(pool.begin(), pool.begin() + k);
    std::sort(subset.begin(), subset.end());
    std::vector<Index> image = subset;
    bool has_fixed = true;
    while (has_fixed) {
        std::shuffle(image.begin(), image.end(), rng);
        has_fixed = false;
        for (std::size_t a = 0; a < subset.size(); ++a)
            if (image[a] == subset[a]) {
                has_fixed = true;
                break;
            }
    }
    for (std::size_t a = 0; a < subset.size(); ++a) map[static_cast<std::size_t>(subset[a])] = image[a];
    return map;
}

IndexMap generate_permutation_ksparse(Index n, Index k, std::uint64_t seed)
{
    auto rng = make_stream(seed, 0, StreamPurpose::Permutation);
    return generate_permutation_ksparse(n, k, rng);
}

IndexMap generate_permutation_blocks(const BlockPartition& blocks, std::mt19937_64& rng)
{
    IndexMap map = identity_map(blocks.n());
    for (const auto& g : blocks.groups()) {
        std::vector<Index> image = g;
        std::shuffle(image.begin(), image.end(), rng);
        for (std::size_t a = 0; a < g.size(); ++a) map[static_cast<std::size_t>(g[a])] = image[a];
    }
    return map;
}

IndexMap generate_permutation_blocks(const BlockPartition& blocks, std::uint64_t seed)
{
    auto rng = make_stream(seed, 0, StreamPurpose::Permutation);
    return generate_permutation_blocks(blocks, rng);
}

Vec sample_responses(const Family<double>& f, const Vec& eta, std::mt19937_64& rng)
{
    Vec y(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
        const double mu = mean(f, eta(i));
        switch (f.kind) {
        case FamilyKind::Gaussian: {
            std::normal_distribution<double> dist(mu, std::sqrt(f.dispersion));
            y(i) = dist(rng);
            break;
        }
        case FamilyKind::Poisson: {
            std::poisson_distribution<long long> dist(mu);
            y(i) = static_cast<double>(dist(rng));
            break;
        }
        case FamilyKind::Binomial:
        case FamilyKind::Bernoulli: {
            std::bernoulli_distribution dist(mu / f.m());
            int s = 0;
            for (int t = 0; t < f.trials; ++t) s += dist(rng) ? 1 : 0;
            y(i) = s;
            break;
        }
        case FamilyKind::Gamma: {
            std::gamma_distribution<double> dist(f.shape(), mu / f.shape());
            y(i) = dist(rng);
            break;
        }
        }
    }
    return y;
}

Quadrature gauss_hermite_normal(int points)
{
    if (points < 1) throw InvalidInput("quadrature needs at least one point");
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    Mat jacobi = Mat::Zero(points, points);
    for (int k = 1; k < points; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Mat> es(jacobi);
    Quadrature q;
    q.nodes = es.eigenvalues();
    q.weights = es.eigenvectors().row(0).transpose().array().square();
    return q;
}

double sigma_y_known(const Family<double>& f, double intercept, double beta_norm, int points)
{
    const auto q = gauss_hermite_normal(points);
    double e_sd = 0.0;
    for (Index k = 0; k < q.nodes.size(); ++k) e_sd += q.weights(k) * std::sqrt(variance(f, intercept + beta_norm * q.nodes(k)));
    return e_sd;
}

double sigma_y_data(const Family<double>& f, const Vec& y)
{
    double s = 0.0;
    for (Index i = 0; i < y.size(); ++i) s += variance_of_mean(f, y(i));
    return std::sqrt(std::max(0.0, s / static_cast<double>(y.size())));
}

std::vector<double> lambda_grid(double sigma_y, Index n, Index d, const std::vector<double>& prefactors)
{
    const double base = sigma_y * std::sqrt(std::log(static_cast<double>(n + d)) / static_cast<double>(n));
    std::vector<double> out;
    out.reserve(prefactors.size());
    for (double c : prefactors) out.push_back(c * base);
    return out;
}

std::vector<double> lambda_grid(const Family<double>& f, const SimulationScenario& s)
{
    return lambda_grid(sigma_y_known(f, s.intercept, s.beta_norm), s.n, s.d, s.prefactors);
}

double deviance_between_means(const Family<double>& f, const Vec& mu_star, const Vec& mu_hat)
{
    if (mu_star.size() != mu_hat.size()) throw InvalidInput("deviance_between_means: size mismatch");
    double s = 0.0;
    for (Index i = 0; i < mu_star.size(); ++i) s += unit_deviance(f, mu_star(i), mu_hat(i));
    return s;
}

ReplicationData draw_replication(const SimulationScenario& s, int replication)
{
    const auto rep = static_cast<std::uint64_t>(replication);
    ReplicationData data;
    auto design_rng = make_stream(s.seed, rep, StreamPurpose::Design);
    auto beta_rng = make_stream(s.seed, rep, StreamPurpose::Beta);
    auto perm_rng = make_stream(s.seed, rep, StreamPurpose::Permutation);
    auto resp_rng = make_stream(s.seed, rep, StreamPurpose::Response);
    data.X = with_intercept(generate_design(s.design, s.n, s.d - 1, design_rng));
    data.beta_star.resize(s.d);
    data.beta_star(0) = s.intercept;
    data.beta_star.tail(s.d - 1) = generate_beta(s.d - 1, s.beta_norm, beta_rng);
    data.y_star = sample_responses(s.family, Vec(data.X * data.beta_star), resp_rng);
    data.blocks = s.blocks();
    data.pi_star = s.permutation == PermutationScheme::KSparse ? generate_permutation_ksparse(s.n, s.k(), perm_rng)
                                                               : generate_permutation_blocks(data.blocks, perm_rng);
    data.y = permute(data.y_star, data.pi_star);
    return data;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Evaluator {
    const Family<double>& f;
    const ReplicationData& data;
    Vec eta_star;
    Vec mu_star;
    Vec xi_star;

    Evaluator(const Family<double>& fam, const ReplicationData& d) : f(fam), data(d)
    {
        eta_star = data.X * data.beta_star;
        mu_star.resize(eta_star.size());
        for (Index i = 0; i < eta_star.size(); ++i) mu_star(i) = mean(f, eta_star(i));
        const double rn = std::sqrt(static_cast<double>(data.X.rows()));
        xi_star.resize(eta_star.size());
        for (Index i = 0; i < eta_star.size(); ++i)
            xi_star(i) = (eta_star(data.pi_star[static_cast<std::size_t>(i)]) - eta_star(i)) / rn;
    }

    void fill(MethodRecord& r, const Vec& beta, const Vec& xi) const
    {
        r.beta_error = (beta - data.beta_star).norm();
        r.theta_error = std::sqrt(r.beta_error * r.beta_error + (xi - xi_star).squaredNorm());
        const Vec eta = data.X * beta;
        Vec mu(eta.size());
        for (Index i = 0; i < eta.size(); ++i) mu(i) = mean(f, eta(i));
        r.deviance = deviance_between_means(f, mu_star, mu);
        const auto est = recover_permutation_from_predictors(eta, data.y, data.blocks);
        r.hamming = hamming_distance(est.pi_hat, data.pi_star);
        if (!std::isfinite(r.beta_error) || !std::isfinite(r.theta_error) || !std::isfinite(r.deviance)) r.na = true;
    }
};

void mark_na(MethodRecord& r)
{
    r.na = true;
    r.converged = false;
    r.beta_error = r.theta_error = r.deviance = r.hamming = std::numeric_limits<double>::quiet_NaN();
}

} // namespace

ReplicationResult run_replication(const SimulationScenario& s, int replication)
{
    const auto data = draw_replication(s, replication);
    const Family<double>& f = s.family;
    const Index n = s.n;
    Evaluator eval(f, data);

    ReplicationResult out;
    out.replication = replication;
    out.realized_mismatch_fraction = hamming_distance(data.pi_star, identity_map(n));
    out.sigma_y = s.sigma_mode == SigmaMode::KnownBeta ? sigma_y_known(f, s.intercept, s.beta_norm) : sigma_y_data(f, data.y);
    const auto lambdas = lambda_grid(out.sigma_y, n, s.d, s.prefactors);

    const Vec zero_xi = Vec::Zero(n);
    std::optional<GlmFit<double>> naive;
    try {
        naive = fit_glm(f, data.X, data.y);
        out.lambda_max = lambda_max(f, data.X, data.y, naive->beta);
    } catch (const std::exception&) {
        out.lambda_max = std::numeric_limits<double>::quiet_NaN();
    }

    // Lambda-free methods are evaluated once and repeated at each grid point.
    std::map<Method, MethodRecord> fixed;
    for (Method m : s.methods) {
        if (lambda_dependent(m)) continue;
        MethodRecord r;
        r.method = m;
        const auto t0 = Clock::now();
        try {
            switch (m) {
            case Method::Naive: {
                if (!naive) throw NumericError("naive fit failed");
                r.converged = naive->converged;
                r.iterations = naive->iterations;
                eval.fill(r, naive->beta, zero_xi);
                break;
            }
            case Method::Oracle: {
                const auto fit = fit_glm(f, data.X, data.y_star);
                r.converged = fit.converged;
                r.iterations = fit.iterations;
                eval.fill(r, fit.beta, eval.xi_star);
                break;
            }
            case Method::LahiriLarsen:
            case Method::Chambers: {
                const auto fit = m == Method::LahiriLarsen ? fit_ll(f, data.X, data.y, data.blocks)
                                                           : fit_chambers(f, data.X, data.y, data.blocks);
                r.converged = fit.converged;
                r.iterations = fit.newton_iterations;
                if (!fit.converged || !fit.beta.allFinite()) {
                    mark_na(r);
                } else {
                    eval.fill(r, fit.beta, zero_xi);
                }
                break;
            }
            case Method::Sorting: {
                eval.fill(r, data.beta_star, eval.xi_star);
                break;
            }
            default: break;
            }
        } catch (const std::exception&) {
            mark_na(r);
        }
        r.runtime_ms = elapsed_ms(t0);
        fixed[m] = r;
    }

    // Lambda-dependent methods, visited from the largest lambda down with warm starts.
    std::map<Method, std::vector<MethodRecord>> path;
    std::vector<std::size_t> order(lambdas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });
    for (Method m : s.methods) {
        if (!lambda_dependent(m)) continue;
        auto& recs = path[m];
        recs.resize(lambdas.size());
        std::optional<StartingPoint<double>> start;
        for (std::size_t idx : order) {
            MethodRecord r;
            r.method = m;
            r.prefactor = s.prefactors[idx];
            r.lambda = lambdas[idx];
            const auto t0 = Clock::now();
            try {
                if (!start && naive) start = StartingPoint<double>{naive->beta, zero_xi};
                const auto fit = m == Method::Proposed
                                     ? fit_penalized(f, data.X, data.y, lambdas[idx], s.fit_options, start)
                                     : fit_penalized_constrained(f, data.X, data.y, lambdas[idx], data.blocks, s.fit_options, start);
                r.converged = fit.converged;
                r.iterations = fit.iterations;
                eval.fill(r, fit.beta, fit.xi);
                start = StartingPoint<double>{fit.beta, fit.xi};
            } catch (const std::exception&) {
                mark_na(r);
            }
            r.runtime_ms = elapsed_ms(t0);
            recs[idx] = r;
        }
    }

    for (std::size_t idx = 0; idx < lambdas.size(); ++idx) {
        for (Method m : s.methods) {
            MethodRecord r = lambda_dependent(m) ? path[m][idx] : fixed[m];
            r.prefactor = s.prefactors[idx];
            r.lambda = lambdas[idx];
            out.records.push_back(r);
        }
    }
    return out;
}

std::vector<ReplicationResult> run_replications(const SimulationScenario& s)
{
    s.validate();
    std::vector<ReplicationResult> results(static_cast<std::size_t>(s.replications));
    unsigned threads = s.threads > 0 ? static_cast<unsigned>(s.threads) : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(s.replications));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < s.replications; r = next++) results[static_cast<std::size_t>(r)] = run_replication(s, r);
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return results;
}

double best_prefactor(const std::vector<ReplicationResult>& results, Method m)
{
    std::map<double, std::pair<double, int>> acc;
    for (const auto& rep : results)
        for (const auto& r : rep.records)
            if (r.method == m && !r.na) {
                auto& a = acc[r.prefactor];
                a.first += r.theta_error;
                a.second += 1;
            }
    double best = std::numeric_limits<double>::quiet_NaN(), best_err = std::numeric_limits<double>::infinity();
    for (const auto& [c, a] : acc) {
        const double e = a.first / a.second;
        if (e < best_err) {
            best_err = e;
            best = c;
        }
    }
    return best;
}

} // namespace linkglm::sim
