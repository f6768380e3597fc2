#include "linkglm/cli/pipeline.hpp"

#include "linkglm/matching.hpp"
#include "linkglm/rng.hpp"
#include "linkglm/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace linkglm::cli {

Injection inject_mismatch(const MergedDataset<double>& clean, const BlockPartition& blocks, std::uint64_t seed,
                          std::uint64_t replication)
{
    if (blocks.n() != clean.n()) throw InvalidInput("inject_mismatch: block partition does not cover the data");
    auto rng = make_stream(seed, replication, StreamPurpose::Permutation);
    Injection out;
    const IndexMap pi = sim::generate_permutation_blocks(blocks, rng);
    out.data.X = clean.X;
    out.data.y = permute(clean.y, pi);
    out.data.truth = GroundTruth<double>{clean.y, pi};
    out.data.blocks = blocks;
    out.realized_fraction = hamming_distance(pi, identity_map(clean.n()));
    return out;
}

Split validation_split(const BlockPartition& blocks, double fraction, std::uint64_t seed, std::uint64_t replication)
{
    if (!(fraction >= 0.0 && fraction <= 0.5)) throw InvalidInput("validation fraction must lie in [0, 0.5]");
    const Index n = blocks.n();
    const auto target = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
    auto rng = make_stream(seed, replication, StreamPurpose::Split);
    std::vector<Index> singles, multi;
    for (Index j = 0; j < blocks.num_blocks(); ++j) (blocks.is_singleton(j) ? singles : multi).push_back(j);
    std::shuffle(singles.begin(), singles.end(), rng);
    std::shuffle(multi.begin(), multi.end(), rng);
    std::vector<char> held(static_cast<std::size_t>(n), 0);
    Index taken = 0;
    for (const auto* pool : {&singles, &multi}) {
        for (Index j : *pool) {
            if (taken >= target) break;
            if (taken + blocks.block_size(j) > target) continue;
            for (Index i : blocks.group(j)) held[static_cast<std::size_t>(i)] = 1;
            taken += blocks.block_size(j);
        }
    }
    Split s;
    for (Index i = 0; i < n; ++i) (held[static_cast<std::size_t>(i)] ? s.validation : s.train).push_back(i);
    return s;
}

Matrix<double> take_rows(const Matrix<double>& X, const std::vector<Index>& rows)
{
    Matrix<double> out(static_cast<Index>(rows.size()), X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = X.row(rows[r]);
    return out;
}

Vector<double> take_rows(const Vector<double>& y, const std::vector<Index>& rows)
{
    Vector<double> out(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = y(rows[r]);
    return out;
}

double deviance_on(const Family<double>& f, const Vector<double>& y, const Vector<double>& eta)
{
    double s = 0.0;
    for (Index i = 0; i < y.size(); ++i) s += unit_deviance(f, y(i), mean(f, eta(i)));
    return s;
}

LambdaSelection select_lambda_validation(const Family<double>& f, const Matrix<double>& X_train,
                                         const Vector<double>& y_train, const Matrix<double>& X_val,
                                         const Vector<double>& y_val, const std::vector<double>& grid,
                                         const FitOptions& opts, const std::optional<BlockPartition>& train_blocks)
{
    if (grid.empty()) throw InvalidInput("select_lambda_validation: empty grid");
    if (X_val.rows() == 0) throw InvalidInput("select_lambda_validation: empty validation set");
    LambdaSelection sel;
    sel.validation_deviance.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::size_t> order(grid.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });
    std::optional<StartingPoint<double>> start;
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t idx : order) {
        try {
            const auto fit = train_blocks ? fit_penalized_constrained(f, X_train, y_train, grid[idx], *train_blocks, opts, start)
                                          : fit_penalized(f, X_train, y_train, grid[idx], opts, start);
            start = StartingPoint<double>{fit.beta, fit.xi};
            const double dev = deviance_on(f, y_val, Vector<double>(X_val * fit.beta));
            sel.validation_deviance[idx] = dev;
            // Visiting lambdas in decreasing order, a strict improvement is needed to move down.
            if (std::isfinite(dev) && dev < best) {
                best = dev;
                sel.index = idx;
                sel.lambda = grid[idx];
                found = true;
            }
        } catch (const NumericError&) {
        } catch (const DomainError&) {
        }
    }
    if (!found) throw NumericError("select_lambda_validation: no grid value produced a finite validation deviance");
    return sel;
}

} // namespace linkglm::cli
