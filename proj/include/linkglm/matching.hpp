#pragma once

// Permutation recovery by sorting and mismatch detection via tail probabilities.
//
// For fixed beta, min_pi -sum_i y_i x_{pi(i)}'beta is a linear assignment problem
// whose solution pairs the order statistics of {y_i} and {x_i'beta}; with blocking
// the problem decouples across blocks.

#include "linkglm/block_partition.hpp"
#include "linkglm/family.hpp"
#include "linkglm/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <variant>
#include <vector>

namespace linkglm {

template <class Scalar>
struct PermutationEstimate {
    // pi_hat[i] = index of the covariate row paired with response y_i.
    IndexMap pi_hat;
    // Fraction of indices moved, (1/n) sum 1{pi_hat(i) != i}.
    double hamming = 0.0;
    // Responses realigned with the rows of X: corrected_y[pi_hat[i]] = y[i].
    Vector<Scalar> corrected_y;
};

struct TopK {
    Index k = 0;
};

struct Threshold {
    double tau = 0.05;
};

using SelectionRule = std::variant<TopK, Threshold>;

template <class Scalar>
struct MismatchReport {
    Vector<Scalar> p_values;
    std::vector<Index> selected;  // ascending
    SelectionRule rule;
};

/// (1/n) sum 1{a(i) != b(i)}.
inline double hamming_distance(const IndexMap& a, const IndexMap& b)
{
    if (a.size() != b.size()) throw InvalidInput("hamming_distance: size mismatch");
    if (a.empty()) return 0.0;
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i] ? 1 : 0;
    return static_cast<double>(diff) / static_cast<double>(a.size());
}

/// ||y_hat - y_star||_2.
template <class Derived1, class Derived2>
auto correspondence_l2(const Eigen::MatrixBase<Derived1>& y_hat, const Eigen::MatrixBase<Derived2>& y_star)
{
    if (y_hat.size() != y_star.size()) throw InvalidInput("correspondence_l2: size mismatch");
    return (y_hat - y_star).norm();
}

namespace detail {

template <class Scalar>
std::vector<Index> stable_order(const std::vector<Index>& idx, const Vector<Scalar>& key)
{
    std::vector<Index> order = idx;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return key(a) < key(b); });
    return order;
}

/// Pairs ranks of y and eta over the index subset (sorted ascending), writing into map.
template <class Scalar>
void pair_order_statistics(const std::vector<Index>& idx, const Vector<Scalar>& y, const Vector<Scalar>& eta, IndexMap& map)
{
    const auto by_y = stable_order(idx, y);
    const auto by_eta = stable_order(idx, eta);
    for (std::size_t r = 0; r < idx.size(); ++r) map[static_cast<std::size_t>(by_y[r])] = by_eta[r];
}

template <class Scalar>
PermutationEstimate<Scalar> finish_estimate(IndexMap map, const Vector<Scalar>& y)
{
    PermutationEstimate<Scalar> est;
    est.hamming = hamming_distance(map, identity_map(y.size()));
    est.corrected_y.resize(y.size());
    for (Index i = 0; i < y.size(); ++i) est.corrected_y(map[static_cast<std::size_t>(i)]) = y(i);
    est.pi_hat = std::move(map);
    return est;
}

template <class Scalar>
std::vector<Index> sorted_indices(const std::vector<Index>& g)
{
    std::vector<Index> s = g;
    std::sort(s.begin(), s.end());
    return s;
}

} // namespace detail

/// Pairs order statistics of y and the linear predictors eta within each block.
/// Ties are broken by ascending original index.
template <class Scalar>
PermutationEstimate<Scalar> recover_permutation_from_predictors(const Vector<Scalar>& eta, const Vector<Scalar>& y,
                                                                const BlockPartition& blocks)
{
    if (eta.size() != y.size() || blocks.n() != y.size()) throw InvalidInput("recover_permutation: size mismatch");
    IndexMap map = identity_map(y.size());
    for (const auto& g : blocks.groups()) detail::pair_order_statistics(detail::sorted_indices<Scalar>(g), y, eta, map);
    return detail::finish_estimate(std::move(map), y);
}

template <class Scalar>
PermutationEstimate<Scalar> recover_permutation(const Family<Scalar>&, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                                const Vector<Scalar>& beta, const std::optional<BlockPartition>& blocks = std::nullopt)
{
    const Vector<Scalar> eta = X * beta;
    return recover_permutation_from_predictors(eta, y, blocks ? *blocks : BlockPartition::single(y.size()));
}

/// -sum_i y_i eta_{map(i)}, the linear assignment objective.
template <class Scalar>
Scalar assignment_objective(const Vector<Scalar>& eta, const Vector<Scalar>& y, const IndexMap& map)
{
    Scalar s = Scalar(0);
    for (Index i = 0; i < y.size(); ++i) s -= y(i) * eta(map[static_cast<std::size_t>(i)]);
    return s;
}

/// p*_i = tail probability of y_i under pi(i) = i; selection by top-k (ties to
/// the lowest index) or by threshold p*_i <= tau.
template <class Scalar>
MismatchReport<Scalar> detect_mismatches(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                         const Vector<Scalar>& beta, const SelectionRule& rule)
{
    const Index n = y.size();
    const Vector<Scalar> eta = X * beta;
    MismatchReport<Scalar> rep;
    rep.rule = rule;
    rep.p_values.resize(n);
    for (Index i = 0; i < n; ++i) rep.p_values(i) = tail_probability(f, eta(i), y(i));
    if (const auto* top = std::get_if<TopK>(&rule)) {
        if (top->k < 0 || top->k > n) throw InvalidInput("TopK: k out of range");
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Index(0));
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return rep.p_values(a) < rep.p_values(b); });
        rep.selected.assign(order.begin(), order.begin() + top->k);
    } else {
        const double tau = std::get<Threshold>(rule).tau;
        for (Index i = 0; i < n; ++i)
            if (static_cast<double>(rep.p_values(i)) <= tau) rep.selected.push_back(i);
    }
    std::sort(rep.selected.begin(), rep.selected.end());
    return rep;
}

/// Detects suspected mismatches, then re-pairs order statistics only among the
/// selected indices of each block; all other indices stay fixed.
template <class Scalar>
PermutationEstimate<Scalar> two_stage_correct(const Family<Scalar>& f, const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                              const Vector<Scalar>& beta, const SelectionRule& rule,
                                              const std::optional<BlockPartition>& blocks = std::nullopt)
{
    const Index n = y.size();
    const BlockPartition part = blocks ? *blocks : BlockPartition::single(n);
    const auto report = detect_mismatches(f, X, y, beta, rule);
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    for (Index i : report.selected) chosen[static_cast<std::size_t>(i)] = 1;
    const Vector<Scalar> eta = X * beta;
    IndexMap map = identity_map(n);
    for (const auto& g : part.groups()) {
        std::vector<Index> sub;
        for (Index i : g)
            if (chosen[static_cast<std::size_t>(i)]) sub.push_back(i);
        std::sort(sub.begin(), sub.end());
        detail::pair_order_statistics(sub, y, eta, map);
    }
    return detail::finish_estimate(std::move(map), y);
}

} // namespace linkglm
