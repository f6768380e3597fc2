#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace linkglm {

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

// Index map on {0..n-1}. For data y and true responses y*, y[i] = y*[map[i]].
using IndexMap = std::vector<Index>;

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RankDeficiencyError : NumericError {
    RankDeficiencyError(const std::string& what, std::vector<Index> columns)
        : NumericError(what), columns(std::move(columns)) {}
    std::vector<Index> columns;
};

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline IndexMap identity_map(Index n)
{
    IndexMap m(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = i;
    return m;
}

inline bool is_bijection(const IndexMap& m)
{
    std::vector<char> seen(m.size(), 0);
    for (Index j : m) {
        if (j < 0 || static_cast<std::size_t>(j) >= m.size() || seen[static_cast<std::size_t>(j)]) return false;
        seen[static_cast<std::size_t>(j)] = 1;
    }
    return true;
}

// v[map[i]] for every i.
template <class Derived>
auto permute(const Eigen::MatrixBase<Derived>& v, const IndexMap& map)
{
    using Scalar = typename Derived::Scalar;
    Vector<Scalar> out(v.size());
    for (Index i = 0; i < v.size(); ++i) out(i) = v(map[static_cast<std::size_t>(i)]);
    return out;
}

template <class Scalar>
Scalar sign_of(Scalar x)
{
    return x < Scalar(0) ? Scalar(-1) : Scalar(1);
}

} // namespace linkglm
