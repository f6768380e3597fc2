#pragma once

#include "linkglm/block_partition.hpp"
#include "linkglm/estimators.hpp"
#include "linkglm/family.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace linkglm::cli {

struct Injection {
    MergedDataset<double> data;   // y = y_star[pi_star], truth and blocks set
    double realized_fraction = 0; // k / n
};

/// Shuffles the responses uniformly within every block.
Injection inject_mismatch(const MergedDataset<double>& clean, const BlockPartition& blocks, std::uint64_t seed,
                          std::uint64_t replication = 0);

struct Split {
    std::vector<Index> train;
    std::vector<Index> validation;
};

/// Holds out about fraction * n rows as whole blocks, singleton blocks first.
Split validation_split(const BlockPartition& blocks, double fraction, std::uint64_t seed, std::uint64_t replication = 0);

Matrix<double> take_rows(const Matrix<double>& X, const std::vector<Index>& rows);
Vector<double> take_rows(const Vector<double>& y, const std::vector<Index>& rows);

/// Sum of unit deviances between responses and the means implied by eta.
double deviance_on(const Family<double>& f, const Vector<double>& y, const Vector<double>& eta);

struct LambdaSelection {
    double lambda = 0;
    std::size_t index = 0;
    std::vector<double> validation_deviance;
};

/// Fits on the training rows at every grid value and keeps the lambda with the
/// smallest validation deviance; ties go to the larger lambda. With blocks the
/// constrained estimator is used (blocks index the training rows).
LambdaSelection select_lambda_validation(const Family<double>& f, const Matrix<double>& X_train,
                                         const Vector<double>& y_train, const Matrix<double>& X_val,
                                         const Vector<double>& y_val, const std::vector<double>& grid,
                                         const FitOptions& opts = {},
                                         const std::optional<BlockPartition>& train_blocks = std::nullopt);

} // namespace linkglm::cli
