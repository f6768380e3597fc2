#pragma once

#include "linkglm/types.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace linkglm {

/// Disjoint groups G_1..G_K covering {0..n-1}. Permutations consistent with the
/// partition only move indices within a group.
class BlockPartition {
public:
    BlockPartition() = default;

    /// Groups are numbered in order of first appearance of their label.
    template <class Label>
    static BlockPartition from_labels(const std::vector<Label>& labels)
    {
        BlockPartition p;
        p.group_of_.resize(labels.size());
        std::map<Label, Index> ids;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto [it, inserted] = ids.try_emplace(labels[i], static_cast<Index>(p.groups_.size()));
            if (inserted) p.groups_.emplace_back();
            p.groups_[static_cast<std::size_t>(it->second)].push_back(static_cast<Index>(i));
            p.group_of_[i] = it->second;
        }
        return p;
    }

    static BlockPartition from_groups(std::vector<std::vector<Index>> groups, Index n)
    {
        BlockPartition p;
        p.group_of_.assign(static_cast<std::size_t>(n), -1);
        for (std::size_t j = 0; j < groups.size(); ++j) {
            if (groups[j].empty()) throw InvalidInput("block " + std::to_string(j) + " is empty");
            std::sort(groups[j].begin(), groups[j].end());
            for (Index i : groups[j]) {
                if (i < 0 || i >= n) throw InvalidInput("block index " + std::to_string(i) + " out of range");
                if (p.group_of_[static_cast<std::size_t>(i)] != -1)
                    throw InvalidInput("index " + std::to_string(i) + " appears in more than one block");
                p.group_of_[static_cast<std::size_t>(i)] = static_cast<Index>(j);
            }
        }
        for (Index i = 0; i < n; ++i)
            if (p.group_of_[static_cast<std::size_t>(i)] == -1)
                throw InvalidInput("index " + std::to_string(i) + " is not covered by any block");
        p.groups_ = std::move(groups);
        return p;
    }

    static BlockPartition single(Index n)
    {
        return from_labels(std::vector<int>(static_cast<std::size_t>(n), 0));
    }

    static BlockPartition singletons(Index n)
    {
        std::vector<Index> labels(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i;
        return from_labels(labels);
    }

    /// Consecutive blocks of the given sizes.
    static BlockPartition consecutive(const std::vector<Index>& sizes)
    {
        std::vector<Index> labels;
        for (std::size_t j = 0; j < sizes.size(); ++j) labels.insert(labels.end(), static_cast<std::size_t>(sizes[j]), static_cast<Index>(j));
        return from_labels(labels);
    }

    Index n() const { return static_cast<Index>(group_of_.size()); }
    Index num_blocks() const { return static_cast<Index>(groups_.size()); }
    const std::vector<std::vector<Index>>& groups() const { return groups_; }
    const std::vector<Index>& group(Index j) const { return groups_[static_cast<std::size_t>(j)]; }
    Index group_of(Index i) const { return group_of_[static_cast<std::size_t>(i)]; }
    Index block_size(Index j) const { return static_cast<Index>(group(j).size()); }
    bool is_singleton(Index j) const { return block_size(j) == 1; }

    /// True when map[i] stays within the block of i for all i.
    bool respects(const IndexMap& map) const
    {
        if (static_cast<Index>(map.size()) != n()) return false;
        for (Index i = 0; i < n(); ++i)
            if (group_of(map[static_cast<std::size_t>(i)]) != group_of(i)) return false;
        return true;
    }

    /// Dense K x n constraint matrix, C(j, i) = 1 iff i in G_j.
    template <class Scalar = double>
    Matrix<Scalar> constraint_matrix() const
    {
        Matrix<Scalar> c = Matrix<Scalar>::Zero(num_blocks(), n());
        for (Index i = 0; i < n(); ++i) c(group_of(i), i) = Scalar(1);
        return c;
    }

    /// Partition restricted to the given rows, reindexed 0..rows.size()-1.
    BlockPartition subset(const std::vector<Index>& rows) const
    {
        std::vector<Index> labels;
        labels.reserve(rows.size());
        for (Index r : rows) labels.push_back(group_of(r));
        return from_labels(labels);
    }

private:
    std::vector<std::vector<Index>> groups_;
    std::vector<Index> group_of_;
};

} // namespace linkglm
