#pragma once

#include "flatmtl/param_vector.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace flatmtl {

/// Half-open index interval [begin, end) into a ParamVector.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

/// Splits a flat parameter vector into one shared block and m non-shared
/// blocks. Construction validates that the blocks are non-empty, pairwise
/// disjoint, and together cover [0, total_length) exactly.
class ParamPartition {
public:
    ParamPartition(IndexRange shared, std::vector<IndexRange> nonshared,
                   std::size_t total_length);

    /// Common layout: shared block first, then one contiguous block per task.
    static ParamPartition contiguous(std::size_t shared_len,
                                     const std::vector<std::size_t>& nonshared_lens);

    std::size_t task_count() const { return nonshared_.size(); }
    std::size_t total_length() const { return total_length_; }
    const IndexRange& shared_range() const { return shared_; }
    const IndexRange& nonshared_range(std::size_t task) const;

    std::span<const double> shared_view(const ParamVector& v) const;
    std::span<double> shared_view(ParamVector& v) const;
    std::span<const double> nonshared_view(const ParamVector& v, std::size_t task) const;
    std::span<double> nonshared_view(ParamVector& v, std::size_t task) const;

    /// Throws std::invalid_argument when v.size() != total_length().
    void require_matches(const ParamVector& v) const;

private:
    IndexRange shared_;
    std::vector<IndexRange> nonshared_;
    std::size_t total_length_ = 0;
};

/// View of the shared block of v under partition p.
std::span<const double> slice_shared(const ParamVector& v, const ParamPartition& p);

} // namespace flatmtl
