#include "flatmtl/partition.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace flatmtl {

ParamPartition::ParamPartition(IndexRange shared, std::vector<IndexRange> nonshared,
                               std::size_t total_length)
    : shared_(shared), nonshared_(std::move(nonshared)), total_length_(total_length) {
    if (nonshared_.empty()) {
        throw std::invalid_argument("ParamPartition: need at least one non-shared block");
    }
    std::vector<IndexRange> all;
    all.reserve(nonshared_.size() + 1);
    all.push_back(shared_);
    all.insert(all.end(), nonshared_.begin(), nonshared_.end());

    std::size_t covered = 0;
    for (const auto& r : all) {
        if (r.end <= r.begin) {
            throw std::invalid_argument("ParamPartition: empty or inverted block [" +
                                        std::to_string(r.begin) + ", " +
                                        std::to_string(r.end) + ")");
        }
        if (r.end > total_length_) {
            throw std::invalid_argument("ParamPartition: block exceeds vector length");
        }
        covered += r.size();
    }
    if (covered != total_length_) {
        throw std::invalid_argument(
            "ParamPartition: blocks cover " + std::to_string(covered) + " of " +
            std::to_string(total_length_) + " indices");
    }
    // Equal total size + within bounds + pairwise disjoint <=> exact cover.
    std::sort(all.begin(), all.end(),
              [](const IndexRange& a, const IndexRange& b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < all.size(); ++i) {
        if (all[i].begin < all[i - 1].end) {
            throw std::invalid_argument("ParamPartition: overlapping blocks");
        }
    }
}

ParamPartition ParamPartition::contiguous(std::size_t shared_len,
                                          const std::vector<std::size_t>& nonshared_lens) {
    IndexRange shared{0, shared_len};
    std::vector<IndexRange> ns;
    ns.reserve(nonshared_lens.size());
    std::size_t cursor = shared_len;
    for (std::size_t len : nonshared_lens) {
        ns.push_back(IndexRange{cursor, cursor + len});
        cursor += len;
    }
    return ParamPartition(shared, std::move(ns), cursor);
}

const IndexRange& ParamPartition::nonshared_range(std::size_t task) const {
    if (task >= nonshared_.size()) {
        throw std::invalid_argument("ParamPartition: task index " + std::to_string(task) +
                                    " out of range (m=" + std::to_string(nonshared_.size()) + ")");
    }
    return nonshared_[task];
}

std::span<const double> ParamPartition::shared_view(const ParamVector& v) const {
    require_matches(v);
    return std::span<const double>(v).subspan(shared_.begin, shared_.size());
}

std::span<double> ParamPartition::shared_view(ParamVector& v) const {
    require_matches(v);
    return std::span<double>(v).subspan(shared_.begin, shared_.size());
}

std::span<const double> ParamPartition::nonshared_view(const ParamVector& v,
                                                       std::size_t task) const {
    require_matches(v);
    const IndexRange& r = nonshared_range(task);
    return std::span<const double>(v).subspan(r.begin, r.size());
}

std::span<double> ParamPartition::nonshared_view(ParamVector& v, std::size_t task) const {
    require_matches(v);
    const IndexRange& r = nonshared_range(task);
    return std::span<double>(v).subspan(r.begin, r.size());
}

void ParamPartition::require_matches(const ParamVector& v) const {
    if (v.size() != total_length_) {
        throw std::invalid_argument("ParamPartition: vector length " +
                                    std::to_string(v.size()) + " does not match partition (" +
                                    std::to_string(total_length_) + ")");
    }
}

std::span<const double> slice_shared(const ParamVector& v, const ParamPartition& p) {
    return p.shared_view(v);
}

} // namespace flatmtl
