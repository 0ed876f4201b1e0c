#pragma once

#include "flatmtl/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace flatmtl {

/// Tensor in the IDX container format: 4-byte big-endian magic
/// (0x00, 0x00, type code, ndims), then one 4-byte big-endian size per
/// dimension, then the row-major payload. Only the unsigned-byte type code
/// (0x08) is supported; that covers label files (magic 0x00000801) and image
/// files (magic 0x00000803).
struct IdxTensor {
    std::vector<std::size_t> dims;
    std::uint8_t type_code = 0x08;
    std::vector<std::uint8_t> data;

    std::size_t element_count() const;
    /// Rows of a rank-3 image tensor (count x height x width).
    std::size_t image_count() const;
    std::size_t image_height() const;
    std::size_t image_width() const;
};

IdxTensor read_idx(const std::string& path);
void write_idx(const std::string& path, const IdxTensor& tensor);

/// Two-task dataset of composed image pairs: image A anchored top-left,
/// image B bottom-right on a zero canvas, overlap combined by elementwise
/// max; task 1 labels come from A, task 2 labels from B.
struct PairedImageDataset {
    std::size_t count = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> images; // count x height x width
    std::vector<int> labels_task1;
    std::vector<int> labels_task2;
    std::vector<std::size_t> source_indices_a, source_indices_b;
};

PairedImageDataset compose_multitask_pairs(const IdxTensor& images_a,
                                           const IdxTensor& labels_a,
                                           const IdxTensor& images_b,
                                           const IdxTensor& labels_b, SeededRng& rng,
                                           std::size_t n_pairs, std::size_t canvas_height = 36,
                                           std::size_t canvas_width = 36);

/// FNV-1a of a file's bytes, for dataset metadata.
std::uint64_t file_hash(const std::string& path);

} // namespace flatmtl
