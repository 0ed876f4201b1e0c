#include "flatmtl/idx.hpp"

#include "flatmtl/errors.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace flatmtl {

std::size_t IdxTensor::element_count() const {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

std::size_t IdxTensor::image_count() const {
    if (dims.size() != 3) throw std::invalid_argument("IdxTensor: not an image tensor");
    return dims[0];
}

std::size_t IdxTensor::image_height() const {
    if (dims.size() != 3) throw std::invalid_argument("IdxTensor: not an image tensor");
    return dims[1];
}

std::size_t IdxTensor::image_width() const {
    if (dims.size() != 3) throw std::invalid_argument("IdxTensor: not an image tensor");
    return dims[2];
}

IdxTensor read_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_idx: cannot open '" + path + "'");

    std::uint8_t magic[4];
    if (!in.read(reinterpret_cast<char*>(magic), 4)) {
        throw IoError("read_idx: '" + path + "': truncated header");
    }
    if (magic[0] != 0 || magic[1] != 0) {
        throw IoError("read_idx: '" + path + "': bad magic");
    }
    IdxTensor t;
    t.type_code = magic[2];
    if (t.type_code != 0x08) {
        throw IoError("read_idx: '" + path + "': unsupported type code 0x" +
                      std::to_string(t.type_code));
    }
    const std::size_t ndims = magic[3];
    if (ndims == 0) throw IoError("read_idx: '" + path + "': zero dimensions");
    t.dims.resize(ndims);
    for (std::size_t d = 0; d < ndims; ++d) {
        std::uint8_t raw[4];
        if (!in.read(reinterpret_cast<char*>(raw), 4)) {
            throw IoError("read_idx: '" + path + "': truncated dimension header");
        }
        t.dims[d] = (static_cast<std::size_t>(raw[0]) << 24) |
                    (static_cast<std::size_t>(raw[1]) << 16) |
                    (static_cast<std::size_t>(raw[2]) << 8) | static_cast<std::size_t>(raw[3]);
    }
    const std::size_t expected = t.element_count();
    t.data.resize(expected);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(in.gcount()) != expected) {
        throw IoError("read_idx: '" + path + "': short payload (" +
                      std::to_string(in.gcount()) + " of " + std::to_string(expected) + " bytes)");
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw IoError("read_idx: '" + path + "': trailing bytes after payload");
    }
    return t;
}

void write_idx(const std::string& path, const IdxTensor& tensor) {
    if (tensor.dims.empty() || tensor.dims.size() > 255) {
        throw std::invalid_argument("write_idx: bad dimension count");
    }
    if (tensor.type_code != 0x08) {
        throw std::invalid_argument("write_idx: only the unsigned-byte type code is supported");
    }
    if (tensor.data.size() != tensor.element_count()) {
        throw std::invalid_argument("write_idx: payload size does not match dims");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_idx: cannot open '" + path + "'");
    const std::uint8_t magic[4] = {0, 0, tensor.type_code,
                                   static_cast<std::uint8_t>(tensor.dims.size())};
    out.write(reinterpret_cast<const char*>(magic), 4);
    for (std::size_t d : tensor.dims) {
        const std::uint8_t raw[4] = {
            static_cast<std::uint8_t>((d >> 24) & 0xFF), static_cast<std::uint8_t>((d >> 16) & 0xFF),
            static_cast<std::uint8_t>((d >> 8) & 0xFF), static_cast<std::uint8_t>(d & 0xFF)};
        out.write(reinterpret_cast<const char*>(raw), 4);
    }
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size()));
    if (!out) throw IoError("write_idx: write failed for '" + path + "'");
}

PairedImageDataset compose_multitask_pairs(const IdxTensor& images_a, const IdxTensor& labels_a,
                                           const IdxTensor& images_b, const IdxTensor& labels_b,
                                           SeededRng& rng, std::size_t n_pairs,
                                           std::size_t canvas_height, std::size_t canvas_width) {
    if (n_pairs == 0) throw std::invalid_argument("compose_multitask_pairs: n_pairs must be > 0");
    for (const auto* imgs : {&images_a, &images_b}) {
        if (imgs->dims.size() != 3 || imgs->image_count() == 0) {
            throw std::invalid_argument("compose_multitask_pairs: image source must be a "
                                        "non-empty count x H x W tensor");
        }
    }
    if (labels_a.dims.size() != 1 || labels_a.dims[0] != images_a.image_count() ||
        labels_b.dims.size() != 1 || labels_b.dims[0] != images_b.image_count()) {
        throw std::invalid_argument("compose_multitask_pairs: label count mismatch");
    }
    const std::size_t h = images_a.image_height();
    const std::size_t w = images_a.image_width();
    if (images_b.image_height() != h || images_b.image_width() != w) {
        throw std::invalid_argument("compose_multitask_pairs: sources must share image shape");
    }
    if (canvas_height < h || canvas_width < w) {
        throw std::invalid_argument("compose_multitask_pairs: canvas smaller than source images");
    }

    PairedImageDataset out;
    out.count = n_pairs;
    out.height = canvas_height;
    out.width = canvas_width;
    out.images.assign(n_pairs * canvas_height * canvas_width, 0);
    out.labels_task1.resize(n_pairs);
    out.labels_task2.resize(n_pairs);
    out.source_indices_a.resize(n_pairs);
    out.source_indices_b.resize(n_pairs);

    const std::size_t off_h = canvas_height - h; // bottom-right anchor for image B
    const std::size_t off_w = canvas_width - w;
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const std::size_t ia = rng.uniform_index(images_a.image_count());
        const std::size_t ib = rng.uniform_index(images_b.image_count());
        out.source_indices_a[p] = ia;
        out.source_indices_b[p] = ib;
        out.labels_task1[p] = labels_a.data[ia];
        out.labels_task2[p] = labels_b.data[ib];
        std::uint8_t* canvas = out.images.data() + p * canvas_height * canvas_width;
        const std::uint8_t* a = images_a.data.data() + ia * h * w;
        const std::uint8_t* b = images_b.data.data() + ib * h * w;
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                std::uint8_t* cell = canvas + r * canvas_width + c;
                *cell = std::max(*cell, a[r * w + c]);
            }
        }
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                std::uint8_t* cell = canvas + (off_h + r) * canvas_width + (off_w + c);
                *cell = std::max(*cell, b[r * w + c]);
            }
        }
    }
    return out;
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("file_hash: cannot open '" + path + "'");
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    char buffer[4096];
    while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<std::uint8_t>(buffer[i]);
            hash *= 0x100000001B3ULL;
        }
        if (!in) break;
    }
    return hash;
}

} // namespace flatmtl
