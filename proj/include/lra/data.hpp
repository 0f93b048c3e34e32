#pragma once

// IDX dataset loading (MNIST / Fashion MNIST), splitting, and minibatch
// iteration.
//
// IDX layout (all integers big-endian):
//   image file:  u32 magic 0x00000803, u32 count, u32 rows, u32 cols,
//                count*rows*cols unsigned bytes, row-major per image
//   label file:  u32 magic 0x00000801, u32 count, count unsigned bytes
//
// Files may be gzip-compressed; zlib reads both forms transparently.
// Pixels are scaled to [0,1] by dividing the raw byte by 255; labels must
// lie in 0..9 and are also one-hot encoded.

#include <zlib.h>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lra/error.hpp"
#include "lra/matrix.hpp"
#include "lra/rng.hpp"

namespace lra {

struct Dataset {
    Matrix images;            // [N x pixels], entries in [0,1]
    std::vector<int> labels;  // N entries in 0..9
    Matrix one_hot;           // [N x 10]

    std::size_t size() const { return labels.size(); }
};

namespace detail {

class IdxReader {
public:
    explicit IdxReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
        if (!file_) throw IoError("cannot open " + path);
    }
    ~IdxReader() {
        if (file_) gzclose(file_);
    }
    IdxReader(const IdxReader&) = delete;
    IdxReader& operator=(const IdxReader&) = delete;

    std::uint32_t read_u32() {
        unsigned char buf[4];
        read_exact(buf, 4);
        return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
               (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
    }

    void read_exact(unsigned char* out, std::size_t n) {
        const int got = gzread(file_, out, static_cast<unsigned>(n));
        if (got < 0 || static_cast<std::size_t>(got) != n)
            throw FormatError(path_ + ": truncated at byte offset " + std::to_string(offset_));
        offset_ += n;
    }

    bool at_eof() {
        unsigned char probe;
        const int got = gzread(file_, &probe, 1);
        return got == 0;
    }

    std::size_t offset() const { return offset_; }

private:
    std::string path_;
    gzFile file_;
    std::size_t offset_ = 0;
};

}  // namespace detail

/// Loads a matching pair of IDX image/label files. Throws FormatError with
/// the offending byte offset on bad magic numbers, truncation, or a count
/// mismatch between the two files.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    detail::IdxReader images(images_path);
    const std::uint32_t image_magic = images.read_u32();
    if (image_magic != 0x00000803u)
        throw FormatError(images_path + ": bad image magic at byte offset 0 (got " +
                          std::to_string(image_magic) + ")");
    const std::uint32_t n = images.read_u32();
    const std::uint32_t rows = images.read_u32();
    const std::uint32_t cols = images.read_u32();
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;

    detail::IdxReader labels(labels_path);
    const std::uint32_t label_magic = labels.read_u32();
    if (label_magic != 0x00000801u)
        throw FormatError(labels_path + ": bad label magic at byte offset 0 (got " +
                          std::to_string(label_magic) + ")");
    const std::uint32_t n_labels = labels.read_u32();
    if (n_labels != n)
        throw FormatError(labels_path + ": label count " + std::to_string(n_labels) +
                          " does not match image count " + std::to_string(n));

    Dataset ds;
    ds.images = Matrix(n, pixels);
    ds.labels.resize(n);
    ds.one_hot = Matrix(n, 10);

    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < n; ++i) {
        images.read_exact(buf.data(), pixels);
        double* row = ds.images.row(i);
        for (std::size_t j = 0; j < pixels; ++j) row[j] = buf[j] / 255.0;
    }
    if (!images.at_eof())
        throw FormatError(images_path + ": trailing bytes after offset " +
                          std::to_string(images.offset()));

    std::vector<unsigned char> lbuf(n);
    labels.read_exact(lbuf.data(), n);
    if (!labels.at_eof())
        throw FormatError(labels_path + ": trailing bytes after offset " +
                          std::to_string(labels.offset()));
    for (std::uint32_t i = 0; i < n; ++i) {
        if (lbuf[i] > 9)
            throw FormatError(labels_path + ": label " + std::to_string(int(lbuf[i])) +
                              " out of range at item " + std::to_string(i));
        ds.labels[i] = lbuf[i];
        ds.one_hot(i, lbuf[i]) = 1.0;
    }
    return ds;
}

/// Selects rows by index into a new dataset.
inline Dataset gather_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.images = Matrix(idx.size(), ds.images.cols());
    out.labels.resize(idx.size());
    out.one_hot = Matrix(idx.size(), 10);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(ds.images.row(idx[i]), ds.images.row(idx[i]) + ds.images.cols(),
                  out.images.row(i));
        out.labels[i] = ds.labels[idx[i]];
        out.one_hot(i, ds.labels[idx[i]]) = 1.0;
    }
    return out;
}

struct SplitSpec {
    std::size_t validation_count = 10000;
    std::uint64_t seed = 0;
};

/// Disjoint train/validation partition; the validation rows are drawn by
/// random sampling without replacement (Fisher-Yates prefix), both halves
/// kept in ascending original order.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    if (spec.validation_count >= ds.size() && spec.validation_count > 0)
        throw ArgumentError("split: validation count " + std::to_string(spec.validation_count) +
                            " must be smaller than the dataset (" + std::to_string(ds.size()) + ")");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < spec.validation_count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_unit() * (order.size() - i));
        std::swap(order[i], order[j]);
    }
    std::vector<std::size_t> valid(order.begin(), order.begin() + spec.validation_count);
    std::vector<std::size_t> train(order.begin() + spec.validation_count, order.end());
    std::sort(valid.begin(), valid.end());
    std::sort(train.begin(), train.end());
    return {gather_rows(ds, train), gather_rows(ds, valid)};
}

struct Batch {
    Matrix x;
    Matrix y;  // one-hot targets
    std::vector<int> labels;
    std::vector<std::size_t> indices;  // original row indices
};

/// One epoch's worth of minibatch index slices: every sample exactly once,
/// final batch possibly short, order shuffled when a seed is given.
class BatchPlan {
public:
    BatchPlan(std::size_t n, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed)
        : batch_size_(batch_size), order_(n) {
        if (batch_size == 0) throw ArgumentError("batch size must be >= 1");
        std::iota(order_.begin(), order_.end(), 0);
        if (shuffle_seed) {
            Rng rng(*shuffle_seed);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.next_unit() * (n - i));
                std::swap(order_[i], order_[j]);
            }
        }
    }

    std::size_t count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

    std::vector<std::size_t> indices(std::size_t b) const {
        const std::size_t lo = b * batch_size_;
        const std::size_t hi = std::min(lo + batch_size_, order_.size());
        return {order_.begin() + lo, order_.begin() + hi};
    }

    Batch gather(const Dataset& ds, std::size_t b) const {
        Batch out;
        out.indices = indices(b);
        Dataset sub = gather_rows(ds, out.indices);
        out.x = std::move(sub.images);
        out.y = std::move(sub.one_hot);
        out.labels = std::move(sub.labels);
        return out;
    }

private:
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
};

inline BatchPlan minibatches(const Dataset& ds, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed) {
    return BatchPlan(ds.size(), batch_size, shuffle_seed);
}

}  // namespace lra
