#ifndef DIVREG_DATA_HPP
#define DIVREG_DATA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "divreg/matrix.hpp"

namespace divreg {

/// A labeled dataset: N feature rows plus integer class labels.
/// Image-sourced features are scaled to [0, 1].
struct Dataset {
    Matrix features; // N x d
    std::vector<int> labels;
    int num_classes = 0;
    std::string provenance;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    void validate() const;
};

struct SplitFractions {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
};

struct Split {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Gaussian clusters at seeded random centers (uniform in [-4, 4]^dim),
/// n_per_class points each, class-major order. Deterministic per seed.
Dataset gen_blobs(std::size_t n_per_class, int num_classes, std::size_t dim, double spread,
                  std::uint64_t seed);

/// Two interleaved half-circles with Gaussian jitter `noise`; the first
/// moon is the unit half-circle at the origin, the second is shifted to
/// (1, 0.5) and flipped. Deterministic per seed.
Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed);

/// IDX-format image + label pair (big-endian headers, magic 0x00000803 /
/// 0x00000801); pixels scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Numeric CSV, headerless or with a single header line (auto-detected);
/// '#' lines are skipped. label_column is extracted as the class index.
Dataset load_csv(const std::string& path, std::size_t label_column);

/// Plain numeric CSV as a matrix ('#' comment lines skipped).
Matrix load_csv_matrix(const std::string& path);

/// Seeded permutation, then contiguous slicing into train/val/test using
/// largest-remainder apportionment of the fractions (which must be >= 0
/// and sum to 1 within 1e-9).
Split split(const Dataset& ds, SplitFractions fractions, std::uint64_t seed);

/// Replace the labels of exactly floor(rate * N) distinct samples (chosen
/// by a seeded draw without replacement) with a uniformly random different
/// class. The input dataset is left untouched.
Dataset inject_label_noise(const Dataset& ds, double rate, std::uint64_t seed);

/// Mini-batch iteration with a per-epoch reshuffle seeded by (seed, epoch).
/// The final partial batch is emitted.
class BatchStream {
public:
    struct Batch {
        Matrix features;
        std::vector<int> labels;
    };

    BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::size_t epoch);

    std::optional<Batch> next();
    std::size_t num_batches() const;

private:
    const Dataset* ds_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

} // namespace divreg

#endif // DIVREG_DATA_HPP
