#ifndef DIVREG_SIMILARITY_HPP
#define DIVREG_SIMILARITY_HPP

#include "divreg/matrix.hpp"

namespace divreg {

/// Feature-layer outputs for a mini-batch: one row per sample, one column
/// per unit. Entry (j, n) is the scalar output of unit n on sample j.
struct ActivationBatch {
    Matrix values; // m samples x C units

    ActivationBatch() = default;
    explicit ActivationBatch(Matrix v);

    std::size_t samples() const { return values.rows(); }
    std::size_t units() const { return values.cols(); }
};

/// Distance transform inside the RBF kernel. AbsDistance is the default;
/// SquaredDistance is a smooth alternative useful for gradient checking.
enum class Kernel { AbsDistance, SquaredDistance };

/// Batch-averaged pairwise similarity between units: symmetric, unit
/// diagonal (forced exactly), entries in [0, 1] (1 only for identical
/// unit outputs, 0 only on exp underflow).
struct SimilarityMatrix {
    Matrix s; // C x C
    double gamma = 0.0;
    Kernel kernel = Kernel::AbsDistance;

    // cached views from the forward pass so the backward pass does not
    // recompute them; empty on hand-assembled instances (backward then
    // rebuilds what it needs from the activations)
    Matrix by_unit;          // C x m activations
    Matrix exp_neg, exp_pos; // exp(-+gamma * phi) when the kernel factors

    std::size_t units() const { return s.rows(); }
};

/// s_nm = (1/m) * sum_j exp(-gamma * d(phi_n(x_j), phi_m(x_j))) where d is
/// |.| or (.)^2 per the kernel. Each unordered pair is computed once; the
/// diagonal is set to exactly 1. Requires gamma > 0 (finite) and C >= 2.
SimilarityMatrix pairwise_similarity(const ActivationBatch& acts, double gamma,
                                     Kernel kernel = Kernel::AbsDistance);

/// Backward pass of the similarity matrix: given dJ/dS, returns
/// dJ/d(activations), shape m x C. Uses the subgradient convention
/// sign(0) = 0 for the absolute-distance kernel; diagonal entries of
/// grad_s contribute nothing.
Matrix similarity_backward(const ActivationBatch& acts, const SimilarityMatrix& sim,
                           const Matrix& grad_s);

} // namespace divreg

#endif // DIVREG_SIMILARITY_HPP
