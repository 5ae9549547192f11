#ifndef DIVREG_LINALG_HPP
#define DIVREG_LINALG_HPP

#include "divreg/matrix.hpp"

namespace divreg {

/// Lower-triangular Cholesky factor L with L * L^T = A + jitter * I.
/// Strictly-upper entries of `lower` are exactly zero; every diagonal
/// entry is > 0.
struct CholeskyFactor {
    Matrix lower;

    std::size_t dim() const { return lower.rows(); }

    /// L * L^T.
    Matrix reconstruct() const;

    /// Solve (L L^T) x = b in place (forward then transposed-back substitution).
    void solve_in_place(std::vector<double>& b) const;
};

/// Absolute tolerance for the symmetry precheck of the factorization inputs.
inline constexpr double kSymmetryTolerance = 1e-10;

/// Factor s + jitter * I. Throws NotSymmetric when s is asymmetric beyond
/// kSymmetryTolerance, NotPositiveDefinite when a pivot <= 0 turns up
/// (the caller may retry with a larger jitter).
CholeskyFactor cholesky(const Matrix& s, double jitter);

/// ln det(s + jitter * I), computed as 2 * sum(ln L_ii).
double logdet_psd(const Matrix& s, double jitter);

/// det(s + jitter * I), computed as prod(L_ii^2).
///
/// With tolerant_singular set and jitter == 0, a Cholesky breakdown on an
/// input that is still PSD within tolerance (probed with a tiny jitter)
/// reports det = 0 -- the correct limit for a singular PSD matrix. Any
/// other breakdown propagates.
double det_psd(const Matrix& s, double jitter, bool tolerant_singular = false);

/// (s + jitter * I)^-1 via triangular solves on the Cholesky factor.
Matrix inverse_psd(const Matrix& s, double jitter);

/// Inverse from an existing factor (two triangular solves per column).
Matrix inverse_from_factor(const CholeskyFactor& f);

} // namespace divreg

#endif // DIVREG_LINALG_HPP
