#include "divreg/linalg.hpp"

#include <cmath>
#include <string>

#include "divreg/error.hpp"

namespace divreg {

namespace {

void require_square_symmetric(const Matrix& s) {
    if (s.rows() != s.cols() || s.rows() == 0)
        throw DimensionMismatch("cholesky: input must be square and non-empty, got " +
                                std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = i + 1; j < s.cols(); ++j)
            if (std::fabs(s(i, j) - s(j, i)) > kSymmetryTolerance)
                throw NotSymmetric("cholesky: |s(" + std::to_string(i) + "," + std::to_string(j) +
                                   ") - s(" + std::to_string(j) + "," + std::to_string(i) +
                                   ")| exceeds tolerance");
}

} // namespace

Matrix CholeskyFactor::reconstruct() const {
    return matmul(lower, lower.transposed());
}

void CholeskyFactor::solve_in_place(std::vector<double>& b) const {
    const std::size_t n = dim();
    if (b.size() != n) throw DimensionMismatch("solve_in_place: rhs length mismatch");
    const Matrix& L = lower;
    // forward: L y = b
    for (std::size_t i = 0; i < n; ++i) {
        double acc = b[i];
        const double* li = L.row(i);
        for (std::size_t k = 0; k < i; ++k) acc -= li[k] * b[k];
        b[i] = acc / li[i];
    }
    // backward: L^T x = y
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t k = i + 1; k < n; ++k) acc -= L(k, i) * b[k];
        b[i] = acc / L(i, i);
    }
}

CholeskyFactor cholesky(const Matrix& s, double jitter) {
    if (!(jitter >= 0.0))
        throw InvalidArgument("cholesky: jitter must be >= 0");
    require_square_symmetric(s);

    const std::size_t n = s.rows();
    Matrix L(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = s(j, j) + jitter;
        const double* lj = L.row(j);
        for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
        if (!(d > 0.0))
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(d) + " at column " +
                                      std::to_string(j));
        const double ljj = std::sqrt(d);
        L(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double acc = s(i, j);
            const double* li = L.row(i);
            for (std::size_t k = 0; k < j; ++k) acc -= li[k] * lj[k];
            L(i, j) = acc / ljj;
        }
    }
    return CholeskyFactor{std::move(L)};
}

double logdet_psd(const Matrix& s, double jitter) {
    CholeskyFactor f = cholesky(s, jitter);
    double acc = 0.0;
    for (std::size_t i = 0; i < f.dim(); ++i) acc += std::log(f.lower(i, i));
    return 2.0 * acc;
}

double det_psd(const Matrix& s, double jitter, bool tolerant_singular) {
    try {
        CholeskyFactor f = cholesky(s, jitter);
        double acc = 1.0;
        for (std::size_t i = 0; i < f.dim(); ++i) acc *= f.lower(i, i) * f.lower(i, i);
        return acc;
    } catch (const NotPositiveDefinite&) {
        if (!tolerant_singular || jitter != 0.0) throw;
        // Probe with a tiny scale-aware jitter: success means the input is
        // PSD within tolerance and merely singular, so det = 0 is the limit.
        double max_diag = 0.0;
        for (std::size_t i = 0; i < s.rows(); ++i)
            max_diag = std::max(max_diag, std::fabs(s(i, i)));
        cholesky(s, 1e-8 * std::max(1.0, max_diag)); // throws if genuinely indefinite
        return 0.0;
    }
}

Matrix inverse_from_factor(const CholeskyFactor& f) {
    const std::size_t n = f.dim();
    Matrix inv(n, n);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(col.begin(), col.end(), 0.0);
        col[j] = 1.0;
        f.solve_in_place(col);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    // enforce exact symmetry of the result
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = v;
            inv(j, i) = v;
        }
    if (!inv.all_finite()) throw NumericError("inverse_psd: non-finite entries in result");
    return inv;
}

Matrix inverse_psd(const Matrix& s, double jitter) {
    return inverse_from_factor(cholesky(s, jitter));
}

} // namespace divreg
