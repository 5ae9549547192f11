#include "divreg/similarity.hpp"

#include <cmath>
#include <string>

#include "divreg/error.hpp"

namespace divreg {

ActivationBatch::ActivationBatch(Matrix v) : values(std::move(v)) {
    if (values.rows() < 1 || values.cols() < 1)
        throw DimensionMismatch("ActivationBatch: need at least 1 sample and 1 unit");
    if (!values.all_finite())
        throw NumericError("ActivationBatch: non-finite activation value");
}

namespace {

void check_gamma(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw InvalidGamma("gamma must be finite and > 0, got " + std::to_string(gamma));
}

// The |.| kernel factors: exp(-g|a-b|) = exp(-g*max) * exp(+g*min). With
// per-unit tables of exp(-+g*phi) the inner loops need no exp calls at all.
// Only safe while g*|phi| stays well inside exp's range.
constexpr double kFactorBound = 350.0;

bool factorable(const Matrix& by_unit, double gamma) {
    for (double v : by_unit.data())
        if (std::fabs(v) * gamma > kFactorBound) return false;
    return true;
}

void build_tables(const Matrix& by_unit, double gamma, Matrix& neg, Matrix& pos) {
    neg = Matrix(by_unit.rows(), by_unit.cols());
    pos = Matrix(by_unit.rows(), by_unit.cols());
    for (std::size_t i = 0; i < by_unit.data().size(); ++i) {
        double e = std::exp(-gamma * by_unit.data()[i]);
        neg.data()[i] = e;
        pos.data()[i] = 1.0 / e; // within the factorable bound, never over/underflows
    }
}

} // namespace

SimilarityMatrix pairwise_similarity(const ActivationBatch& acts, double gamma, Kernel kernel) {
    check_gamma(gamma);
    const std::size_t m = acts.samples();
    const std::size_t c = acts.units();
    if (c < 2)
        throw InvalidArgument("pairwise_similarity: diversity is undefined for a single unit");

    SimilarityMatrix sim;
    sim.gamma = gamma;
    sim.kernel = kernel;
    sim.by_unit = acts.values.transposed(); // unit-major: pairs walk contiguous rows
    sim.s = Matrix(c, c);
    Matrix& s = sim.s;
    const double inv_m = 1.0 / static_cast<double>(m);

    if (kernel == Kernel::AbsDistance && factorable(sim.by_unit, gamma)) {
        build_tables(sim.by_unit, gamma, sim.exp_neg, sim.exp_pos);
        for (std::size_t n = 0; n < c; ++n) {
            s(n, n) = 1.0;
            const double* nn = sim.exp_neg.row(n);
            const double* pn = sim.exp_pos.row(n);
            for (std::size_t q = n + 1; q < c; ++q) {
                const double* nq = sim.exp_neg.row(q);
                const double* pq = sim.exp_pos.row(q);
                // exp(-g|a-b|) is the smaller of the reciprocal pair
                // exp(-g(a-b)), exp(-g(b-a)); min keeps the loop branchless,
                // four accumulators keep it off the add-latency chain
                double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                std::size_t j = 0;
                for (; j + 4 <= m; j += 4) {
                    a0 += std::min(nn[j] * pq[j], nq[j] * pn[j]);
                    a1 += std::min(nn[j + 1] * pq[j + 1], nq[j + 1] * pn[j + 1]);
                    a2 += std::min(nn[j + 2] * pq[j + 2], nq[j + 2] * pn[j + 2]);
                    a3 += std::min(nn[j + 3] * pq[j + 3], nq[j + 3] * pn[j + 3]);
                }
                double acc = (a0 + a1) + (a2 + a3);
                for (; j < m; ++j) acc += std::min(nn[j] * pq[j], nq[j] * pn[j]);
                double v = std::min(acc * inv_m, 1.0); // products can overshoot 1 by an ulp
                s(n, q) = v;
                s(q, n) = v;
            }
        }
        return sim;
    }

    for (std::size_t n = 0; n < c; ++n) {
        s(n, n) = 1.0;
        const double* un = sim.by_unit.row(n);
        for (std::size_t q = n + 1; q < c; ++q) {
            const double* uq = sim.by_unit.row(q);
            double acc = 0.0;
            if (kernel == Kernel::AbsDistance) {
                for (std::size_t j = 0; j < m; ++j) acc += std::exp(-gamma * std::fabs(un[j] - uq[j]));
            } else {
                for (std::size_t j = 0; j < m; ++j) {
                    double d = un[j] - uq[j];
                    acc += std::exp(-gamma * d * d);
                }
            }
            double v = acc * inv_m;
            s(n, q) = v;
            s(q, n) = v;
        }
    }
    return sim;
}

Matrix similarity_backward(const ActivationBatch& acts, const SimilarityMatrix& sim,
                           const Matrix& grad_s) {
    const std::size_t m = acts.samples();
    const std::size_t c = acts.units();
    if (sim.units() != c)
        throw DimensionMismatch("similarity_backward: sim has " + std::to_string(sim.units()) +
                                " units, batch has " + std::to_string(c));
    if (grad_s.rows() != c || grad_s.cols() != c)
        throw DimensionMismatch("similarity_backward: grad_s must be " + std::to_string(c) + "x" +
                                std::to_string(c));
    check_gamma(sim.gamma);

    // reuse the forward pass's cached views when present and shape-correct
    const bool cache_ok = sim.by_unit.rows() == c && sim.by_unit.cols() == m;
    Matrix local_by_unit;
    if (!cache_ok) local_by_unit = acts.values.transposed();
    const Matrix& by_unit = cache_ok ? sim.by_unit : local_by_unit;

    const bool tables_ok = cache_ok && sim.exp_neg.rows() == c && sim.exp_neg.cols() == m;
    Matrix local_neg, local_pos;
    bool fast = sim.kernel == Kernel::AbsDistance;
    if (fast && !tables_ok) {
        if (factorable(by_unit, sim.gamma))
            build_tables(by_unit, sim.gamma, local_neg, local_pos);
        else
            fast = false;
    }
    const Matrix& neg = tables_ok ? sim.exp_neg : local_neg;
    const Matrix& pos = tables_ok ? sim.exp_pos : local_pos;

    Matrix grad_t(c, m); // transposed gradient, symmetric scatter
    const double scale = sim.gamma / static_cast<double>(m);

    for (std::size_t n = 0; n < c; ++n) {
        const double* un = by_unit.row(n);
        double* gn = grad_t.row(n);
        for (std::size_t q = n + 1; q < c; ++q) {
            // s_nq and s_qn share the value and the derivative, so both
            // ordered entries of grad_s fold into one pass over the pair
            const double w = grad_s(n, q) + grad_s(q, n);
            if (w == 0.0) continue;
            const double* uq = by_unit.row(q);
            double* gq = grad_t.row(q);
            if (sim.kernel == Kernel::AbsDistance) {
                if (fast) {
                    const double* __restrict nn = neg.row(n);
                    const double* __restrict pn = pos.row(n);
                    const double* __restrict nq = neg.row(q);
                    const double* __restrict pq = pos.row(q);
                    double* __restrict sn = gn; // rows n and q never overlap
                    double* __restrict sq = gq;
                    const double sw = scale * w;
                    for (std::size_t j = 0; j < m; ++j) {
                        // exp(-g phi) is strictly decreasing, so the sign of
                        // phi_n - phi_q is the sign of nq - nn; ties give 0
                        double sgn = static_cast<double>(nn[j] < nq[j]) -
                                     static_cast<double>(nn[j] > nq[j]);
                        double e = std::min(nn[j] * pq[j], nq[j] * pn[j]);
                        double g = -sw * sgn * e;
                        sn[j] += g;
                        sq[j] -= g;
                    }
                } else {
                    for (std::size_t j = 0; j < m; ++j) {
                        double d = un[j] - uq[j];
                        if (d == 0.0) continue; // sign(0) := 0
                        double sgn = d > 0.0 ? 1.0 : -1.0;
                        double g = -scale * sgn * std::exp(-sim.gamma * std::fabs(d)) * w;
                        gn[j] += g;
                        gq[j] -= g;
                    }
                }
            } else {
                for (std::size_t j = 0; j < m; ++j) {
                    double d = un[j] - uq[j];
                    double g = -scale * 2.0 * d * std::exp(-sim.gamma * d * d) * w;
                    gn[j] += g;
                    gq[j] -= g;
                }
            }
        }
    }
    return grad_t.transposed(); // m x C
}

} // namespace divreg
