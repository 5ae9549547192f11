#include "divreg/diversity.hpp"

#include <cmath>
#include <string>

#include "divreg/error.hpp"
#include "divreg/linalg.hpp"

namespace divreg {

const char* variant_name(RegVariant v) {
    switch (v) {
        case RegVariant::None: return "none";
        case RegVariant::Direct: return "direct";
        case RegVariant::Det: return "det";
        case RegVariant::Logdet: return "logdet";
        case RegVariant::Decov: return "decov";
    }
    return "?";
}

RegVariant variant_from_name(const std::string& name) {
    if (name == "none") return RegVariant::None;
    if (name == "direct") return RegVariant::Direct;
    if (name == "det") return RegVariant::Det;
    if (name == "logdet") return RegVariant::Logdet;
    if (name == "decov") return RegVariant::Decov;
    throw UnknownVariant("unknown regularizer variant \"" + name + "\"");
}

void RegularizerSpec::validate() const {
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1))
        throw InvalidArgument("lambda1 must be finite and >= 0");
    if (!(lambda2 >= 0.0) || !std::isfinite(lambda2))
        throw InvalidArgument("lambda2 must be finite and >= 0");
    if (variant == RegVariant::None || variant == RegVariant::Decov) return;
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw InvalidGamma("gamma must be finite and > 0");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw InvalidArgument("epsilon must be finite and > 0");
}

namespace {

constexpr double kDefaultEpsilon = 1e-6;
constexpr int kJitterRetries = 3;

/// Factor s + jitter*I, escalating the jitter x10 up to kJitterRetries
/// times before the failure propagates.
CholeskyFactor factor_with_escalation(const Matrix& s, double epsilon) {
    double jitter = epsilon;
    for (int attempt = 0;; ++attempt) {
        try {
            return cholesky(s, jitter);
        } catch (const NotPositiveDefinite&) {
            if (attempt >= kJitterRetries) throw;
            jitter *= 10.0;
        }
    }
}

} // namespace

JTerm j_direct(const SimilarityMatrix& sim) {
    const std::size_t c = sim.units();
    JTerm out;
    out.grad_s = Matrix(c, c, 1.0);
    double acc = 0.0;
    for (std::size_t n = 0; n < c; ++n) {
        out.grad_s(n, n) = 0.0;
        for (std::size_t q = 0; q < c; ++q)
            if (q != n) acc += sim.s(n, q);
    }
    out.value = acc;
    return out;
}

JTerm j_det(const SimilarityMatrix& sim, double epsilon) {
    if (epsilon <= 0.0) epsilon = kDefaultEpsilon;
    JTerm out;
    out.value = -det_psd(sim.s, 0.0, /*tolerant_singular=*/true);

    CholeskyFactor factor = factor_with_escalation(sim.s, epsilon);
    double det_jittered = 1.0;
    for (std::size_t i = 0; i < factor.dim(); ++i)
        det_jittered *= factor.lower(i, i) * factor.lower(i, i);
    out.grad_s = inverse_from_factor(factor);
    out.grad_s *= -det_jittered;
    return out;
}

JTerm j_logdet(const SimilarityMatrix& sim, double epsilon) {
    if (epsilon <= 0.0) epsilon = kDefaultEpsilon;
    CholeskyFactor factor = factor_with_escalation(sim.s, epsilon);
    double logdet = 0.0;
    for (std::size_t i = 0; i < factor.dim(); ++i) logdet += std::log(factor.lower(i, i));
    logdet *= 2.0;

    JTerm out;
    out.value = -logdet;
    out.grad_s = inverse_from_factor(factor);
    out.grad_s *= -1.0;
    return out;
}

std::pair<double, Matrix> activation_penalty(const ActivationBatch& acts) {
    double acc = 0.0;
    for (double v : acts.values.data()) acc += v * v;
    Matrix grad = acts.values;
    grad *= 2.0;
    return {acc, std::move(grad)};
}

std::pair<double, Matrix> decov_loss(const ActivationBatch& acts) {
    const std::size_t m = acts.samples();
    const std::size_t c = acts.units();
    if (m < 2)
        throw BatchTooSmall("decov_loss: needs at least 2 samples, got " + std::to_string(m));

    // centered activations
    std::vector<double> mean(c, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const double* row = acts.values.row(j);
        for (std::size_t n = 0; n < c; ++n) mean[n] += row[n];
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (double& v : mean) v *= inv_m;

    Matrix centered(m, c);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t n = 0; n < c; ++n) centered(j, n) = acts.values(j, n) - mean[n];

    // covariance C = (1/m) centered^T centered; loss = 1/2 sum_{n != q} C_nq^2
    Matrix cov = matmul(centered.transposed(), centered);
    cov *= inv_m;
    double loss = 0.0;
    Matrix masked = cov; // dLoss/dC: off-diagonal entries of C, zero diagonal
    for (std::size_t n = 0; n < c; ++n) {
        masked(n, n) = 0.0;
        for (std::size_t q = 0; q < c; ++q)
            if (q != n) loss += 0.5 * cov(n, q) * cov(n, q);
    }

    // d loss / d centered = (2/m) centered * masked (masked is symmetric);
    // centering contributes nothing extra because column sums are zero.
    Matrix grad = matmul(centered, masked);
    grad *= 2.0 * inv_m;
    return {loss, std::move(grad)};
}

RegularizerOutput regularizer_loss(const ActivationBatch& acts, const RegularizerSpec& spec) {
    spec.validate();
    RegularizerOutput out;

    switch (spec.variant) {
        case RegVariant::None: {
            out.grad_acts = Matrix(acts.samples(), acts.units());
            return out;
        }
        case RegVariant::Decov: {
            auto [value, grad] = decov_loss(acts);
            out.loss = spec.lambda1 * value;
            grad *= spec.lambda1;
            out.grad_acts = std::move(grad);
            return out;
        }
        default: break;
    }

    SimilarityMatrix sim = pairwise_similarity(acts, spec.gamma, spec.kernel());
    JTerm j;
    switch (spec.variant) {
        case RegVariant::Direct: j = j_direct(sim); break;
        case RegVariant::Det:
            j = j_det(sim, spec.epsilon);
            out.diag_det = -j.value; // det(S)
            break;
        case RegVariant::Logdet:
            j = j_logdet(sim, spec.epsilon);
            out.diag_det = -j.value; // logdet(S + eps I)
            break;
        default: break;
    }

    auto [penalty, penalty_grad] = activation_penalty(acts);
    out.loss = spec.lambda1 * j.value + spec.lambda2 * penalty;

    Matrix grad = similarity_backward(acts, sim, j.grad_s);
    grad *= spec.lambda1;
    grad.add_scaled(penalty_grad, spec.lambda2);
    out.grad_acts = std::move(grad);
    if (!out.grad_acts.all_finite() || !std::isfinite(out.loss))
        throw NumericError("regularizer_loss: non-finite output");
    return out;
}

} // namespace divreg
