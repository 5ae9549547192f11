#ifndef DIVREG_DIVERSITY_HPP
#define DIVREG_DIVERSITY_HPP

#include <optional>
#include <string>
#include <utility>

#include "divreg/matrix.hpp"
#include "divreg/similarity.hpp"

namespace divreg {

enum class RegVariant { None, Direct, Det, Logdet, Decov };

const char* variant_name(RegVariant v);
RegVariant variant_from_name(const std::string& name); // throws UnknownVariant

/// Which regularizer to apply and with what strengths.
///
/// lambda1 scales the aggregate-diversity term J, lambda2 the activation
/// penalty. Decov ignores gamma/epsilon/lambda2 and uses lambda1 as its
/// single coefficient. epsilon is the diagonal jitter that keeps the
/// log-determinant path positive definite.
struct RegularizerSpec {
    RegVariant variant = RegVariant::None;
    double lambda1 = 0.001;
    double lambda2 = 0.001;
    double gamma = 10.0;
    double epsilon = 1e-6;
    bool smooth_kernel = false;

    Kernel kernel() const { return smooth_kernel ? Kernel::SquaredDistance : Kernel::AbsDistance; }
    void validate() const;
};

/// Value and activation gradient of the regularization loss for one batch.
struct RegularizerOutput {
    double loss = 0.0;
    Matrix grad_acts;                    // m x C
    std::optional<double> diag_det;      // det(S) (Det) or logdet(S + eps I) (Logdet)
};

/// An aggregate diversity term: value plus gradient w.r.t. S.
struct JTerm {
    double value = 0.0;
    Matrix grad_s;
};

/// J = sum of all off-diagonal entries of S (both ordered pairs).
JTerm j_direct(const SimilarityMatrix& sim);

/// J = -det(S). The value uses the exact determinant (0 at singular S, via
/// the tolerant path); the gradient follows the jitter-smoothed surrogate
/// -det(S + eps I) * (S + eps I)^-1 so it stays defined at the degenerate
/// point. Jitter escalates x10 up to 3 retries before the failure reports.
JTerm j_det(const SimilarityMatrix& sim, double epsilon);

/// J = -logdet(S + eps I); gradient -(S + eps I)^-1 from the same
/// factorization. epsilon <= 0 falls back to the 1e-6 default.
JTerm j_logdet(const SimilarityMatrix& sim, double epsilon);

/// Sum over the batch of squared activation norms; gradient 2 * acts.
std::pair<double, Matrix> activation_penalty(const ActivationBatch& acts);

/// Decov baseline: half the squared sum of the off-diagonal entries of the
/// batch covariance of the activations (1/m normalization). Requires m >= 2.
std::pair<double, Matrix> decov_loss(const ActivationBatch& acts);

/// Dispatch on spec.variant and assemble the full regularization loss:
/// lambda1 * J(S(acts, gamma)) + lambda2 * penalty(acts) for the diversity
/// variants, lambda1 * decov for Decov, zero for None.
RegularizerOutput regularizer_loss(const ActivationBatch& acts, const RegularizerSpec& spec);

} // namespace divreg

#endif // DIVREG_DIVERSITY_HPP
