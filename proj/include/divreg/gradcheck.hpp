#ifndef DIVREG_GRADCHECK_HPP
#define DIVREG_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "divreg/matrix.hpp"

namespace divreg {

/// Central finite-difference gradient of a scalar function of a matrix.
/// Independent of every analytic gradient path in the library; this is the
/// oracle the analytic code is judged against.
Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& point,
                   double step = 1e-6);

/// Worst per-entry relative error |a - f| / max(|a| + |f|, floor). The
/// floor absorbs finite-difference noise on near-zero entries.
double max_rel_error(const Matrix& analytic, const Matrix& fd, double floor = 1e-3);

struct GradCheckEntry {
    std::string component;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    double tolerance = 0.0;
    std::vector<GradCheckEntry> entries;

    bool all_pass() const;
    std::string format() const; // one line per component plus a summary
};

/// Run the finite-difference suites over seeded small instances of the
/// similarity backward pass, every regularizer variant, and end-to-end
/// training losses on tanh networks. fault_injection, when nonzero, is
/// added to one entry of each analytic gradient (test hook: a correct
/// build must then report failures).
GradCheckReport run_gradcheck(double tolerance, double fault_injection = 0.0);

} // namespace divreg

#endif // DIVREG_GRADCHECK_HPP
