#pragma once

#include <optional>
#include <string>

#include "aggvol/errors.hpp"
#include "aggvol/symmat.hpp"
#include "aggvol/timedomain.hpp"

namespace aggvol {

/// Ingredients of the variance-minimizing weight: tau = n(1-lambda),
/// the kernel constant nu0, the effective-sample ratio b = N h / n, and the
/// factor density at the evaluation point.
struct WeightInputs {
    double tau = 0.0;
    double nu0 = 0.6;
    double b_ratio = 0.0;
    double density_at_x = 0.0;

    void validate() const {
        if (!(tau >= 0.0) || !(nu0 > 0.0) || !(b_ratio >= 0.0) || !(density_at_x >= 0.0))
            throw Error("invalid weight inputs");
    }
};

inline double effective_b(int n_state, double h, int n_time) {
    return static_cast<double>(n_state) * h / static_cast<double>(n_time);
}

/// Variance-minimizing convex weight on the state-domain estimator:
///   omega = b C(tau) p / (2 nu0 + b C(tau) p),  C(tau) = tau(1+e^tau)/(e^tau-1).
/// Written through C(tau) so the moving-average limit tau -> 0 is exact.
/// Degenerate inputs (p = 0, b = 0) give omega = 0.
inline double optimal_weight(const WeightInputs& w) {
    w.validate();
    const double num = w.b_ratio * time_variance_coeff(w.tau) * w.density_at_x;
    if (num <= 0.0) return 0.0;
    const double omega = num / (2.0 * w.nu0 + num);
    return std::min(1.0, std::max(0.0, omega));
}

/// Asymptotic-variance coefficient of the aggregated estimator as a function
/// of the weight: psi(omega) = 2 omega^2 nu0 / p + b (1-omega)^2 C(tau).
/// At p = 0 only omega = 0 is admissible and psi is the time-only branch.
inline double psi_coefficient(double omega, const WeightInputs& w) {
    w.validate();
    if (!(omega >= 0.0 && omega <= 1.0)) throw Error("omega must be in [0, 1]");
    const double time_branch =
        w.b_ratio * (1.0 - omega) * (1.0 - omega) * time_variance_coeff(w.tau);
    if (w.density_at_x == 0.0) {
        if (omega > 0.0)
            throw DensityZeroWithPositiveOmega("psi undefined: p(x) = 0 with omega > 0");
        return time_branch;
    }
    return 2.0 * omega * omega * w.nu0 / w.density_at_x + time_branch;
}

enum class Provenance { time_only, state_only, blended };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::time_only: return "time_only";
        case Provenance::state_only: return "state_only";
        case Provenance::blended: return "blended";
    }
    return "?";
}

struct AggregatedEstimate {
    SymMatrix sigma;
    double omega = 0.0;
    Provenance provenance = Provenance::time_only;
};

/// omega Sigma_S + (1-omega) Sigma_T. A missing state-domain estimate
/// (degenerate neighborhood) falls back to the time-domain estimate.
inline AggregatedEstimate aggregate(const std::optional<SymMatrix>& sigma_s,
                                    const SymMatrix& sigma_t, double omega) {
    if (!(omega >= 0.0 && omega <= 1.0)) throw Error("omega must be in [0, 1]");
    if (!sigma_s) return {sigma_t, 0.0, Provenance::time_only};
    if (sigma_s->dim() != sigma_t.dim())
        throw DimensionMismatch("state and time estimates have different dimensions");
    AggregatedEstimate out;
    out.omega = omega;
    out.sigma = omega * (*sigma_s) + (1.0 - omega) * sigma_t;
    out.provenance = omega == 0.0   ? Provenance::time_only
                     : omega == 1.0 ? Provenance::state_only
                                    : Provenance::blended;
    return out;
}

}  // namespace aggvol
