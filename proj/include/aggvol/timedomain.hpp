#pragma once

#include <cmath>
#include <string>

#include "aggvol/data.hpp"
#include "aggvol/errors.hpp"
#include "aggvol/symmat.hpp"

namespace aggvol {

/// Exponential-smoothing window: n observations, decay lambda in (0,1].
struct TimeDomainConfig {
    int n = 104;
    double lambda = 0.94;

    double tau() const { return n * (1.0 - lambda); }

    void validate() const {
        if (n < 1) throw Error("time-domain window n must be >= 1");
        if (!(lambda > 0.0 && lambda <= 1.0)) throw Error("lambda must be in (0, 1]");
    }
};

/// Variance inflation of exponential smoothing relative to sqrt(n) scaling:
/// tau (1 + e^tau) / (e^tau - 1), with limit 2 at tau = 0 (moving average).
inline double time_variance_coeff(double tau) {
    if (tau < 1e-8) return 2.0;
    const double e = std::expm1(tau);  // e^tau - 1
    return tau * (2.0 + e) / e;
}

/// Equal-weight average of the n squared returns before t.
inline SymMatrix moving_average(const NormalizedReturns& y, int t, int n) {
    if (n < 1) throw Error("window n must be >= 1");
    if (t < n || t > y.count())
        throw InsufficientHistory("need " + std::to_string(n) + " observations before index " +
                                  std::to_string(t));
    SymMatrix acc(y.dim());
    const double w = 1.0 / n;
    for (int i = 1; i <= n; ++i) acc.add_outer(y.rows.row(t - i).transpose(), w);
    return acc;
}

/// Finite-window exponential smoothing with weights normalized to sum to one:
/// (1-lambda)/(1-lambda^n) sum_i lambda^{i-1} Y_{t-i} Y_{t-i}'.
/// lambda = 1 is the moving-average limit.
inline SymMatrix exp_smooth(const NormalizedReturns& y, int t, const TimeDomainConfig& cfg) {
    cfg.validate();
    if (cfg.lambda == 1.0) return moving_average(y, t, cfg.n);
    if (t < cfg.n || t > y.count())
        throw InsufficientHistory("need " + std::to_string(cfg.n) +
                                  " observations before index " + std::to_string(t));
    SymMatrix acc(y.dim());
    const double norm = (1.0 - cfg.lambda) / (1.0 - std::pow(cfg.lambda, cfg.n));
    double w = norm;
    for (int i = 1; i <= cfg.n; ++i) {
        acc.add_outer(y.rows.row(t - i).transpose(), w);
        w *= cfg.lambda;
    }
    return acc;
}

}  // namespace aggvol
