#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "aggvol/data.hpp"
#include "aggvol/errors.hpp"
#include "aggvol/symmat.hpp"

namespace aggvol {

/// Stein loss tr(S^-1 E) - log|S^-1 E| - dim. Nonnegative, zero iff E == S.
/// A non-PD estimate is eigenvalue-floored at 1e-8 before evaluation; a
/// non-PD truth is a hard error.
inline double entropy_loss(const SymMatrix& truth, const SymMatrix& est) {
    if (truth.dim() != est.dim()) throw DimensionMismatch("entropy_loss dimension mismatch");
    DenseMatrix lt;
    try {
        lt = chol(truth);
    } catch (const NotPositiveDefinite&) {
        throw TruthNotPD("truth matrix is not positive definite");
    }
    SymMatrix e = est;
    DenseMatrix le;
    try {
        le = chol(e);
    } catch (const NotPositiveDefinite&) {
        e = psd_floor(est, 1e-8);
        le = chol(e);
    }
    // tr(S^-1 E) via triangular solves, log-dets from the Cholesky diagonals.
    DenseMatrix sol = lt.triangularView<Eigen::Lower>().solve(e.dense());
    sol = lt.triangularView<Eigen::Lower>().transpose().solve(sol);
    double logdet_truth = 0.0, logdet_est = 0.0;
    for (int i = 0; i < truth.dim(); ++i) {
        logdet_truth += 2.0 * std::log(lt(i, i));
        logdet_est += 2.0 * std::log(le(i, i));
    }
    return sol.trace() - (logdet_est - logdet_truth) - truth.dim();
}

/// Frobenius loss tr((E - S)^2).
inline double quadratic_loss(const SymMatrix& truth, const SymMatrix& est) {
    if (truth.dim() != est.dim()) throw DimensionMismatch("quadratic_loss dimension mismatch");
    double acc = 0.0;
    const int d = truth.dim();
    for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) {
            const double diff = est(i, j) - truth(i, j);
            acc += (i == j ? 1.0 : 2.0) * diff * diff;
        }
    return acc;
}

/// (1/m) sum_i tr((Y_i Y_i' - Sigma_i)^2). Estimate j corresponds to the
/// return row first_index + j.
inline double prediction_error(const NormalizedReturns& y, int first_index,
                               const std::vector<SymMatrix>& estimates) {
    const int m = static_cast<int>(estimates.size());
    if (m < 1) throw Misalignment("no estimates");
    if (first_index < 0 || first_index + m > y.count())
        throw Misalignment("estimates do not align with return rows");
    double acc = 0.0;
    for (int j = 0; j < m; ++j)
        acc += quadratic_loss(y.outer(first_index + j), estimates[j]);
    return acc / m;
}

/// Adaptive variant: the realized outer product is pre-averaged over
/// [i-k, i+k] before the squared loss. k = 0 reduces to prediction_error.
inline double adaptive_prediction_error(const NormalizedReturns& y, int first_index,
                                        const std::vector<SymMatrix>& estimates, int k) {
    if (k < 0) throw Error("k must be nonnegative");
    const int m = static_cast<int>(estimates.size());
    if (m < 1) throw Misalignment("no estimates");
    if (first_index < 0 || first_index + m > y.count())
        throw Misalignment("estimates do not align with return rows");
    if (first_index - k < 0 || first_index + m - 1 + k >= y.count())
        throw WindowOutOfRange("averaging window [i-k, i+k] leaves the data range");
    double acc = 0.0;
    const double w = 1.0 / (2 * k + 1);
    for (int j = 0; j < m; ++j) {
        const int i = first_index + j;
        SymMatrix avg(y.dim());
        for (int l = i - k; l <= i + k; ++l) avg.add_outer(y.rows.row(l).transpose(), w);
        acc += quadratic_loss(avg, estimates[j]);
    }
    return acc / m;
}

struct CorrelationPoint {
    double r = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int n_used = 0;
    bool accept_zero = false;  // |r| inside the 5% acceptance band
};

struct CorrelationSeries {
    std::vector<CorrelationPoint> points;
    double accept_band = 0.0;  // on the correlation scale, for the common R

    double mean_abs_r() const {
        double acc = 0.0;
        for (const auto& p : points) acc += std::abs(p.r);
        return points.empty() ? 0.0 : acc / static_cast<double>(points.size());
    }

    double accept_fraction() const {
        int acc = 0;
        for (const auto& p : points) acc += p.accept_zero ? 1 : 0;
        return points.empty() ? 0.0 : static_cast<double>(acc) / static_cast<double>(points.size());
    }
};

inline double fisher_halfwidth(int n) { return 1.96 / std::sqrt(static_cast<double>(n - 3)); }

/// Per-step Pearson correlation across replications of the two portfolio
/// variances a' Sigma_T a and a' Sigma_S a, with Fisher-transform 95%
/// intervals and the 5% zero-correlation acceptance band. Replications with
/// a missing (degenerate) state estimate are dropped pairwise per step.
inline CorrelationSeries independence_diagnostic(
    const Vector& a, const std::vector<std::vector<std::optional<SymMatrix>>>& t_estimates,
    const std::vector<std::vector<std::optional<SymMatrix>>>& s_estimates) {
    const int reps = static_cast<int>(t_estimates.size());
    if (reps < 4) throw InsufficientReplications("need at least 4 replications");
    if (s_estimates.size() != t_estimates.size())
        throw Misalignment("replication counts differ");
    const int steps = reps > 0 ? static_cast<int>(t_estimates[0].size()) : 0;

    CorrelationSeries series;
    series.accept_band = std::tanh(fisher_halfwidth(reps));
    series.points.reserve(steps);
    for (int t = 0; t < steps; ++t) {
        std::vector<double> xs, ys;
        xs.reserve(reps);
        ys.reserve(reps);
        for (int r = 0; r < reps; ++r) {
            if (static_cast<int>(t_estimates[r].size()) != steps ||
                static_cast<int>(s_estimates[r].size()) != steps)
                throw Misalignment("step counts differ across replications");
            const auto& te = t_estimates[r][t];
            const auto& se = s_estimates[r][t];
            if (!te || !se) continue;
            xs.push_back(te->quad_form(a));
            ys.push_back(se->quad_form(a));
        }
        const int n = static_cast<int>(xs.size());
        if (n < 4)
            throw InsufficientReplications("fewer than 4 usable replications at step " +
                                           std::to_string(t));
        double mx = 0.0, my = 0.0;
        for (int i = 0; i < n; ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= n;
        my /= n;
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (int i = 0; i < n; ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
            syy += (ys[i] - my) * (ys[i] - my);
        }
        CorrelationPoint pt;
        pt.n_used = n;
        pt.r = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
        pt.r = std::min(1.0, std::max(-1.0, pt.r));
        const double hw = fisher_halfwidth(n);
        if (std::abs(pt.r) < 1.0) {
            pt.ci_lo = std::tanh(std::atanh(pt.r) - hw);
            pt.ci_hi = std::tanh(std::atanh(pt.r) + hw);
        } else {
            pt.ci_lo = pt.ci_hi = pt.r;
        }
        pt.accept_zero = std::abs(pt.r) <= std::tanh(hw);
        series.points.push_back(pt);
    }
    return series;
}

}  // namespace aggvol
