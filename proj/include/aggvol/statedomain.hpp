#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "aggvol/data.hpp"
#include "aggvol/errors.hpp"
#include "aggvol/symmat.hpp"

namespace aggvol {

enum class KernelId { epanechnikov, gaussian };

/// Symmetric probability-density kernel with its analytic moment constants
/// mu2 = int u^2 K(u) du and nu0 = int K(u)^2 du.
struct Kernel {
    KernelId id = KernelId::epanechnikov;

    double operator()(double u) const {
        switch (id) {
            case KernelId::epanechnikov:
                return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
            case KernelId::gaussian:
                return std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
        }
        return 0.0;
    }

    double mu2() const { return id == KernelId::epanechnikov ? 0.2 : 1.0; }

    double nu0() const {
        return id == KernelId::epanechnikov ? 0.6 : 1.0 / (2.0 * std::sqrt(M_PI));
    }

    bool compact_support() const { return id == KernelId::epanechnikov; }
};

struct KernelMoments {
    double mu2;
    double nu0;
};

inline KernelMoments kernel_moments(const Kernel& k) { return {k.mu2(), k.nu0()}; }

inline Kernel kernel_from_name(const std::string& name) {
    if (name == "epanechnikov") return {KernelId::epanechnikov};
    if (name == "gaussian") return {KernelId::gaussian};
    throw Error("unknown kernel '" + name + "'");
}

struct StateDomainConfig {
    Kernel kernel;
    double bandwidth = 0.0;          // <= 0 means "select by GCV"
    int window = 1050;
    double min_denominator = 1e-12;  // scale factor in the degeneracy guard
    int min_effective = 5;           // minimum points with positive kernel mass
    double density_bandwidth = 0.0;  // <= 0 means Silverman rule

    void validate() const {
        if (window < 10) throw Error("state-domain window must be >= 10");
    }
};

struct WeightSums {
    double w0, w1, w2, w3;
};

/// W_l(x) = sum_k (f_k - x)^l K_h(f_k - x) with K_h(u) = K(u/h)/h.
inline WeightSums weight_sums(const Eigen::Ref<const Vector>& factor, double x, double h,
                              const Kernel& kernel) {
    if (h <= 0.0) throw Error("bandwidth must be positive");
    WeightSums s{0.0, 0.0, 0.0, 0.0};
    const double inv_h = 1.0 / h;
    for (Eigen::Index k = 0; k < factor.size(); ++k) {
        const double u = factor[k] - x;
        const double kv = kernel(u * inv_h) * inv_h;
        if (kv == 0.0) continue;
        s.w0 += kv;
        s.w1 += u * kv;
        s.w2 += u * u * kv;
        s.w3 += u * u * u * kv;
    }
    return s;
}

/// Equivalent-kernel weights of the local linear smoother at x:
///   w_k = K_h(f_k - x) { W2 - (f_k - x) W1 } / { W0 W2 - W1^2 }.
/// They satisfy sum w_k = 1 and sum w_k (f_k - x) = 0. Throws
/// DegenerateDesign when the neighborhood carries no usable spread.
inline Vector equivalent_weights(const Eigen::Ref<const Vector>& factor, double x, double h,
                                 const Kernel& kernel, double min_denominator = 1e-12,
                                 int min_effective = 5) {
    if (h <= 0.0) throw Error("bandwidth must be positive");
    const Eigen::Index n = factor.size();
    if (n == 0) throw DegenerateDesign("empty design");
    Vector kv(n);
    double w0 = 0.0, w1 = 0.0, w2 = 0.0;
    int effective = 0;
    const double inv_h = 1.0 / h;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double u = factor[k] - x;
        const double v = kernel(u * inv_h) * inv_h;
        kv[k] = v;
        if (v > 0.0) ++effective;
        w0 += v;
        w1 += u * v;
        w2 += u * u * v;
    }
    const double denom = w0 * w2 - w1 * w1;
    if (effective < min_effective || denom <= min_denominator * (w0 * h) * (w0 * h))
        throw DegenerateDesign("no usable neighborhood around x = " + std::to_string(x));
    Vector w(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double u = factor[k] - x;
        w[k] = kv[k] == 0.0 ? 0.0 : kv[k] * (w2 - u * w1) / denom;
    }
    return w;
}

/// Local linear estimate sum_k w_k(x) Y_k Y_k' over the cfg.window pairs
/// strictly before t. Symmetric by construction; not necessarily PSD.
inline SymMatrix local_linear_sigma(const NormalizedReturns& y, double x,
                                    const StateDomainConfig& cfg, int t) {
    cfg.validate();
    if (cfg.bandwidth <= 0.0) throw Error("state-domain bandwidth not set");
    if (t < cfg.window || t > y.count())
        throw InsufficientHistory("need " + std::to_string(cfg.window) +
                                  " pairs before index " + std::to_string(t));
    const int begin = t - cfg.window;
    Vector w = equivalent_weights(y.factor.segment(begin, cfg.window), x, cfg.bandwidth,
                                  cfg.kernel, cfg.min_denominator, cfg.min_effective);
    SymMatrix acc(y.dim());
    for (int k = 0; k < cfg.window; ++k) {
        if (w[k] == 0.0) continue;
        acc.add_outer(y.rows.row(begin + k).transpose(), w[k]);
    }
    return acc;
}

/// Kernel density estimate (1/(N b)) sum_k K((f_k - x)/b).
inline double kernel_density(const Eigen::Ref<const Vector>& factor, double x, double bw,
                             const Kernel& kernel = Kernel{}) {
    if (factor.size() == 0) throw Error("empty factor sample");
    if (bw <= 0.0) throw Error("density bandwidth must be positive");
    double acc = 0.0;
    const double inv_b = 1.0 / bw;
    for (Eigen::Index k = 0; k < factor.size(); ++k)
        acc += kernel((factor[k] - x) * inv_b);
    return acc * inv_b / static_cast<double>(factor.size());
}

/// 1.06 sd N^{-1/5}
inline double silverman_bandwidth(const Eigen::Ref<const Vector>& factor) {
    const Eigen::Index n = factor.size();
    if (n < 2) return 0.0;
    const double mean = factor.mean();
    const double var = (factor.array() - mean).square().sum() / static_cast<double>(n - 1);
    return 1.06 * std::sqrt(var) * std::pow(static_cast<double>(n), -0.2);
}

/// Log-spaced bandwidth grid spanning [lo, hi] x sd(factor) x N^{-1/5}.
inline std::vector<double> gcv_candidate_grid(const Eigen::Ref<const Vector>& factor,
                                              int points = 20, double lo = 0.1,
                                              double hi = 3.0) {
    const Eigen::Index n = factor.size();
    const double mean = factor.mean();
    const double sd =
        std::sqrt((factor.array() - mean).square().sum() / std::max<double>(1.0, n - 1.0));
    const double scale = sd * std::pow(static_cast<double>(n), -0.2);
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i) {
        const double s = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
        grid[i] = scale * std::exp(std::log(lo) + s * (std::log(hi) - std::log(lo)));
    }
    return grid;
}

/// Generalized cross validation with a single bandwidth shared across all
/// vech entries: GCV(h) = RSS(h) / (1 - tr(H_h)/N)^2, where RSS accumulates
/// the squared residuals of the in-window fits of vech(Y_k Y_k') and tr(H_h)
/// is the sum of self-weights. A candidate is admissible only when the
/// smoother is defined at every design point. Window: the cfg.window pairs
/// before t.
inline double gcv_bandwidth(const NormalizedReturns& y, const std::vector<double>& candidates,
                            const StateDomainConfig& cfg, int t) {
    cfg.validate();
    if (candidates.size() < 1) throw Error("no bandwidth candidates");
    const int window = std::min(cfg.window, t);
    if (window < 10 || t > y.count())
        throw InsufficientHistory("GCV needs at least 10 pairs before index " +
                                  std::to_string(t));
    const int begin = t - window;
    const int d = y.dim();
    const int m = vech_size(d);

    // Pre-stack the vech responses for the window.
    DenseMatrix z(window, m);
    for (int k = 0; k < window; ++k) {
        const auto row = y.rows.row(begin + k);
        int idx = 0;
        for (int j = 0; j < d; ++j)
            for (int i = j; i < d; ++i) z(k, idx++) = row[i] * row[j];
    }
    const auto factor = y.factor.segment(begin, window);

    double best_h = 0.0;
    double best_score = std::numeric_limits<double>::infinity();
    for (double h : candidates) {
        if (h <= 0.0) continue;
        double rss = 0.0;
        double tr_h = 0.0;
        bool admissible = true;
        for (int k = 0; k < window; ++k) {
            Vector w;
            try {
                w = equivalent_weights(factor, factor[k], h, cfg.kernel, cfg.min_denominator,
                                       cfg.min_effective);
            } catch (const DegenerateDesign&) {
                // the smoother must be defined at every design point, or the
                // RSS sums are not comparable across candidates
                admissible = false;
                break;
            }
            Eigen::RowVectorXd fit = Eigen::RowVectorXd::Zero(m);
            for (int j = 0; j < window; ++j)
                if (w[j] != 0.0) fit += w[j] * z.row(j);
            rss += (z.row(k) - fit).squaredNorm();
            tr_h += w[k];
        }
        if (!admissible) continue;
        const double penalty = 1.0 - tr_h / window;
        if (penalty <= 1e-10) continue;
        const double score = rss / (penalty * penalty);
        if (score < best_score) {
            best_score = score;
            best_h = h;
        }
    }
    if (best_h <= 0.0)
        throw AllCandidatesDegenerate("no bandwidth candidate admits a usable fit");
    return best_h;
}

}  // namespace aggvol
