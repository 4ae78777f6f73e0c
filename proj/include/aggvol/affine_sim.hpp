#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "aggvol/data.hpp"
#include "aggvol/errors.hpp"
#include "aggvol/rng.hpp"
#include "aggvol/symmat.hpp"

namespace aggvol {

/// One-factor essentially affine term-structure model
///   ds = (a1q + b11q s) dt + sqrt(s) dW,   r = d0 + d1 s,
/// with zero-coupon yields observed at the given maturities. Yields beyond
/// the first are contaminated with correlated Gaussian measurement noise.
/// Defaults are the Cheridito-Filipovic-Kimmel one-state estimates.
struct AffineParams {
    double a1q = 0.5;
    double b11q = -0.0137;
    double d0 = 0.0110;
    double d1 = 0.0074;
    std::vector<double> maturities = {1.0 / 12.0, 2.0, 4.0, 6.0, 8.0};
    std::vector<double> noise_sd = {0.0119, 0.0144, 0.0155, 0.0159};
    // upper triangle of the noise correlation: rho12, rho13, rho14, rho23, rho24, rho34
    std::vector<double> noise_corr = {0.9727, 0.9511, 0.9371, 0.9950, 0.9877, 0.9978};
    double delta = 1.0 / 52.0;

    int n_yields() const { return static_cast<int>(maturities.size()); }
    int n_noisy() const { return static_cast<int>(noise_sd.size()); }

    /// Gamma invariant law of s: shape 2 a1q, rate -2 b11q.
    double invariant_shape() const { return 2.0 * a1q; }
    double invariant_rate() const { return -2.0 * b11q; }
    double invariant_mean() const { return invariant_shape() / invariant_rate(); }

    /// Covariance of the measurement noise on the noisy yields.
    SymMatrix noise_covariance() const {
        const int m = n_noisy();
        SymMatrix corr = SymMatrix::identity(m);
        int idx = 0;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                if (idx >= static_cast<int>(noise_corr.size()))
                    throw Error("noise_corr needs m(m-1)/2 entries");
                corr(j, i) = noise_corr[idx++];
            }
        SymMatrix cov(m);
        for (int j = 0; j < m; ++j)
            for (int i = j; i < m; ++i) cov(i, j) = noise_sd[i] * noise_sd[j] * corr(i, j);
        return cov;
    }

    /// Noise covariance embedded in the full yield vector: the first yield is
    /// observed without error, so its row and column are zero.
    SymMatrix noise_covariance_padded() const {
        const int m = n_yields();
        SymMatrix out(m);
        SymMatrix cov = noise_covariance();
        for (int j = 0; j < n_noisy(); ++j)
            for (int i = j; i < n_noisy(); ++i) out(i + 1, j + 1) = cov(i, j);
        return out;
    }

    bool noise_free() const {
        for (double sd : noise_sd)
            if (sd != 0.0) return false;
        return true;
    }

    void validate() const {
        if (!(a1q > 0.0)) throw Error("a1q must be positive");
        if (!(b11q < 0.0)) throw Error("b11q must be negative (mean reversion)");
        if (!(delta > 0.0)) throw Error("delta must be positive");
        if (maturities.empty()) throw Error("need at least one maturity");
        if (n_noisy() != n_yields() - 1)
            throw Error("noise_sd must cover all yields except the first");
        if (noise_free()) return;
        try {
            chol(noise_covariance());
        } catch (const NotPositiveDefinite&) {
            throw NoisePSDViolation("noise correlation matrix is not positive definite");
        }
    }
};

/// Bond-pricing functions A(tau), B(tau) on a uniform grid;
/// P(t, tau) = exp(A - B s) and yield = (-A + B s)/tau.
struct AffineSolution {
    double step = 0.0;
    std::vector<double> a;  // a[i] = A(i * step)
    std::vector<double> b;  // b[i] = B(i * step)

    double tau_max() const { return step * (static_cast<double>(a.size()) - 1.0); }

    double a_at(double tau) const { return interp(a, tau); }
    double b_at(double tau) const { return interp(b, tau); }

private:
    double interp(const std::vector<double>& v, double tau) const {
        if (tau < 0.0 || tau > tau_max() * (1.0 + 1e-12))
            throw MaturityOutOfRange("tau = " + std::to_string(tau) +
                                     " outside solved range [0, " + std::to_string(tau_max()) +
                                     "]");
        const double pos = tau / step;
        const auto i = static_cast<std::size_t>(pos);
        if (i + 1 >= v.size()) return v.back();
        const double frac = pos - static_cast<double>(i);
        return v[i] + frac * (v[i + 1] - v[i]);
    }
};

namespace detail {

/// Classic fixed-step RK4 for dA/dtau = -a1q B - d0, dB/dtau = b11q B - B^2/2 + d1,
/// A(0) = B(0) = 0.
inline AffineSolution riccati_rk4(const AffineParams& p, std::size_t n, double step) {
    AffineSolution sol;
    sol.step = step;
    sol.a.resize(n + 1);
    sol.b.resize(n + 1);
    sol.a[0] = 0.0;
    sol.b[0] = 0.0;
    const auto fa = [&](double b) { return -p.a1q * b - p.d0; };
    const auto fb = [&](double b) { return p.b11q * b - 0.5 * b * b + p.d1; };
    double a = 0.0, b = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double ka1 = fa(b), kb1 = fb(b);
        const double kb_half1 = fb(b + 0.5 * step * kb1);
        const double ka2 = fa(b + 0.5 * step * kb1);
        const double kb_half2 = fb(b + 0.5 * step * kb_half1);
        const double ka3 = fa(b + 0.5 * step * kb_half1);
        const double kb_full = fb(b + step * kb_half2);
        const double ka4 = fa(b + step * kb_half2);
        a += step / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4);
        b += step / 6.0 * (kb1 + 2.0 * kb_half1 + 2.0 * kb_half2 + kb_full);
        sol.a[i] = a;
        sol.b[i] = b;
    }
    return sol;
}

}  // namespace detail

/// Solve the bond-pricing ODEs by fixed-step RK4. When validate_step is set,
/// a run at step/2 must agree at tau_max to 1e-8 or StepTooLarge is thrown.
inline AffineSolution solve_riccati(const AffineParams& params, double tau_max,
                                    double step = 1e-3, bool validate_step = true) {
    if (step <= 0.0) throw Error("step must be positive");
    if (tau_max < step) throw Error("tau_max must be at least one step");
    const auto n = static_cast<std::size_t>(std::ceil(tau_max / step - 1e-9));
    AffineSolution sol = detail::riccati_rk4(params, n, step);
    if (validate_step) {
        AffineSolution half = detail::riccati_rk4(params, 2 * n, step / 2.0);
        if (std::abs(sol.b.back() - half.b.back()) > 1e-8)
            throw StepTooLarge("halving the step moves B(tau_max) by more than 1e-8");
    }
    return sol;
}

inline double yield_curve(const AffineSolution& sol, double s, double tau) {
    if (tau <= 0.0) throw MaturityOutOfRange("maturity must be positive");
    return (-sol.a_at(tau) + sol.b_at(tau) * s) / tau;
}

/// Exact transition draw: given s_t = x, 2c s_{t+delta} is noncentral
/// chi-squared with df = 4 a1q and noncentrality 2cx e^{b delta}, where
/// c = 2 b / (e^{b delta} - 1). Sampled as a Poisson mixture of gammas.
inline double cir_transition_sample(double x, const AffineParams& p, Rng& rng) {
    if (!(x > 0.0)) throw NonPositiveState("state must be positive, got " + std::to_string(x));
    const double ebd = std::exp(p.b11q * p.delta);
    const double c = 2.0 * p.b11q / (ebd - 1.0);
    const double lambda_nc = 2.0 * c * x * ebd;
    std::poisson_distribution<long> mix(0.5 * lambda_nc);
    const long j = mix(rng);
    std::gamma_distribution<double> chi2(0.5 * (4.0 * p.a1q) + static_cast<double>(j), 2.0);
    const double v = chi2(rng);
    return v / (2.0 * c);
}

inline double cir_invariant_sample(const AffineParams& p, Rng& rng) {
    std::gamma_distribution<double> g(p.invariant_shape(), 1.0 / p.invariant_rate());
    return g(rng);
}

inline double cir_conditional_mean(const AffineParams& p, double x) {
    const double ebd = std::exp(p.b11q * p.delta);
    return x * ebd + p.a1q * (ebd - 1.0) / p.b11q;
}

/// Var(s_{t+delta} | s_t = x); matches the noncentral chi-squared moments of
/// the exact transition law.
inline double cir_conditional_variance(const AffineParams& p, double x) {
    const double ebd = std::exp(p.b11q * p.delta);
    return x * (ebd - ebd * ebd) / (-p.b11q) +
           p.a1q * (1.0 - ebd) * (1.0 - ebd) / (2.0 * p.b11q * p.b11q);
}

/// Conditional covariance of the normalized yield changes given s_t = s:
/// [beta beta' Var(s_{t+delta}|s) + 2 Sigma_eps] / delta with beta_i = B(tau_i)/tau_i.
inline SymMatrix truth_covariance(const AffineSolution& sol, const AffineParams& p, double s) {
    if (!(s > 0.0)) throw NonPositiveState("state must be positive");
    const int m = p.n_yields();
    Vector beta(m);
    for (int i = 0; i < m; ++i) beta[i] = sol.b_at(p.maturities[i]) / p.maturities[i];
    const double v = cir_conditional_variance(p, s);
    SymMatrix out = p.noise_covariance_padded() * 2.0;
    out.add_outer(beta, v);
    return out * (1.0 / p.delta);
}

/// Small-delta approximation replacing the exact one-step variance with the
/// instantaneous diffusion s * delta. Exposed for sensitivity comparison.
inline SymMatrix truth_covariance_instantaneous(const AffineSolution& sol,
                                                const AffineParams& p, double s) {
    if (!(s > 0.0)) throw NonPositiveState("state must be positive");
    const int m = p.n_yields();
    Vector beta(m);
    for (int i = 0; i < m; ++i) beta[i] = sol.b_at(p.maturities[i]) / p.maturities[i];
    SymMatrix out = p.noise_covariance_padded() * 2.0;
    out.add_outer(beta, s * p.delta);
    return out * (1.0 / p.delta);
}

struct SimulatedMarket {
    double delta = 0.0;
    Vector state_path;            // length T
    DenseMatrix ideal_yields;     // T x M
    DenseMatrix observed_yields;  // T x M, first column noise free
    std::vector<SymMatrix> truth; // length T-1, aligned with normalized returns

    PanelSeries to_panel(const std::vector<std::string>& names) const {
        PanelSeries panel;
        panel.delta = delta;
        panel.values = observed_yields;
        panel.column_names = names;
        panel.factor_col = 0;
        return panel;
    }
};

inline std::string maturity_label(double tau) {
    if (tau < 1.0) return std::to_string(static_cast<int>(std::lround(tau * 12.0))) + "m";
    return std::to_string(static_cast<int>(std::lround(tau))) + "y";
}

inline std::vector<std::string> yield_column_names(const AffineParams& p) {
    std::vector<std::string> names;
    names.reserve(p.maturities.size());
    for (double tau : p.maturities) names.push_back("y_" + maturity_label(tau));
    return names;
}

/// Simulate T observations: s_0 from the invariant law, exact transitions,
/// affine yields, and i.i.d. Gaussian noise on every yield except the first.
inline SimulatedMarket simulate_market(const AffineParams& params, const AffineSolution& sol,
                                       int t_steps, Rng& rng) {
    params.validate();
    if (t_steps < 2) throw Error("need at least 2 observations");
    const int m = params.n_yields();

    SimulatedMarket mkt;
    mkt.delta = params.delta;
    mkt.state_path.resize(t_steps);
    mkt.state_path[0] = cir_invariant_sample(params, rng);
    for (int t = 1; t < t_steps; ++t)
        mkt.state_path[t] = cir_transition_sample(mkt.state_path[t - 1], params, rng);

    mkt.ideal_yields.resize(t_steps, m);
    for (int t = 0; t < t_steps; ++t)
        for (int i = 0; i < m; ++i)
            mkt.ideal_yields(t, i) = yield_curve(sol, mkt.state_path[t], params.maturities[i]);

    mkt.observed_yields = mkt.ideal_yields;
    if (!params.noise_free()) {
        DenseMatrix noise_chol = chol(params.noise_covariance());
        std::normal_distribution<double> gauss(0.0, 1.0);
        Vector z(params.n_noisy());
        for (int t = 0; t < t_steps; ++t) {
            for (int i = 0; i < params.n_noisy(); ++i) z[i] = gauss(rng);
            mkt.observed_yields.row(t).tail(params.n_noisy()) += (noise_chol * z).transpose();
        }
    }

    mkt.truth.reserve(t_steps - 1);
    for (int t = 0; t + 1 < t_steps; ++t)
        mkt.truth.push_back(truth_covariance(sol, params, mkt.state_path[t]));
    return mkt;
}

inline SimulatedMarket simulate_market(const AffineParams& params, int t_steps, Rng& rng) {
    const double tau_max = *std::max_element(params.maturities.begin(), params.maturities.end());
    AffineSolution sol = solve_riccati(params, tau_max);
    return simulate_market(params, sol, t_steps, rng);
}

}  // namespace aggvol
