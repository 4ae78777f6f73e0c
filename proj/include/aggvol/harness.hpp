#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aggvol/affine_sim.hpp"
#include "aggvol/aggregate.hpp"
#include "aggvol/data.hpp"
#include "aggvol/errors.hpp"
#include "aggvol/metrics.hpp"
#include "aggvol/rng.hpp"
#include "aggvol/statedomain.hpp"
#include "aggvol/symmat.hpp"
#include "aggvol/timedomain.hpp"

namespace aggvol {

using json = nlohmann::json;

struct RunConfig {
    enum class Mode { simulate, evaluate, corr_test };

    Mode mode = Mode::simulate;
    int reps = 50;
    int t_steps = 1200;     // observations per replication
    int out_sample = 150;   // evaluation steps at the end of each series
    TimeDomainConfig time_cfg;
    StateDomainConfig state_cfg;
    std::vector<int> ape_k = {0, 1, 2};
    std::uint64_t seed = 42;
    AffineParams affine;
    Vector portfolio;       // defaults to equal weights over the yields
    std::string out_dir = ".";
    int threads = 0;        // 0 = hardware concurrency
    bool emit_panels = false;
    // corr-test only: one state path shared by all replications, fresh
    // measurement noise per replication (conditions on the factor path).
    bool shared_state_path = false;

    Vector resolved_portfolio(int dim) const {
        if (portfolio.size() == 0) return Vector::Constant(dim, 1.0 / dim);
        if (portfolio.size() != dim) throw DimensionMismatch("portfolio length != panel width");
        return portfolio;
    }

    void validate() const {
        time_cfg.validate();
        state_cfg.validate();
        if (reps < 1) throw Error("reps must be >= 1");
        if (out_sample < 1) throw Error("out_sample must be >= 1");
        if (out_sample + std::max(state_cfg.window, time_cfg.n) > t_steps)
            throw Error("out_sample + max(window, n) must not exceed T");
        bool has_zero = false;
        for (int k : ape_k) {
            if (k < 0) throw Error("APE k must be nonnegative");
            has_zero = has_zero || k == 0;
        }
        if (!has_zero) throw Error("ape_k must include k = 0 (the plain PE)");
    }

    std::string file_stem(const std::string& mode_name) const {
        return mode_name + "_seed" + std::to_string(seed) + "_reps" + std::to_string(reps);
    }
};

namespace detail {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

template <typename F>
void parallel_for(int count, int threads, F&& body) {
    threads = std::min(resolve_threads(threads), count);
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline double nan_mean(const std::vector<double>& v) {
    double acc = 0.0;
    int n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            acc += x;
            ++n;
        }
    return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

inline double nan_sd(const std::vector<double>& v) {
    const double m = nan_mean(v);
    double acc = 0.0;
    int n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            acc += (x - m) * (x - m);
            ++n;
        }
    return n > 1 ? std::sqrt(acc / (n - 1)) : std::numeric_limits<double>::quiet_NaN();
}

inline std::vector<double> quantiles(const std::vector<double>& v,
                                     std::initializer_list<double> qs) {
    std::vector<double> clean;
    for (double x : v)
        if (std::isfinite(x)) clean.push_back(x);
    std::sort(clean.begin(), clean.end());
    std::vector<double> out;
    for (double q : qs) {
        if (clean.empty()) {
            out.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double pos = q * (static_cast<double>(clean.size()) - 1.0);
        const auto lo = static_cast<std::size_t>(pos);
        const auto hi = std::min(lo + 1, clean.size() - 1);
        out.push_back(clean[lo] + (pos - static_cast<double>(lo)) * (clean[hi] - clean[lo]));
    }
    return out;
}

/// Guard against look-ahead: every window consumed at step i must end
/// strictly before i.
inline void audit_no_lookahead(int i, int time_window, int state_window) {
    if (time_window > i || state_window > i)
        throw Error("look-ahead audit failed at step " + std::to_string(i));
}

}  // namespace detail

/// One out-of-sample step of the rolling evaluation.
struct StepEstimates {
    int index = 0;                   // return-row index the estimate targets
    double x = 0.0;                  // factor level used for localization
    double omega = 0.0;
    double density = 0.0;
    SymMatrix time;
    std::optional<SymMatrix> state;  // missing when the design is degenerate
    SymMatrix agg;
};

struct RollingOutput {
    int first_index = 0;
    double bandwidth = 0.0;
    std::vector<StepEstimates> steps;
};

/// Roll the three estimators over return rows [first, first + count). The
/// bandwidth is chosen once on the window before `first` (GCV unless the
/// config carries an explicit bandwidth) and held fixed across the roll; the
/// state window shrinks to min(window, i) so the earliest steps remain
/// computable when the invariant holds with equality.
inline RollingOutput roll_estimates(const NormalizedReturns& y, const TimeDomainConfig& time_cfg,
                                    const StateDomainConfig& state_cfg, int first, int count) {
    time_cfg.validate();
    state_cfg.validate();
    if (first < time_cfg.n)
        throw InsufficientHistory("first out-of-sample index " + std::to_string(first) +
                                  " precedes the time-domain window");
    if (first + count > y.count()) throw Misalignment("out-of-sample range exceeds data");

    RollingOutput out;
    out.first_index = first;
    if (state_cfg.bandwidth > 0.0) {
        out.bandwidth = state_cfg.bandwidth;
    } else {
        const int w0 = std::min(state_cfg.window, first);
        out.bandwidth = gcv_bandwidth(
            y, gcv_candidate_grid(y.factor.segment(first - w0, w0)), state_cfg, first);
    }

    const double tau = time_cfg.tau();
    const double nu0 = state_cfg.kernel.nu0();
    out.steps.reserve(count);
    for (int i = first; i < first + count; ++i) {
        StepEstimates step;
        step.index = i;
        step.x = y.factor[i];

        const int window_eff = std::min(state_cfg.window, i);
        detail::audit_no_lookahead(i, time_cfg.n, window_eff);

        step.time = exp_smooth(y, i, time_cfg);

        StateDomainConfig local = state_cfg;
        local.window = window_eff;
        local.bandwidth = out.bandwidth;
        try {
            step.state = local_linear_sigma(y, step.x, local, i);
        } catch (const DegenerateDesign&) {
            step.state.reset();
        }

        const auto factor_window = y.factor.segment(i - window_eff, window_eff);
        const double density_bw = state_cfg.density_bandwidth > 0.0
                                      ? state_cfg.density_bandwidth
                                      : silverman_bandwidth(factor_window);
        step.density = density_bw > 0.0
                           ? kernel_density(factor_window, step.x, density_bw, state_cfg.kernel)
                           : 0.0;

        double omega = 0.0;
        if (step.state) {
            WeightInputs w{tau, nu0, effective_b(window_eff, out.bandwidth, time_cfg.n),
                           step.density};
            omega = optimal_weight(w);
        }
        AggregatedEstimate agg = aggregate(step.state, step.time, omega);
        step.omega = agg.omega;
        step.agg = std::move(agg.sigma);
        out.steps.push_back(std::move(step));
    }
    return out;
}

// --- simulation study ---

struct RepResult {
    double bandwidth = 0.0;
    // per out-of-sample step; losses are on the conditional-covariance scale
    // (delta x Y-scale); state entries are NaN where the design degenerated
    std::vector<double> entropy_time, entropy_state, entropy_agg;
    std::vector<double> quad_time, quad_state, quad_agg;
    std::vector<double> omega;
    // ape[k_idx][which], Y scale, which: 0 = time, 1 = state, 2 = aggregated
    std::vector<std::array<double, 3>> ape;
    // estimates retained for the independence diagnostic
    std::vector<std::optional<SymMatrix>> t_estimates, s_estimates;

    double mean_entropy(int which) const {
        return detail::nan_mean(which == 0   ? entropy_time
                                : which == 1 ? entropy_state
                                             : entropy_agg);
    }
    double mean_quad(int which) const {
        return detail::nan_mean(which == 0 ? quad_time : which == 1 ? quad_state : quad_agg);
    }
};

namespace detail {

/// APE over the out-of-sample steps whose averaging window [i-k, i+k] fits
/// inside the data and whose estimate exists; k = 0 is the plain PE. Matches
/// metrics::adaptive_prediction_error when nothing is skipped.
inline double ape_skipping(const NormalizedReturns& y, const std::vector<StepEstimates>& steps,
                           int k, int which) {
    double acc = 0.0;
    int m = 0;
    const double w = 1.0 / (2 * k + 1);
    for (const auto& s : steps) {
        const SymMatrix* est = which == 0   ? &s.time
                               : which == 1 ? (s.state ? &*s.state : nullptr)
                                            : &s.agg;
        if (!est) continue;
        if (s.index - k < 0 || s.index + k >= y.count()) continue;
        SymMatrix avg(y.dim());
        for (int l = s.index - k; l <= s.index + k; ++l)
            avg.add_outer(y.rows.row(l).transpose(), w);
        acc += quadratic_loss(avg, *est);
        ++m;
    }
    return m ? acc / m : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Evaluate one simulated replication: roll the estimators over the
/// out-of-sample range and score them against the known truth.
inline RepResult run_simulation_rep(const RunConfig& cfg, const SimulatedMarket& mkt) {
    const PanelSeries panel = mkt.to_panel(yield_column_names(cfg.affine));
    const NormalizedReturns y = normalize(panel);
    const int first = y.count() - cfg.out_sample;

    RollingOutput rolled = roll_estimates(y, cfg.time_cfg, cfg.state_cfg, first, cfg.out_sample);

    RepResult res;
    res.bandwidth = rolled.bandwidth;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double delta = y.delta;
    for (const auto& s : rolled.steps) {
        const SymMatrix truth_level = mkt.truth[s.index] * delta;
        const SymMatrix time_level = s.time * delta;
        const SymMatrix agg_level = s.agg * delta;
        res.entropy_time.push_back(entropy_loss(truth_level, time_level));
        res.quad_time.push_back(quadratic_loss(truth_level, time_level));
        res.entropy_agg.push_back(entropy_loss(truth_level, agg_level));
        res.quad_agg.push_back(quadratic_loss(truth_level, agg_level));
        if (s.state) {
            const SymMatrix state_level = *s.state * delta;
            res.entropy_state.push_back(entropy_loss(truth_level, state_level));
            res.quad_state.push_back(quadratic_loss(truth_level, state_level));
        } else {
            res.entropy_state.push_back(nan);
            res.quad_state.push_back(nan);
        }
        res.omega.push_back(s.omega);
        res.t_estimates.emplace_back(s.time);
        res.s_estimates.push_back(s.state);
    }
    for (int k : cfg.ape_k)
        res.ape.push_back({detail::ape_skipping(y, rolled.steps, k, 0),
                           detail::ape_skipping(y, rolled.steps, k, 1),
                           detail::ape_skipping(y, rolled.steps, k, 2)});
    return res;
}

struct StudyResult {
    std::vector<RepResult> reps;
    CorrelationSeries correlation;
    std::vector<int> ape_k;
    int out_sample = 0;
    int first_index = 0;

    // which: 0 = time, 1 = state, 2 = aggregated
    double mean_rep_entropy(int which) const {
        std::vector<double> v;
        v.reserve(reps.size());
        for (const auto& r : reps) v.push_back(r.mean_entropy(which));
        return detail::nan_mean(v);
    }
    double mean_rep_quad(int which) const {
        std::vector<double> v;
        v.reserve(reps.size());
        for (const auto& r : reps) v.push_back(r.mean_quad(which));
        return detail::nan_mean(v);
    }
    double mean_rep_ape(int k_idx, int which) const {
        std::vector<double> v;
        v.reserve(reps.size());
        for (const auto& r : reps) v.push_back(r.ape[k_idx][which]);
        return detail::nan_mean(v);
    }
    double mean_rep_pe(int which) const {
        for (std::size_t i = 0; i < ape_k.size(); ++i)
            if (ape_k[i] == 0) return mean_rep_ape(static_cast<int>(i), which);
        throw Error("ape_k does not contain k = 0");
    }

    /// Replications where the aggregated estimator beats estimator `other`
    /// on the per-rep average; measure: 0 entropy, 1 quadratic, 2 PE.
    int wins_vs(int other, int measure) const {
        int wins = 0;
        for (const auto& r : reps) {
            double agg, oth;
            if (measure == 0) {
                agg = r.mean_entropy(2);
                oth = r.mean_entropy(other);
            } else if (measure == 1) {
                agg = r.mean_quad(2);
                oth = r.mean_quad(other);
            } else {
                agg = r.ape[0][2];
                oth = r.ape[0][other];
            }
            if (std::isfinite(agg) && std::isfinite(oth) && agg < oth) ++wins;
        }
        return wins;
    }
};

/// One-sided sign-test p-value P(X >= wins) under X ~ Binomial(n, 1/2).
inline double sign_test_pvalue(int wins, int n) {
    double p = 0.0;
    const double log_half = std::log(0.5);
    for (int k = wins; k <= n; ++k) {
        const double log_c =
            std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(log_c + n * log_half);
    }
    return std::min(1.0, p);
}

/// Simulate cfg.reps independent markets and evaluate all estimators.
/// Replications run in parallel, each on its own RNG stream; results are
/// reduced in replication order so output is independent of scheduling.
inline StudyResult run_simulation_study_in_memory(const RunConfig& cfg) {
    cfg.validate();
    cfg.affine.validate();
    const double tau_max =
        *std::max_element(cfg.affine.maturities.begin(), cfg.affine.maturities.end());
    const AffineSolution sol = solve_riccati(cfg.affine, tau_max);

    StudyResult study;
    study.ape_k = cfg.ape_k;
    study.out_sample = cfg.out_sample;
    study.first_index = cfg.t_steps - 1 - cfg.out_sample;
    study.reps.resize(cfg.reps);

    std::optional<SimulatedMarket> shared;
    if (cfg.shared_state_path) {
        Rng rng = make_stream(cfg.seed, 0xffffffffULL);
        shared = simulate_market(cfg.affine, sol, cfg.t_steps, rng);
    }

    detail::parallel_for(cfg.reps, cfg.threads, [&](int r) {
        try {
            Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(r));
            SimulatedMarket mkt;
            if (shared) {
                // Same state path for every replication, fresh measurement
                // noise: conditions the diagnostic on the factor path.
                mkt = *shared;
                mkt.observed_yields = mkt.ideal_yields;
                if (!cfg.affine.noise_free()) {
                    DenseMatrix noise_chol = chol(cfg.affine.noise_covariance());
                    std::normal_distribution<double> gauss(0.0, 1.0);
                    Vector z(cfg.affine.n_noisy());
                    for (int t = 0; t < cfg.t_steps; ++t) {
                        for (int i = 0; i < cfg.affine.n_noisy(); ++i) z[i] = gauss(rng);
                        mkt.observed_yields.row(t).tail(cfg.affine.n_noisy()) +=
                            (noise_chol * z).transpose();
                    }
                }
            } else {
                mkt = simulate_market(cfg.affine, sol, cfg.t_steps, rng);
            }
            study.reps[r] = run_simulation_rep(cfg, mkt);
        } catch (const std::exception& e) {
            throw Error("replication " + std::to_string(r) + " (master seed " +
                        std::to_string(cfg.seed) + ") failed: " + e.what());
        }
    });

    const Vector a = cfg.resolved_portfolio(cfg.affine.n_yields());
    std::vector<std::vector<std::optional<SymMatrix>>> t_est, s_est;
    t_est.reserve(cfg.reps);
    s_est.reserve(cfg.reps);
    for (auto& r : study.reps) {
        t_est.push_back(std::move(r.t_estimates));
        s_est.push_back(std::move(r.s_estimates));
    }
    if (cfg.reps >= 4) {
        try {
            study.correlation = independence_diagnostic(a, t_est, s_est);
        } catch (const InsufficientReplications&) {
            // too many degenerate state estimates at some step; the loss
            // outputs are still valid, so only the correlation series is
            // dropped (corr-test mode re-raises)
            study.correlation = CorrelationSeries{};
        }
    }
    return study;
}

// --- real-data / CSV evaluation ---

struct EvaluationTable {
    std::vector<int> ape_k;
    // rows aligned with ape_k; columns: time, state, aggregated
    std::vector<std::array<double, 3>> values;
    double bandwidth = 0.0;
    int out_sample = 0;
};

/// Rolling out-of-sample PE/APE evaluation on observed data (no truth):
/// the last cfg.out_sample return rows are predicted one step ahead.
inline EvaluationTable run_real_evaluation(const RunConfig& cfg, const PanelSeries& panel) {
    panel.validate();
    const NormalizedReturns y = normalize(panel);
    const int need = cfg.out_sample + std::max(cfg.state_cfg.window, cfg.time_cfg.n);
    if (panel.rows() < need)
        throw InsufficientData("panel has " + std::to_string(panel.rows()) + " observations",
                               static_cast<std::size_t>(need));
    const int first = y.count() - cfg.out_sample;
    RollingOutput rolled = roll_estimates(y, cfg.time_cfg, cfg.state_cfg, first, cfg.out_sample);

    EvaluationTable table;
    table.ape_k = cfg.ape_k;
    table.bandwidth = rolled.bandwidth;
    table.out_sample = cfg.out_sample;
    for (int k : cfg.ape_k)
        table.values.push_back({detail::ape_skipping(y, rolled.steps, k, 0),
                                detail::ape_skipping(y, rolled.steps, k, 1),
                                detail::ape_skipping(y, rolled.steps, k, 2)});
    return table;
}

// --- file emission ---

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    return out;
}

inline std::string csv(double v) { return format_double(v); }

}  // namespace detail

/// Names for vech entries: s_1_1, s_2_1, ..., s_d_d (row >= column, 1-based).
inline std::vector<std::string> vech_entry_names(int dim) {
    std::vector<std::string> names;
    for (int j = 0; j < dim; ++j)
        for (int i = j; i < dim; ++i)
            names.push_back("s_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
    return names;
}

inline void write_truth_csv(const std::filesystem::path& path,
                            const std::vector<SymMatrix>& truth) {
    if (truth.empty()) throw Error("empty truth series");
    auto out = detail::open_out(path);
    const auto names = vech_entry_names(truth.front().dim());
    out << "step";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (std::size_t t = 0; t < truth.size(); ++t) {
        out << t;
        for (int k = 0; k < truth[t].vech().size(); ++k)
            out << ',' << detail::csv(truth[t].vech()[k]);
        out << '\n';
    }
}

inline void write_figure3_csv(const std::filesystem::path& path, const StudyResult& study) {
    auto out = detail::open_out(path);
    out << "step,entropy_time_mean,entropy_time_sd,entropy_state_mean,entropy_state_sd,"
           "entropy_agg_mean,entropy_agg_sd,quad_time_mean,quad_time_sd,quad_state_mean,"
           "quad_state_sd,quad_agg_mean,quad_agg_sd\n";
    for (int t = 0; t < study.out_sample; ++t) {
        auto column = [&](auto member) {
            std::vector<double> v;
            v.reserve(study.reps.size());
            for (const auto& r : study.reps) v.push_back((r.*member)[t]);
            return v;
        };
        const auto et = column(&RepResult::entropy_time);
        const auto es = column(&RepResult::entropy_state);
        const auto ea = column(&RepResult::entropy_agg);
        const auto qt = column(&RepResult::quad_time);
        const auto qs = column(&RepResult::quad_state);
        const auto qa = column(&RepResult::quad_agg);
        out << study.first_index + t;
        for (const auto* v : {&et, &es, &ea, &qt, &qs, &qa})
            out << ',' << detail::csv(detail::nan_mean(*v)) << ','
                << detail::csv(detail::nan_sd(*v));
        out << '\n';
    }
}

inline void write_figure4_csv(const std::filesystem::path& path, const StudyResult& study) {
    auto out = detail::open_out(path);
    out << "rep,bandwidth,entropy_time,entropy_state,entropy_agg,quad_time,quad_state,"
           "quad_agg,pe_time,pe_state,pe_agg\n";
    int k0 = -1;
    for (std::size_t i = 0; i < study.ape_k.size(); ++i)
        if (study.ape_k[i] == 0) k0 = static_cast<int>(i);
    for (std::size_t r = 0; r < study.reps.size(); ++r) {
        const auto& rep = study.reps[r];
        out << r << ',' << detail::csv(rep.bandwidth);
        for (int which = 0; which < 3; ++which) out << ',' << detail::csv(rep.mean_entropy(which));
        for (int which = 0; which < 3; ++which) out << ',' << detail::csv(rep.mean_quad(which));
        for (int which = 0; which < 3; ++which)
            out << ',' << detail::csv(k0 >= 0 ? rep.ape[k0][which]
                                              : std::numeric_limits<double>::quiet_NaN());
        out << '\n';
    }
}

inline void write_table1_csv(const std::filesystem::path& path, const std::vector<int>& ape_k,
                             const std::vector<std::array<double, 3>>& rows) {
    auto out = detail::open_out(path);
    out << "k,time,state,aggregated\n";
    for (std::size_t i = 0; i < ape_k.size(); ++i)
        out << ape_k[i] << ',' << detail::csv(rows[i][0]) << ',' << detail::csv(rows[i][1])
            << ',' << detail::csv(rows[i][2]) << '\n';
}

inline void write_figure5_csv(const std::filesystem::path& path, const CorrelationSeries& corr,
                              int first_index) {
    auto out = detail::open_out(path);
    out << "step,r,ci_lo,ci_hi,accept_band,n_used\n";
    for (std::size_t t = 0; t < corr.points.size(); ++t) {
        const auto& p = corr.points[t];
        out << first_index + static_cast<int>(t) << ',' << detail::csv(p.r) << ','
            << detail::csv(p.ci_lo) << ',' << detail::csv(p.ci_hi) << ','
            << detail::csv(corr.accept_band) << ',' << p.n_used << '\n';
    }
}

inline json config_json(const RunConfig& cfg) {
    json j;
    j["reps"] = cfg.reps;
    j["t_steps"] = cfg.t_steps;
    j["out_sample"] = cfg.out_sample;
    j["seed"] = cfg.seed;
    j["n"] = cfg.time_cfg.n;
    j["lambda"] = cfg.time_cfg.lambda;
    j["tau"] = cfg.time_cfg.tau();
    j["window"] = cfg.state_cfg.window;
    j["kernel"] = cfg.state_cfg.kernel.id == KernelId::epanechnikov ? "epanechnikov" : "gaussian";
    j["bandwidth"] = cfg.state_cfg.bandwidth;  // 0 means GCV per replication
    j["ape_k"] = cfg.ape_k;
    j["threads"] = cfg.threads;
    j["shared_state_path"] = cfg.shared_state_path;
    return j;
}

inline json study_summary_json(const RunConfig& cfg, const StudyResult& study) {
    json j;
    j["mode"] = "simulate";
    j["config"] = config_json(cfg);

    const char* names[3] = {"time", "state", "aggregated"};
    for (int which = 0; which < 3; ++which) {
        json e;
        e["mean_entropy"] = study.mean_rep_entropy(which);
        e["mean_quadratic"] = study.mean_rep_quad(which);
        e["mean_pe"] = study.mean_rep_pe(which);
        std::vector<double> rep_ent, rep_quad;
        for (const auto& r : study.reps) {
            rep_ent.push_back(r.mean_entropy(which));
            rep_quad.push_back(r.mean_quad(which));
        }
        e["sd_entropy"] = detail::nan_sd(rep_ent);
        e["sd_quadratic"] = detail::nan_sd(rep_quad);
        e["entropy_quartiles"] = detail::quantiles(rep_ent, {0.25, 0.5, 0.75});
        e["quadratic_quartiles"] = detail::quantiles(rep_quad, {0.25, 0.5, 0.75});
        json ape;
        for (std::size_t k = 0; k < study.ape_k.size(); ++k)
            ape["k" + std::to_string(study.ape_k[k])] =
                study.mean_rep_ape(static_cast<int>(k), which);
        e["ape"] = ape;
        j["estimators"][names[which]] = e;
    }

    const int n = static_cast<int>(study.reps.size());
    json sign;
    for (int measure = 0; measure < 3; ++measure) {
        const char* mname = measure == 0 ? "entropy" : measure == 1 ? "quadratic" : "pe";
        for (int other : {0, 1}) {
            const int wins = study.wins_vs(other, measure);
            json s;
            s["wins"] = wins;
            s["n"] = n;
            s["p_value"] = sign_test_pvalue(wins, n);
            sign[std::string(mname) + "_vs_" + names[other]] = s;
        }
    }
    j["sign_tests_aggregated"] = sign;

    if (!study.correlation.points.empty()) {
        j["correlation"]["mean_abs_r"] = study.correlation.mean_abs_r();
        j["correlation"]["accept_fraction"] = study.correlation.accept_fraction();
        j["correlation"]["accept_band"] = study.correlation.accept_band;
    }

    std::vector<double> bw;
    for (const auto& r : study.reps) bw.push_back(r.bandwidth);
    j["bandwidth_mean"] = detail::nan_mean(bw);
    return j;
}

/// Full simulation campaign: run the study and emit the plot-data files.
inline StudyResult run_simulation_study(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    StudyResult study = run_simulation_study_in_memory(cfg);

    const std::filesystem::path dir(cfg.out_dir);
    const std::string stem = cfg.file_stem("sim");
    write_figure3_csv(dir / (stem + "_figure3.csv"), study);
    write_figure4_csv(dir / (stem + "_figure4.csv"), study);
    std::vector<std::array<double, 3>> table_rows;
    for (std::size_t k = 0; k < study.ape_k.size(); ++k)
        table_rows.push_back({study.mean_rep_ape(static_cast<int>(k), 0),
                              study.mean_rep_ape(static_cast<int>(k), 1),
                              study.mean_rep_ape(static_cast<int>(k), 2)});
    write_table1_csv(dir / (stem + "_table1.csv"), study.ape_k, table_rows);
    if (!study.correlation.points.empty())
        write_figure5_csv(dir / (stem + "_figure5.csv"), study.correlation, study.first_index);
    auto out = detail::open_out(dir / (stem + "_summary.json"));
    out << study_summary_json(cfg, study).dump(2) << '\n';

    if (cfg.emit_panels) {
        const double tau_max =
            *std::max_element(cfg.affine.maturities.begin(), cfg.affine.maturities.end());
        const AffineSolution sol = solve_riccati(cfg.affine, tau_max);
        for (int r = 0; r < cfg.reps; ++r) {
            Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(r));
            const SimulatedMarket mkt = simulate_market(cfg.affine, sol, cfg.t_steps, rng);
            write_panel_csv((dir / (stem + "_panel_rep" + std::to_string(r) + ".csv")).string(),
                            mkt.to_panel(yield_column_names(cfg.affine)));
            write_truth_csv(dir / (stem + "_truth_rep" + std::to_string(r) + ".csv"), mkt.truth);
        }
    }
    return study;
}

inline json evaluation_json(const RunConfig& cfg, const EvaluationTable& table) {
    json j;
    j["mode"] = "evaluate";
    j["config"] = config_json(cfg);
    j["bandwidth"] = table.bandwidth;
    j["out_sample"] = table.out_sample;
    const char* names[3] = {"time", "state", "aggregated"};
    for (std::size_t k = 0; k < table.ape_k.size(); ++k)
        for (int which = 0; which < 3; ++which)
            j["ape"]["k" + std::to_string(table.ape_k[k])][names[which]] =
                table.values[k][which];
    return j;
}

/// CSV evaluation pipeline: ingest, roll, emit the PE/APE table.
inline EvaluationTable run_csv_evaluation(const RunConfig& cfg, const std::string& csv_path,
                                          const CsvSchema& schema) {
    const PanelSeries panel = ingest_csv(csv_path, cfg.affine.delta, schema);
    EvaluationTable table = run_real_evaluation(cfg, panel);
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    const std::string stem = cfg.file_stem("eval");
    std::vector<std::array<double, 3>> rows = table.values;
    write_table1_csv(dir / (stem + "_table1.csv"), table.ape_k, rows);
    auto out = detail::open_out(dir / (stem + "_summary.json"));
    out << evaluation_json(cfg, table).dump(2) << '\n';
    return table;
}

/// Correlation diagnostic campaign (the corr-test mode): a simulation study
/// reduced to the per-step cross-replication correlation of the two
/// single-domain portfolio-variance estimates.
inline StudyResult run_corr_test(const RunConfig& cfg) {
    StudyResult study = run_simulation_study_in_memory(cfg);
    if (study.correlation.points.empty())
        throw InsufficientReplications(
            "correlation series unavailable (too few usable replications)");
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    const std::string stem = cfg.file_stem("corr");
    write_figure5_csv(dir / (stem + "_figure5.csv"), study.correlation, study.first_index);
    json j;
    j["mode"] = "corr-test";
    j["config"] = config_json(cfg);
    j["mean_abs_r"] = study.correlation.mean_abs_r();
    j["accept_fraction"] = study.correlation.accept_fraction();
    j["accept_band"] = study.correlation.accept_band;
    auto out = detail::open_out(dir / (stem + "_summary.json"));
    out << j.dump(2) << '\n';
    return study;
}

}  // namespace aggvol
