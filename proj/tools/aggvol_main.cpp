// Command-line front end: simulation campaigns, CSV evaluation, the
// correlation diagnostic, and summary reporting.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "aggvol/aggvol.hpp"

namespace {

void print_table(const std::vector<int>& ape_k,
                 const std::vector<std::array<double, 3>>& rows) {
    std::printf("%-6s %14s %14s %14s\n", "k", "time", "state", "aggregated");
    for (std::size_t i = 0; i < ape_k.size(); ++i)
        std::printf("%-6d %14.6e %14.6e %14.6e\n", ape_k[i], rows[i][0], rows[i][1],
                    rows[i][2]);
}

int run_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw aggvol::Error("cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    const std::string mode = j.value("mode", "?");
    std::printf("run summary (%s)\n", mode.c_str());
    if (j.contains("config")) {
        const auto& c = j["config"];
        std::printf("  reps=%d T=%d out_sample=%d seed=%llu n=%d lambda=%g window=%d\n",
                    c.value("reps", 0), c.value("t_steps", 0), c.value("out_sample", 0),
                    static_cast<unsigned long long>(c.value("seed", 0ull)), c.value("n", 0),
                    c.value("lambda", 0.0), c.value("window", 0));
    }
    if (j.contains("estimators")) {
        std::printf("  %-12s %14s %14s %14s\n", "estimator", "entropy", "quadratic", "pe");
        for (const char* name : {"time", "state", "aggregated"}) {
            const auto& e = j["estimators"][name];
            std::printf("  %-12s %14.6e %14.6e %14.6e\n", name,
                        e.value("mean_entropy", 0.0), e.value("mean_quadratic", 0.0),
                        e.value("mean_pe", 0.0));
        }
    }
    if (j.contains("ape")) {
        std::printf("  %-6s %14s %14s %14s\n", "k", "time", "state", "aggregated");
        for (const auto& [key, row] : j["ape"].items())
            std::printf("  %-6s %14.6e %14.6e %14.6e\n", key.c_str(), row.value("time", 0.0),
                        row.value("state", 0.0), row.value("aggregated", 0.0));
    }
    if (j.contains("mean_abs_r"))
        std::printf("  mean |r| = %.4f   accept fraction = %.3f   band = %.4f\n",
                    j.value("mean_abs_r", 0.0), j.value("accept_fraction", 0.0),
                    j.value("accept_band", 0.0));
    if (j.contains("correlation")) {
        const auto& c = j["correlation"];
        std::printf("  correlation: mean |r| = %.4f accept fraction = %.3f\n",
                    c.value("mean_abs_r", 0.0), c.value("accept_fraction", 0.0));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"aggregated volatility-matrix estimation laboratory"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value configuration file");

    aggvol::RunConfig cfg;
    std::string input_csv, factor_col, kernel = "epanechnikov", report_path;
    bool has_date_column = false, use_gcv = false;
    double bandwidth = 0.0, delta = 1.0 / 52.0;
    std::vector<double> portfolio;

    // shared options live on the app; subcommand arguments fall through
    auto* reps_opt = app.add_option("--reps", cfg.reps, "number of replications");
    app.add_option("--T", cfg.t_steps, "observations per replication");
    auto* out_opt = app.add_option("--out-sample", cfg.out_sample, "out-of-sample steps");
    app.add_option("--seed", cfg.seed, "master RNG seed");
    app.add_option("--out-dir", cfg.out_dir, "output directory");
    app.add_option("--lambda", cfg.time_cfg.lambda, "exponential smoothing decay")
        ->check(CLI::Range(1e-6, 1.0));
    app.add_option("--n", cfg.time_cfg.n, "time-domain window length");
    auto* window_opt =
        app.add_option("--window", cfg.state_cfg.window, "state-domain window length");
    app.add_option("--density-bandwidth", cfg.state_cfg.density_bandwidth,
                   "kernel density bandwidth (default: Silverman rule)");
    app.add_option("--kernel", kernel, "epanechnikov | gaussian");
    app.add_option("--ape-k", cfg.ape_k, "APE pre-averaging radii (must include 0)");
    app.add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
    app.add_option("--portfolio", portfolio, "portfolio weights for diagnostics");
    app.add_option("--delta", delta, "sampling interval in years");
    auto* bw_opt = app.add_option("--bandwidth", bandwidth, "fixed state-domain bandwidth");
    app.add_flag("--gcv", use_gcv, "select bandwidth by GCV (default)")->excludes(bw_opt);

    auto* sim = app.add_subcommand("simulate", "simulation study with known truth");
    sim->fallthrough();
    sim->add_flag("--emit-panels", cfg.emit_panels,
                  "also write per-replication panel and truth CSVs");

    auto* ev = app.add_subcommand("evaluate", "rolling PE/APE evaluation of a CSV panel");
    ev->fallthrough();
    ev->add_option("--input", input_csv, "input CSV file")->required();
    ev->add_option("--factor-col", factor_col, "factor column name (default: first)");
    ev->add_flag("--date-column", has_date_column, "first CSV column holds dates");

    auto* corr = app.add_subcommand("corr-test", "cross-replication independence diagnostic");
    corr->fallthrough();
    corr->add_flag("--shared-state-path", cfg.shared_state_path,
                   "share one state path across replications (condition on the factor path)");

    auto* rep = app.add_subcommand("report", "pretty-print a summary JSON");
    rep->add_option("--input", report_path, "summary JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        cfg.state_cfg.kernel = aggvol::kernel_from_name(kernel);
        cfg.state_cfg.bandwidth = use_gcv ? 0.0 : bandwidth;
        cfg.affine.delta = delta;
        if (!portfolio.empty()) {
            cfg.portfolio.resize(static_cast<Eigen::Index>(portfolio.size()));
            for (std::size_t i = 0; i < portfolio.size(); ++i)
                cfg.portfolio[static_cast<Eigen::Index>(i)] = portfolio[i];
        }

        if (sim->parsed()) {
            cfg.mode = aggvol::RunConfig::Mode::simulate;
            aggvol::StudyResult study = aggvol::run_simulation_study(cfg);
            std::printf("simulation study: %d reps, %d out-of-sample steps\n", cfg.reps,
                        cfg.out_sample);
            std::printf("  mean entropy   time=%.4e state=%.4e aggregated=%.4e\n",
                        study.mean_rep_entropy(0), study.mean_rep_entropy(1),
                        study.mean_rep_entropy(2));
            std::printf("  mean quadratic time=%.4e state=%.4e aggregated=%.4e\n",
                        study.mean_rep_quad(0), study.mean_rep_quad(1), study.mean_rep_quad(2));
            std::printf("  mean PE        time=%.4e state=%.4e aggregated=%.4e\n",
                        study.mean_rep_pe(0), study.mean_rep_pe(1), study.mean_rep_pe(2));
            std::printf("  outputs in %s\n", cfg.out_dir.c_str());
        } else if (ev->parsed()) {
            cfg.mode = aggvol::RunConfig::Mode::evaluate;
            if (!window_opt->count()) cfg.state_cfg.window = 900;  // real-data default
            aggvol::CsvSchema schema;
            schema.has_date_column = has_date_column;
            if (!factor_col.empty()) schema.factor_column = factor_col;
            aggvol::EvaluationTable table = aggvol::run_csv_evaluation(cfg, input_csv, schema);
            std::printf("PE/APE over the last %d steps (bandwidth %.6g):\n", table.out_sample,
                        table.bandwidth);
            print_table(table.ape_k, table.values);
        } else if (corr->parsed()) {
            cfg.mode = aggvol::RunConfig::Mode::corr_test;
            if (!reps_opt->count()) cfg.reps = 200;
            if (!out_opt->count()) cfg.out_sample = 20;
            aggvol::StudyResult study = aggvol::run_corr_test(cfg);
            std::printf("correlation diagnostic: %d reps, %d steps%s\n", cfg.reps,
                        cfg.out_sample, cfg.shared_state_path ? " (shared state path)" : "");
            std::printf("  mean |r| = %.4f, accept fraction = %.3f (band %.4f)\n",
                        study.correlation.mean_abs_r(), study.correlation.accept_fraction(),
                        study.correlation.accept_band);
        } else if (rep->parsed()) {
            return run_report(report_path);
        }
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = e.what();
        std::cerr << err.dump() << std::endl;
        return 1;
    }
    return 0;
}
