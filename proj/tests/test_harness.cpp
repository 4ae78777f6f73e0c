#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aggvol/harness.hpp"

using namespace aggvol;

namespace {

RunConfig small_config() {
    RunConfig cfg;
    cfg.reps = 2;
    cfg.t_steps = 320;
    cfg.out_sample = 15;
    cfg.time_cfg = {52, 0.94};
    cfg.state_cfg.window = 250;
    cfg.seed = 1234;
    cfg.threads = 1;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("config validation") {
    RunConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.out_sample = 100;  // 100 + 250 > 320
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.ape_k = {1, 2};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.reps = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("smoke study emits every output file") {
    TempDir dir("aggvol_smoke");
    RunConfig cfg = small_config();
    cfg.reps = 1;
    cfg.out_dir = dir.path.string();
    cfg.emit_panels = true;
    StudyResult study = run_simulation_study(cfg);
    REQUIRE(study.reps.size() == 1);
    const std::string stem = cfg.file_stem("sim");
    for (const char* suffix :
         {"_figure3.csv", "_figure4.csv", "_table1.csv", "_summary.json", "_panel_rep0.csv",
          "_truth_rep0.csv"}) {
        CHECK(std::filesystem::exists(dir.path / (stem + suffix)));
    }
    // single replication: no cross-replication correlation series
    CHECK(study.correlation.points.empty());
    for (double e : study.reps[0].entropy_agg) CHECK(std::isfinite(e));
}

TEST_CASE("identical seeds give byte-identical outputs") {
    TempDir d1("aggvol_det1"), d2("aggvol_det2");
    RunConfig cfg = small_config();
    cfg.reps = 4;
    cfg.threads = 2;
    cfg.out_dir = d1.path.string();
    run_simulation_study(cfg);
    cfg.out_dir = d2.path.string();
    run_simulation_study(cfg);
    const std::string stem = cfg.file_stem("sim");
    for (const char* suffix : {"_figure3.csv", "_figure4.csv", "_table1.csv", "_figure5.csv",
                               "_summary.json"}) {
        const std::string a = slurp(d1.path / (stem + suffix));
        const std::string b = slurp(d2.path / (stem + suffix));
        REQUIRE_FALSE(a.empty());
        CHECK(a == b);
    }
}

TEST_CASE("rolling estimates never look ahead") {
    RunConfig cfg = small_config();
    AffineSolution sol = solve_riccati(cfg.affine, 8.0);
    Rng rng = make_stream(5, 0);
    SimulatedMarket mkt = simulate_market(cfg.affine, sol, cfg.t_steps, rng);
    NormalizedReturns y = normalize(mkt.to_panel(yield_column_names(cfg.affine)));

    const int first = y.count() - cfg.out_sample;
    RollingOutput base = roll_estimates(y, cfg.time_cfg, cfg.state_cfg, first, 1);

    // poison everything at and after the evaluation index
    NormalizedReturns poisoned = y;
    for (int i = first; i < y.count(); ++i) {
        poisoned.rows.row(i).setConstant(1e12);
        // the factor at the evaluation point is known at prediction time, so
        // keep factor[first] intact; later factor values must not matter
        if (i > first) poisoned.factor[i] = 1e12;
    }
    RollingOutput same = roll_estimates(poisoned, cfg.time_cfg, cfg.state_cfg, first, 1);
    CHECK(same.bandwidth == base.bandwidth);
    CHECK((same.steps[0].time.vech() - base.steps[0].time.vech()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(base.steps[0].state.has_value());
    REQUIRE(same.steps[0].state.has_value());
    CHECK((same.steps[0].state->vech() - base.steps[0].state->vech()).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(same.steps[0].omega == base.steps[0].omega);
}

TEST_CASE("simulation losses are scored on the conditional-covariance scale") {
    RunConfig cfg = small_config();
    cfg.reps = 1;
    AffineSolution sol = solve_riccati(cfg.affine, 8.0);
    Rng rng = make_stream(cfg.seed, 0);
    SimulatedMarket mkt = simulate_market(cfg.affine, sol, cfg.t_steps, rng);
    RepResult rep = run_simulation_rep(cfg, mkt);

    NormalizedReturns y = normalize(mkt.to_panel(yield_column_names(cfg.affine)));
    const int first = y.count() - cfg.out_sample;
    RollingOutput rolled = roll_estimates(y, cfg.time_cfg, cfg.state_cfg, first, cfg.out_sample);
    const SymMatrix truth_level = mkt.truth[first] * y.delta;
    const SymMatrix est_level = rolled.steps[0].time * y.delta;
    CHECK(rep.quad_time[0] == Catch::Approx(quadratic_loss(truth_level, est_level)).epsilon(1e-13));
    // entropy loss is scale invariant, so the delta conversion cancels there
    CHECK(rep.entropy_time[0] ==
          Catch::Approx(entropy_loss(mkt.truth[first], rolled.steps[0].time)).epsilon(1e-10));
}

TEST_CASE("per-replication APE with full windows matches the metrics operation") {
    RunConfig cfg = small_config();
    cfg.reps = 1;
    cfg.ape_k = {0, 1};
    AffineSolution sol = solve_riccati(cfg.affine, 8.0);
    Rng rng = make_stream(77, 0);
    SimulatedMarket mkt = simulate_market(cfg.affine, sol, cfg.t_steps, rng);
    NormalizedReturns y = normalize(mkt.to_panel(yield_column_names(cfg.affine)));
    const int first = y.count() - cfg.out_sample;
    RollingOutput rolled = roll_estimates(y, cfg.time_cfg, cfg.state_cfg, first, cfg.out_sample);

    RepResult rep = run_simulation_rep(cfg, mkt);
    std::vector<SymMatrix> time_est;
    for (const auto& s : rolled.steps) time_est.push_back(s.time);
    CHECK(rep.ape[0][0] == Catch::Approx(prediction_error(y, first, time_est)).epsilon(1e-13));
    // k = 1 drops the final step, whose window would leave the data
    std::vector<SymMatrix> trimmed(time_est.begin(), time_est.end() - 1);
    CHECK(rep.ape[1][0] ==
          Catch::Approx(adaptive_prediction_error(y, first, trimmed, 1)).epsilon(1e-13));
}

TEST_CASE("CSV evaluation equals the in-memory evaluation bit for bit") {
    TempDir dir("aggvol_roundtrip");
    RunConfig cfg = small_config();
    AffineSolution sol = solve_riccati(cfg.affine, 8.0);
    Rng rng = make_stream(99, 0);
    SimulatedMarket mkt = simulate_market(cfg.affine, sol, cfg.t_steps, rng);
    PanelSeries panel = mkt.to_panel(yield_column_names(cfg.affine));

    EvaluationTable direct = run_real_evaluation(cfg, panel);

    const auto csv_path = dir.path / "panel.csv";
    write_panel_csv(csv_path.string(), panel);
    CsvSchema schema;
    schema.factor_column = "y_1m";
    PanelSeries reread = ingest_csv(csv_path.string(), panel.delta, schema);
    EvaluationTable via_csv = run_real_evaluation(cfg, reread);

    REQUIRE(via_csv.values.size() == direct.values.size());
    CHECK(via_csv.bandwidth == direct.bandwidth);
    for (std::size_t k = 0; k < direct.values.size(); ++k)
        for (int w = 0; w < 3; ++w) CHECK(via_csv.values[k][w] == direct.values[k][w]);
}

TEST_CASE("real evaluation needs enough data") {
    RunConfig cfg = small_config();
    PanelSeries p;
    p.delta = 1.0 / 52.0;
    p.values = DenseMatrix::Random(100, 3).cwiseAbs();
    CHECK_THROWS_AS(run_real_evaluation(cfg, p), InsufficientData);
}

TEST_CASE("sign test p-values") {
    CHECK(sign_test_pvalue(8, 10) == Catch::Approx(0.0546875).epsilon(1e-12));
    CHECK(sign_test_pvalue(9, 10) == Catch::Approx(0.0107421875).epsilon(1e-12));
    CHECK(sign_test_pvalue(0, 10) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(sign_test_pvalue(10, 10) == Catch::Approx(std::pow(0.5, 10)).epsilon(1e-12));
}

TEST_CASE("corr-test mode emits its files") {
    TempDir dir("aggvol_corr");
    RunConfig cfg = small_config();
    cfg.mode = RunConfig::Mode::corr_test;
    cfg.reps = 6;
    cfg.out_sample = 4;
    cfg.out_dir = dir.path.string();
    StudyResult study = run_corr_test(cfg);
    CHECK(study.correlation.points.size() == 4);
    const std::string stem = cfg.file_stem("corr");
    CHECK(std::filesystem::exists(dir.path / (stem + "_figure5.csv")));
    CHECK(std::filesystem::exists(dir.path / (stem + "_summary.json")));

    cfg.shared_state_path = true;
    cfg.out_dir = (dir.path / "shared").string();
    StudyResult shared = run_corr_test(cfg);
    CHECK(shared.correlation.points.size() == 4);
}
