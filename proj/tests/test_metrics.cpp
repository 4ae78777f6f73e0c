#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "aggvol/metrics.hpp"
#include "oracles.hpp"

using namespace aggvol;

namespace {

SymMatrix random_pd(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    DenseMatrix a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = g(rng);
    DenseMatrix m = a * a.transpose() + 0.1 * DenseMatrix::Identity(d, d);
    return sym_from_dense(m);
}

NormalizedReturns toy_returns(const DenseMatrix& rows) {
    NormalizedReturns y;
    y.delta = 1.0;
    y.rows = rows;
    y.factor = rows.col(0);
    return y;
}

}  // namespace

TEST_CASE("entropy loss oracle values") {
    SymMatrix i5 = SymMatrix::identity(5);
    CHECK(entropy_loss(i5, i5) == Catch::Approx(0.0).margin(1e-14));
    CHECK(entropy_loss(i5, i5 * 2.0) == Catch::Approx(1.5342640972002735).epsilon(1e-12));

    SymMatrix d(2);
    d(0, 0) = 2.0;
    d(1, 1) = 0.5;
    CHECK(entropy_loss(SymMatrix::identity(2), d) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("entropy loss is nonnegative, zero only at the truth, and asymmetric") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        SymMatrix s = random_pd(4, rng);
        SymMatrix e = random_pd(4, rng);
        CHECK(entropy_loss(s, e) > 0.0);
        CHECK(entropy_loss(s, s) == Catch::Approx(0.0).margin(1e-12));
    }
    SymMatrix s = SymMatrix::identity(3);
    SymMatrix e = SymMatrix::identity(3) * 3.0;
    CHECK(entropy_loss(s, e) != Catch::Approx(entropy_loss(e, s)).epsilon(1e-6));
}

TEST_CASE("entropy loss floors a non-PD estimate and rejects a non-PD truth") {
    SymMatrix truth = SymMatrix::identity(2);
    SymMatrix indefinite(2);
    indefinite(0, 0) = 1.0;
    indefinite(1, 0) = 2.0;
    indefinite(1, 1) = 1.0;  // eigenvalues 3, -1
    const double loss = entropy_loss(truth, indefinite);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    CHECK_THROWS_AS(entropy_loss(indefinite, truth), TruthNotPD);
}

TEST_CASE("quadratic loss oracle values and symmetry") {
    SymMatrix z5(5);
    SymMatrix i5 = SymMatrix::identity(5);
    CHECK(quadratic_loss(i5, i5) == 0.0);
    CHECK(quadratic_loss(z5, i5) == 5.0);

    std::mt19937_64 rng(5);
    SymMatrix a = random_pd(4, rng);
    SymMatrix b = random_pd(4, rng);
    double brute = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const double diff = a(i, j) - b(i, j);
            brute += diff * diff;
        }
    CHECK(quadratic_loss(a, b) == Catch::Approx(brute).epsilon(1e-13));
    CHECK(quadratic_loss(a, b) == quadratic_loss(b, a));
}

TEST_CASE("prediction error basics") {
    DenseMatrix rows = DenseMatrix::Zero(3, 2);
    NormalizedReturns y = toy_returns(rows);
    std::vector<SymMatrix> est = {SymMatrix::identity(2)};
    CHECK(prediction_error(y, 1, est) == Catch::Approx(2.0));

    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    DenseMatrix r2(6, 2);
    for (int i = 0; i < 6; ++i) r2.row(i) << g(rng), g(rng);
    NormalizedReturns y2 = toy_returns(r2);
    std::vector<SymMatrix> exact;
    for (int i = 2; i < 6; ++i) exact.push_back(y2.outer(i));
    CHECK(prediction_error(y2, 2, exact) == Catch::Approx(0.0).margin(1e-14));

    std::vector<SymMatrix> fixed(4, SymMatrix::identity(2));
    double brute = 0.0;
    for (int i = 2; i < 6; ++i) brute += quadratic_loss(y2.outer(i), SymMatrix::identity(2));
    CHECK(prediction_error(y2, 2, fixed) == Catch::Approx(brute / 4.0).epsilon(1e-13));

    CHECK_THROWS_AS(prediction_error(y2, 4, fixed), Misalignment);
    CHECK_THROWS_AS(prediction_error(y2, 0, std::vector<SymMatrix>{}), Misalignment);
}

TEST_CASE("adaptive prediction error") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    DenseMatrix rows(12, 2);
    for (int i = 0; i < 12; ++i) rows.row(i) << g(rng), g(rng);
    NormalizedReturns y = toy_returns(rows);
    std::vector<SymMatrix> est(4, SymMatrix::identity(2));

    SECTION("k = 0 reduces to the prediction error") {
        CHECK(adaptive_prediction_error(y, 4, est, 0) == prediction_error(y, 4, est));
    }
    SECTION("constant outer products hit zero for any k") {
        DenseMatrix ones = DenseMatrix::Ones(12, 1);
        NormalizedReturns yc = toy_returns(ones);
        SymMatrix c(1);
        c(0, 0) = 1.0;
        std::vector<SymMatrix> ce(4, c);
        for (int k : {0, 1, 2})
            CHECK(adaptive_prediction_error(yc, 4, ce, k) == Catch::Approx(0.0).margin(1e-14));
    }
    SECTION("k = 2 matches a direct loop") {
        const int k = 2;
        double brute = 0.0;
        for (int j = 0; j < 4; ++j) {
            const int i = 4 + j;
            SymMatrix avg(2);
            for (int l = i - k; l <= i + k; ++l)
                avg.add_outer(y.rows.row(l).transpose(), 1.0 / (2 * k + 1));
            brute += quadratic_loss(avg, est[j]);
        }
        CHECK(adaptive_prediction_error(y, 4, est, k) == Catch::Approx(brute / 4.0).epsilon(1e-13));
    }
    SECTION("windows must stay inside the data") {
        CHECK_THROWS_AS(adaptive_prediction_error(y, 8, est, 1), WindowOutOfRange);
        CHECK_THROWS_AS(adaptive_prediction_error(y, 0, est, 1), WindowOutOfRange);
    }
}

namespace {

std::vector<std::vector<std::optional<SymMatrix>>> wrap_series(const DenseMatrix& values) {
    // values: reps x steps, diagonal 1x1 matrices
    std::vector<std::vector<std::optional<SymMatrix>>> out;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        std::vector<std::optional<SymMatrix>> row;
        for (Eigen::Index t = 0; t < values.cols(); ++t) {
            SymMatrix m(1);
            m(0, 0) = values(r, t);
            row.emplace_back(m);
        }
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace

TEST_CASE("independence diagnostic recovers perfect and antithetic correlation") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> g;
    const int reps = 40, steps = 3;
    DenseMatrix base(reps, steps);
    for (int r = 0; r < reps; ++r)
        for (int t = 0; t < steps; ++t) base(r, t) = g(rng);
    Vector a = Vector::Ones(1);

    auto ts = wrap_series(base);
    CorrelationSeries same = independence_diagnostic(a, ts, ts);
    for (const auto& p : same.points) CHECK(p.r == Catch::Approx(1.0).margin(1e-12));

    auto anti = wrap_series(DenseMatrix(-base));
    CorrelationSeries opposite = independence_diagnostic(a, ts, anti);
    for (const auto& p : opposite.points) CHECK(p.r == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("Fisher interval matches the frozen R = 500 band") {
    CHECK(std::tanh(fisher_halfwidth(500)) == Catch::Approx(0.08769219073642276).epsilon(1e-12));

    // uncorrelated construction: x alternates, y has two cycles
    const int reps = 500;
    DenseMatrix xs(reps, 1), ys(reps, 1);
    for (int r = 0; r < reps; ++r) {
        xs(r, 0) = (r % 2 == 0) ? 1.0 : -1.0;
        ys(r, 0) = (r % 4 < 2) ? 1.0 : -1.0;
    }
    Vector a = Vector::Ones(1);
    CorrelationSeries cs = independence_diagnostic(a, wrap_series(xs), wrap_series(ys));
    REQUIRE(cs.points.size() == 1);
    CHECK(cs.points[0].r == Catch::Approx(0.0).margin(1e-12));
    CHECK(cs.points[0].ci_lo == Catch::Approx(-0.08769219073642276).epsilon(1e-9));
    CHECK(cs.points[0].ci_hi == Catch::Approx(0.08769219073642276).epsilon(1e-9));
    CHECK(cs.points[0].accept_zero);
}

TEST_CASE("Fisher interval contains r and shrinks like 1/sqrt(R)") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    for (int reps : {50, 200, 800}) {
        DenseMatrix xs(reps, 1), ys(reps, 1);
        for (int r = 0; r < reps; ++r) {
            const double common = g(rng);
            xs(r, 0) = common + g(rng);
            ys(r, 0) = common + g(rng);
        }
        Vector a = Vector::Ones(1);
        CorrelationSeries cs = independence_diagnostic(a, wrap_series(xs), wrap_series(ys));
        const auto& p = cs.points[0];
        CHECK(p.ci_lo < p.r);
        CHECK(p.r < p.ci_hi);
    }
    // interval widths scale roughly as 1/sqrt(R - 3)
    const double w1 = 2.0 * std::tanh(fisher_halfwidth(100));
    const double w2 = 2.0 * std::tanh(fisher_halfwidth(400));
    CHECK(w1 / w2 == Catch::Approx(std::sqrt(397.0 / 97.0)).epsilon(0.02));
}

TEST_CASE("diagnostic needs enough replications and drops missing pairs") {
    Vector a = Vector::Ones(1);
    DenseMatrix tiny(3, 2);
    tiny.setOnes();
    CHECK_THROWS_AS(independence_diagnostic(a, wrap_series(tiny), wrap_series(tiny)),
                    InsufficientReplications);

    std::mt19937_64 rng(19);
    std::normal_distribution<double> g;
    DenseMatrix vals(10, 2);
    for (int r = 0; r < 10; ++r)
        for (int t = 0; t < 2; ++t) vals(r, t) = g(rng);
    auto ts = wrap_series(vals);
    auto ss = wrap_series(vals);
    ss[0][0].reset();
    ss[3][0].reset();
    CorrelationSeries cs = independence_diagnostic(a, ts, ss);
    CHECK(cs.points[0].n_used == 8);
    CHECK(cs.points[1].n_used == 10);
}
