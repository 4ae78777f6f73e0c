#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "aggvol/symmat.hpp"
#include "oracles.hpp"

using namespace aggvol;

namespace {

DenseMatrix random_symmetric(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    DenseMatrix a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = g(rng);
    return a;
}

}  // namespace

TEST_CASE("vech stacks the lower triangle column by column") {
    DenseMatrix a(2, 2);
    a << 1, 2, 2, 3;
    Vector v = vech(a);
    REQUIRE(v.size() == 3);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 2.0);
    CHECK(v[2] == 3.0);

    Vector vi = vech(DenseMatrix::Identity(2, 2));
    CHECK(vi[0] == 1.0);
    CHECK(vi[1] == 0.0);
    CHECK(vi[2] == 1.0);
}

TEST_CASE("vech round trip on random symmetric matrices") {
    std::mt19937_64 rng(7);
    DenseMatrix a = random_symmetric(4, rng);
    SymMatrix m = sym_from_dense(a);
    CHECK((m.dense() - a).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vech rejects bad input") {
    CHECK_THROWS_AS(vech(DenseMatrix::Zero(2, 3)), NonSquare);
    DenseMatrix a(2, 2);
    a << 1, 2, 2.1, 3;
    CHECK_THROWS_AS(vech(a), AsymmetryExceedsTolerance);
}

TEST_CASE("duplication projector for d = 1 is the identity scalar") {
    DenseMatrix p = duplication_projector(1);
    REQUIRE(p.rows() == 1);
    REQUIRE(p.cols() == 1);
    CHECK(p(0, 0) == 1.0);
}

TEST_CASE("duplication projector maps vec to vech (d = 2)") {
    DenseMatrix a(2, 2);
    a << 1, 2, 2, 3;
    Vector got = duplication_projector(2) * oracles::vec(a);
    Vector want = vech(a);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("duplication projector agrees with the enumeration oracle") {
    for (int d : {1, 2, 3, 4, 5, 6}) {
        DenseMatrix want = oracles::duplication_projector_oracle(d);
        DenseMatrix got = duplication_projector(d);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-14);
    }
    // the oracle's D has exactly one 1 per row; off-diagonal projector rows
    // average the two symmetric vec positions
    DenseMatrix dm = oracles::duplication_matrix(3);
    for (Eigen::Index r = 0; r < dm.rows(); ++r) CHECK(dm.row(r).sum() == 1.0);
    DenseMatrix p = duplication_projector(3);
    CHECK(p(vech_index(3, 2, 0), 0 * 3 + 2) == 0.5);
    CHECK(p(vech_index(3, 2, 0), 2 * 3 + 0) == 0.5);
}

TEST_CASE("duplication identity on random symmetric matrices, d = 1..6") {
    std::mt19937_64 rng(11);
    for (int d = 1; d <= 6; ++d) {
        DenseMatrix p = duplication_projector(d);
        for (int rep = 0; rep < 5; ++rep) {
            DenseMatrix a = random_symmetric(d, rng);
            Vector got = p * oracles::vec(a);
            CHECK((got - vech(a)).cwiseAbs().maxCoeff() < 1e-14);
        }
    }
}

TEST_CASE("kron basics") {
    DenseMatrix i2 = DenseMatrix::Identity(2, 2);
    CHECK((kron(i2, i2) - DenseMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);

    DenseMatrix two(1, 1);
    two << 2.0;
    std::mt19937_64 rng(3);
    DenseMatrix b = random_symmetric(3, rng);
    CHECK((kron(two, b) - 2.0 * b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kron mixed-product identity on random 2x2 inputs") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 10; ++rep) {
        DenseMatrix a(2, 2), b(2, 2), c(2, 2), d(2, 2);
        for (auto* m : {&a, &b, &c, &d})
            for (int i = 0; i < 4; ++i) (*m)(i / 2, i % 2) = g(rng);
        DenseMatrix lhs = kron(a, b) * kron(c, d);
        DenseMatrix rhs = kron(DenseMatrix(a * c), DenseMatrix(b * d));
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("chol recovers the factor") {
    CHECK((chol(SymMatrix::identity(3)) - DenseMatrix::Identity(3, 3)).cwiseAbs().maxCoeff() ==
          0.0);

    SymMatrix a(2);
    a(0, 0) = 4;
    a(1, 0) = 2;
    a(1, 1) = 5;
    DenseMatrix l = chol(a);
    CHECK(l(0, 0) == Catch::Approx(2.0));
    CHECK(l(1, 0) == Catch::Approx(1.0));
    CHECK(l(1, 1) == Catch::Approx(2.0));
    CHECK((l * l.transpose() - a.dense()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("chol rejects indefinite input") {
    SymMatrix a(2);
    a(0, 0) = 1;
    a(1, 0) = 2;
    a(1, 1) = 1;  // eigenvalues 3, -1
    CHECK_THROWS_AS(chol(a), NotPositiveDefinite);
}

TEST_CASE("chol succeeds exactly when the minimum eigenvalue is positive") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        SymMatrix a = sym_from_dense(random_symmetric(5, rng));
        const double min_ev = min_eigenvalue(a);
        bool ok = true;
        try {
            chol(a);
        } catch (const NotPositiveDefinite&) {
            ok = false;
        }
        if (min_ev > 1e-10)
            CHECK(ok);
        else if (min_ev < -1e-10)
            CHECK_FALSE(ok);
    }
}

TEST_CASE("psd_floor clamps eigenvalues") {
    SymMatrix eye = SymMatrix::identity(2);
    SymMatrix same = psd_floor(eye, 1e-8);
    CHECK((same.vech() - eye.vech()).cwiseAbs().maxCoeff() == 0.0);

    SymMatrix d(2);
    d(0, 0) = 1.0;
    d(1, 1) = -0.5;
    SymMatrix f = psd_floor(d, 1e-8);
    CHECK(f(0, 0) == Catch::Approx(1.0));
    CHECK(f(1, 1) == Catch::Approx(1e-8));
    CHECK(std::abs(f(1, 0)) < 1e-16);

    std::mt19937_64 rng(17);
    SymMatrix r = sym_from_dense(random_symmetric(5, rng));
    SymMatrix fr = psd_floor(r, 1e-8);
    CHECK(min_eigenvalue(fr) >= 1e-8 - 1e-15);
}
