#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "aggvol/errors.hpp"

namespace aggvol {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int vech_size(int dim) { return dim * (dim + 1) / 2; }

/// Index of entry (i,j), i >= j, in the column-stacked lower triangle
/// (c_11, c_21, ..., c_d1, c_22, c_32, ...).
inline int vech_index(int dim, int i, int j) {
    if (i < j) std::swap(i, j);
    return j * dim - j * (j - 1) / 2 + (i - j);
}

/// Symmetric d x d matrix stored as its vech vector.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(int dim) : dim_(dim), data_(Vector::Zero(vech_size(dim))) {}

    SymMatrix(int dim, Vector vech_data) : dim_(dim), data_(std::move(vech_data)) {
        if (data_.size() != vech_size(dim_))
            throw DimensionMismatch("vech data has length " + std::to_string(data_.size()) +
                                    ", expected " + std::to_string(vech_size(dim_)));
    }

    static SymMatrix identity(int dim) {
        SymMatrix m(dim);
        for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }

    int dim() const { return dim_; }

    const Vector& vech() const { return data_; }
    Vector& vech() { return data_; }

    double operator()(int i, int j) const { return data_[vech_index(dim_, i, j)]; }
    double& operator()(int i, int j) { return data_[vech_index(dim_, i, j)]; }

    DenseMatrix dense() const {
        DenseMatrix a(dim_, dim_);
        for (int j = 0; j < dim_; ++j)
            for (int i = j; i < dim_; ++i) a(i, j) = a(j, i) = (*this)(i, j);
        return a;
    }

    double trace() const {
        double t = 0.0;
        for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
        return t;
    }

    /// a' * this * a
    double quad_form(const Vector& a) const {
        if (a.size() != dim_) throw DimensionMismatch("portfolio vector length mismatch");
        double q = 0.0;
        for (int j = 0; j < dim_; ++j) {
            q += a[j] * a[j] * (*this)(j, j);
            for (int i = j + 1; i < dim_; ++i) q += 2.0 * a[i] * a[j] * (*this)(i, j);
        }
        return q;
    }

    /// this += w * y y'
    void add_outer(const Eigen::Ref<const Vector>& y, double w) {
        int idx = 0;
        for (int j = 0; j < dim_; ++j)
            for (int i = j; i < dim_; ++i) data_[idx++] += w * y[i] * y[j];
    }

    SymMatrix operator+(const SymMatrix& o) const {
        check_dim(o);
        return SymMatrix(dim_, data_ + o.data_);
    }
    SymMatrix operator-(const SymMatrix& o) const {
        check_dim(o);
        return SymMatrix(dim_, data_ - o.data_);
    }
    SymMatrix operator*(double c) const { return SymMatrix(dim_, data_ * c); }
    friend SymMatrix operator*(double c, const SymMatrix& m) { return m * c; }

private:
    void check_dim(const SymMatrix& o) const {
        if (o.dim_ != dim_) throw DimensionMismatch("SymMatrix dimensions differ");
    }

    int dim_ = 0;
    Vector data_;
};

/// Column-stacked lower triangle of a symmetric dense matrix.
/// Rejects non-square or asymmetric input rather than symmetrizing.
inline Vector vech(const DenseMatrix& a, double tol = 1e-12) {
    if (a.rows() != a.cols())
        throw NonSquare("matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    const int d = static_cast<int>(a.rows());
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (int j = 0; j < d; ++j)
        for (int i = j + 1; i < d; ++i)
            if (std::abs(a(i, j) - a(j, i)) > tol * scale)
                throw AsymmetryExceedsTolerance("entry (" + std::to_string(i) + "," +
                                                std::to_string(j) + ") differs from its mirror");
    Vector v(vech_size(d));
    int idx = 0;
    for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) v[idx++] = a(i, j);
    return v;
}

inline SymMatrix unvech(int dim, const Vector& v) { return SymMatrix(dim, v); }

inline SymMatrix sym_from_dense(const DenseMatrix& a, double tol = 1e-12) {
    return SymMatrix(static_cast<int>(a.rows()), vech(a, tol));
}

/// P_D = (D'D)^{-1} D' for the duplication matrix D with vec(A) = D vech(A).
/// Rows for diagonal vech entries pick the single vec position; rows for
/// off-diagonal entries average the two symmetric vec positions.
inline DenseMatrix duplication_projector(int d) {
    DenseMatrix p = DenseMatrix::Zero(vech_size(d), d * d);
    for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i) {
            const int row = vech_index(d, i, j);
            if (i == j) {
                p(row, j * d + i) = 1.0;
            } else {
                p(row, j * d + i) = 0.5;
                p(row, i * d + j) = 0.5;
            }
        }
    }
    return p;
}

inline DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix k(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return k;
}

/// Lower Cholesky factor L with L L' = A. The pivot test is relative to the
/// largest diagonal entry of A so the caller can decide how to regularize.
inline DenseMatrix chol(const SymMatrix& a) {
    const int d = a.dim();
    double max_diag = 0.0;
    for (int i = 0; i < d; ++i) max_diag = std::max(max_diag, a(i, i));
    DenseMatrix l = DenseMatrix::Zero(d, d);
    for (int j = 0; j < d; ++j) {
        double pivot = a(j, j);
        for (int k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
        if (pivot <= 1e-12 * max_diag)
            throw NotPositiveDefinite("pivot " + std::to_string(pivot) + " at column " +
                                      std::to_string(j));
        l(j, j) = std::sqrt(pivot);
        for (int i = j + 1; i < d; ++i) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

inline double min_eigenvalue(const SymMatrix& a) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a.dense(), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Clamp eigenvalues to >= eps. Returns the input unchanged when it already
/// satisfies the floor.
inline SymMatrix psd_floor(const SymMatrix& a, double eps) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a.dense());
    if (es.eigenvalues().minCoeff() >= eps) return a;
    Vector ev = es.eigenvalues().cwiseMax(eps);
    DenseMatrix rebuilt = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    SymMatrix out(a.dim());
    for (int j = 0; j < a.dim(); ++j)
        for (int i = j; i < a.dim(); ++i) out(i, j) = 0.5 * (rebuilt(i, j) + rebuilt(j, i));
    return out;
}

}  // namespace aggvol
