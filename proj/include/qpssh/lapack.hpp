#pragma once

// Thin LAPACKE bindings for the few routines the eigensolver needs.

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#ifndef lapack_complex_float
#define lapack_complex_float std::complex<float>
#endif
#ifndef lapack_complex_double
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>
#include <cblas.h>

#include <Eigen/Dense>

namespace qpssh::lapack {

struct GeevResult {
    Eigen::VectorXcd values;
    Eigen::MatrixXcd left;   // empty unless requested
    Eigen::MatrixXcd right;  // empty unless requested
    int info = 0;
};

/// General complex eigenproblem (zgeev). `a` is overwritten.
inline GeevResult geev(Eigen::MatrixXcd a, bool want_left, bool want_right)
{
    const lapack_int n = static_cast<lapack_int>(a.rows());
    if (a.cols() != a.rows())
        throw std::invalid_argument("geev: matrix must be square");
    GeevResult r;
    r.values.resize(n);
    if (want_left)
        r.left.resize(n, n);
    if (want_right)
        r.right.resize(n, n);
    std::complex<double> dummy{};
    r.info = LAPACKE_zgeev(LAPACK_COL_MAJOR, want_left ? 'V' : 'N', want_right ? 'V' : 'N', n,
                           a.data(), n, r.values.data(), want_left ? r.left.data() : &dummy,
                           want_left ? n : 1, want_right ? r.right.data() : &dummy,
                           want_right ? n : 1);
    if (r.info < 0)
        throw std::invalid_argument("zgeev: illegal argument " + std::to_string(-r.info));
    return r;
}

/// A^T A (not conjugated) via zsyrk. Only the upper triangle is filled.
inline Eigen::MatrixXcd transpose_gram(const Eigen::MatrixXcd& a)
{
    const auto n = static_cast<blasint>(a.cols());
    const auto k = static_cast<blasint>(a.rows());
    Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(n, n);
    const std::complex<double> one{1.0, 0.0}, zero{};
    cblas_zsyrk(CblasColMajor, CblasUpper, CblasTrans, n, k, &one, a.data(), k, &zero, c.data(), n);
    return c;
}

/// LU factorisation of a complex tridiagonal matrix with partial pivoting
/// (zgttrf/zgttrs). Used for inverse iteration.
class TridiagonalLU {
public:
    TridiagonalLU(std::vector<std::complex<double>> sub, std::vector<std::complex<double>> diag,
                  std::vector<std::complex<double>> super)
        : dl_(std::move(sub)), d_(std::move(diag)), du_(std::move(super))
    {
        const auto n = static_cast<lapack_int>(d_.size());
        du2_.resize(d_.size() > 2 ? d_.size() - 2 : 1);
        ipiv_.resize(d_.size());
        if (dl_.empty())
            dl_.resize(1);
        if (du_.empty())
            du_.resize(1);
        info_ = LAPACKE_zgttrf(n, dl_.data(), d_.data(), du_.data(), du2_.data(), ipiv_.data());
    }

    [[nodiscard]] bool ok() const noexcept { return info_ == 0; }

    /// Solves in place; returns false when the factorisation was singular.
    bool solve(Eigen::VectorXcd& rhs) const
    {
        if (info_ != 0)
            return false;
        const auto n = static_cast<lapack_int>(d_.size());
        const lapack_int info = LAPACKE_zgttrs(LAPACK_COL_MAJOR, 'N', n, 1, dl_.data(), d_.data(),
                                               du_.data(), du2_.data(), ipiv_.data(), rhs.data(), n);
        return info == 0;
    }

private:
    std::vector<std::complex<double>> dl_, d_, du_, du2_;
    std::vector<lapack_int> ipiv_;
    lapack_int info_ = 0;
};

}  // namespace qpssh::lapack
