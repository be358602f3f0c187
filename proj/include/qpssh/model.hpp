#pragma once

// Quasiperiodic non-Hermitian SSH chain with off-diagonal modulation.
//
// Sites are ordered A1, B1, A2, B2, ... so that bond m (1-based) joins site
// m-1 and site m (0-based). Odd bonds are intracell (t1); even bonds are
// intercell (t2 plus an optional quasiperiodic term on the first cells).

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qpssh {

using cd = std::complex<double>;

/// (sqrt(5)-1)/2 to full double precision.
inline constexpr double kGoldenBeta = 0.61803398874989484820458683436563811772;

struct ModelParams {
    double t1 = 1.0;
    double t2 = 1.0;
    double w1 = 0.0;
    double w2 = 0.0;
    double gamma = 0.0;
    double beta = kGoldenBeta;
    int n_cells = 2;

    [[nodiscard]] int sites() const noexcept { return 2 * n_cells; }

    void validate() const
    {
        if (n_cells < 2)
            throw std::invalid_argument("n_cells must be >= 2 (got " + std::to_string(n_cells) + ")");
        if (!(beta > 0.0 && beta < 1.0))
            throw std::invalid_argument("beta must lie in (0, 1)");
        for (double v : {t1, t2, w1, w2, gamma, beta})
            if (!std::isfinite(v))
                throw std::invalid_argument("model parameters must be finite");
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

enum class Sublattice { A, B };

struct SiteLabel {
    int cell;  // 1-based
    Sublattice sublattice;
    friend bool operator==(const SiteLabel&, const SiteLabel&) = default;
};

inline SiteLabel site_label(int site)
{
    return {site / 2 + 1, site % 2 == 0 ? Sublattice::A : Sublattice::B};
}

/// cos(x + i y) = cos x cosh y - i sin x sinh y
inline cd complex_cosine(double x, double y)
{
    return {std::cos(x) * std::cosh(y), -std::sin(x) * std::sinh(y)};
}

/// Number of modulated odd-n intercell bonds, ceil(N/2).
inline int w1_bond_count(int n_cells) { return (n_cells + 1) / 2; }

/// Number of modulated even-n intercell bonds, ceil((N+1)/2) - 1.
inline int w2_bond_count(int n_cells) { return (n_cells + 2) / 2 - 1; }

/// Hopping amplitude on site-chain bond m, 1 <= m <= 2N-1.
inline cd bond_amplitude(const ModelParams& p, int m)
{
    const int last = 2 * p.n_cells - 1;
    if (m < 1 || m > last)
        throw std::out_of_range("bond index " + std::to_string(m) + " outside [1, " +
                                std::to_string(last) + "]");
    if (m % 2 == 1)
        return {p.t1, 0.0};

    const int n = m / 2;  // bond joins B_n and A_{n+1}
    const double two_pi_beta = 2.0 * std::numbers::pi * p.beta;
    if (n % 2 == 1) {
        const int k = (n + 1) / 2;
        if (k <= w1_bond_count(p.n_cells))
            return p.t2 + p.w1 * complex_cosine(two_pi_beta * k, p.gamma);
    } else {
        const int k = n / 2;
        if (k <= w2_bond_count(p.n_cells))
            return p.t2 + p.w2 * complex_cosine(two_pi_beta * k, p.gamma);
    }
    return {p.t2, 0.0};
}

/// Complex-symmetric tridiagonal Hamiltonian with zero diagonal.
///
/// Only the L-1 bond amplitudes are stored; dense() materialises the matrix
/// for the eigensolver.
class Hamiltonian {
public:
    explicit Hamiltonian(const ModelParams& params) : params_(params)
    {
        params_.validate();
        const int L = params_.sites();
        bonds_.reserve(static_cast<std::size_t>(L - 1));
        for (int m = 1; m < L; ++m)
            bonds_.push_back(bond_amplitude(params_, m));
    }

    [[nodiscard]] int dim() const noexcept { return params_.sites(); }
    [[nodiscard]] const ModelParams& params() const noexcept { return params_; }

    /// bonds()[i] couples sites i and i+1.
    [[nodiscard]] const std::vector<cd>& bonds() const noexcept { return bonds_; }

    [[nodiscard]] cd operator()(int i, int j) const
    {
        if (i < 0 || j < 0 || i >= dim() || j >= dim())
            throw std::out_of_range("Hamiltonian index out of range");
        if (j == i + 1)
            return bonds_[static_cast<std::size_t>(i)];
        if (i == j + 1)
            return bonds_[static_cast<std::size_t>(j)];
        return {0.0, 0.0};
    }

    [[nodiscard]] Eigen::MatrixXcd dense() const
    {
        const int L = dim();
        Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(L, L);
        for (int i = 0; i + 1 < L; ++i) {
            h(i, i + 1) = bonds_[static_cast<std::size_t>(i)];
            h(i + 1, i) = bonds_[static_cast<std::size_t>(i)];
        }
        return h;
    }

    /// y = H x
    template <typename Vec>
    [[nodiscard]] Eigen::VectorXcd apply(const Vec& x) const
    {
        const int L = dim();
        Eigen::VectorXcd y = Eigen::VectorXcd::Zero(L);
        for (int i = 0; i + 1 < L; ++i) {
            const cd b = bonds_[static_cast<std::size_t>(i)];
            y(i) += b * x(i + 1);
            y(i + 1) += b * x(i);
        }
        return y;
    }

    /// y = H^dagger x
    template <typename Vec>
    [[nodiscard]] Eigen::VectorXcd apply_adjoint(const Vec& x) const
    {
        const int L = dim();
        Eigen::VectorXcd y = Eigen::VectorXcd::Zero(L);
        for (int i = 0; i + 1 < L; ++i) {
            const cd b = std::conj(bonds_[static_cast<std::size_t>(i)]);
            y(i) += b * x(i + 1);
            y(i + 1) += b * x(i);
        }
        return y;
    }

    /// Induced 1-norm (max absolute column sum); equals the inf-norm here.
    [[nodiscard]] double norm1() const
    {
        const int L = dim();
        double best = 0.0;
        for (int j = 0; j < L; ++j) {
            double s = 0.0;
            if (j > 0)
                s += std::abs(bonds_[static_cast<std::size_t>(j - 1)]);
            if (j + 1 < L)
                s += std::abs(bonds_[static_cast<std::size_t>(j)]);
            best = std::max(best, s);
        }
        return best;
    }

    void write_triplets_csv(std::ostream& os) const
    {
        os << "row,col,re,im\n";
        os.precision(17);
        const int L = dim();
        for (int i = 0; i < L; ++i) {
            if (i > 0) {
                const cd b = bonds_[static_cast<std::size_t>(i - 1)];
                os << i << ',' << i - 1 << ',' << b.real() << ',' << b.imag() << '\n';
            }
            if (i + 1 < L) {
                const cd b = bonds_[static_cast<std::size_t>(i)];
                os << i << ',' << i + 1 << ',' << b.real() << ',' << b.imag() << '\n';
            }
        }
    }

private:
    ModelParams params_;
    std::vector<cd> bonds_;
};

inline Hamiltonian build_hamiltonian(const ModelParams& params) { return Hamiltonian(params); }

/// Sublattice operator C = diag(1, -1, 1, -1, ...); C H C^{-1} = -H.
class ChiralOperator {
public:
    explicit ChiralOperator(int L)
    {
        if (L <= 0 || L % 2 != 0)
            throw std::invalid_argument("chiral operator needs a positive even dimension (got " +
                                        std::to_string(L) + ")");
        signs_ = Eigen::VectorXd(L);
        for (int i = 0; i < L; ++i)
            signs_(i) = i % 2 == 0 ? 1.0 : -1.0;
    }

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(signs_.size()); }
    [[nodiscard]] double operator[](int i) const { return signs_(i); }
    [[nodiscard]] const Eigen::VectorXd& diagonal() const noexcept { return signs_; }
    [[nodiscard]] Eigen::MatrixXd dense() const { return signs_.asDiagonal(); }

    /// C M C^{-1} (C is its own inverse)
    [[nodiscard]] Eigen::MatrixXcd conjugate(const Eigen::MatrixXcd& m) const
    {
        return signs_.asDiagonal() * m * signs_.asDiagonal();
    }

private:
    Eigen::VectorXd signs_;
};

inline ChiralOperator chiral_operator(int L) { return ChiralOperator(L); }

}  // namespace qpssh
