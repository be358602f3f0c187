#pragma once

// Full eigendecomposition with biorthonormal right/left eigenvector pairs.
//
// Two backends produce the right eigenvectors:
//  - dense:  zgeev on the L x L matrix.
//  - chiral: H = [[0, A], [A^T, 0]] in sublattice blocks, so H^2 restricted
//            to the A sublattice is the N x N tridiagonal M = A A^T. Each
//            eigenpair (lambda, u) of M gives the pair of H eigenstates
//            (u, +-v) with energies +-sqrt(lambda). Roughly 8x cheaper.
// `automatic` runs the chiral backend and falls back to dense whenever a
// residual check fails, so both paths meet the same accuracy contract.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpssh/lapack.hpp"
#include "qpssh/model.hpp"

namespace qpssh {

enum class Ordering { by_real_part, by_abs_energy };
enum class Backend { automatic, dense, chiral };

inline std::string to_string(Backend b)
{
    switch (b) {
    case Backend::automatic: return "automatic";
    case Backend::dense: return "dense";
    case Backend::chiral: return "chiral";
    }
    return "?";
}

struct SpectralOptions {
    double tol_eig = 1e-8;         // relative residual bound
    double degeneracy_tol = 1e-10;  // relative to ||H||
    double tol_biorth = 1e-6;
    Backend backend = Backend::automatic;
    bool compute_biorth = true;
};

struct SpectralWarning {
    enum class Kind { near_defective, chiral_fallback, left_cluster_solve, edge_tie };
    Kind kind;
    std::vector<int> indices;
    std::string message;
};

class SpectralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EigenSystem {
    int dim = 0;
    Eigen::VectorXcd eigenvalues;
    Eigen::MatrixXcd right;  // unit-norm columns
    Eigen::MatrixXcd left;   // scaled so that left^H right = I
    Eigen::VectorXd residual_norms;
    double left_residual_max = 0.0;
    double biorth_error = std::numeric_limits<double>::quiet_NaN();
    double h_norm = 0.0;
    Ordering ordering = Ordering::by_real_part;
    Backend backend_used = Backend::dense;
    std::vector<SpectralWarning> warnings;

    [[nodiscard]] bool has_warning(SpectralWarning::Kind k) const
    {
        return std::any_of(warnings.begin(), warnings.end(),
                           [k](const SpectralWarning& w) { return w.kind == k; });
    }
    [[nodiscard]] double max_residual() const
    {
        return residual_norms.size() ? residual_norms.maxCoeff() : 0.0;
    }
};

namespace detail {

/// Lexicographic (Re, Im, original index).
inline std::vector<int> real_part_order(const Eigen::VectorXcd& e)
{
    std::vector<int> idx(static_cast<std::size_t>(e.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (e(a).real() != e(b).real())
            return e(a).real() < e(b).real();
        if (e(a).imag() != e(b).imag())
            return e(a).imag() < e(b).imag();
        return a < b;
    });
    return idx;
}

inline double residual(const Hamiltonian& h, const Eigen::VectorXcd& v, cd e, double hnorm)
{
    return (h.apply(v) - e * v).norm() / (v.norm() * hnorm);
}

/// One step of shifted inverse iteration on the full tridiagonal H followed
/// by a bilinear Rayleigh quotient (exact for complex-symmetric H).
inline bool refine_pair(const Hamiltonian& h, Eigen::VectorXcd& v, cd& e)
{
    const auto& b = h.bonds();
    std::vector<cd> diag(static_cast<std::size_t>(h.dim()), -e);
    lapack::TridiagonalLU lu(b, diag, b);
    if (!lu.ok())
        return true;  // e is an exact eigenvalue to working precision
    Eigen::VectorXcd x = v;
    if (!lu.solve(x) || !x.allFinite() || x.norm() == 0.0)
        return false;
    x /= x.norm();
    const cd q = x.transpose() * x;
    if (std::abs(q) < 1e-12)
        return false;
    e = cd(x.transpose() * h.apply(x)) / q;
    v = x;
    return true;
}

struct RawSpectrum {
    Eigen::VectorXcd values;
    Eigen::MatrixXcd vectors;
};

inline RawSpectrum dense_solve(const Hamiltonian& h)
{
    auto r = lapack::geev(h.dense(), false, true);
    if (r.info > 0)
        throw SpectralError("dense eigensolver failed to converge: eigenvalues 1.." +
                            std::to_string(r.info) + " of " + std::to_string(h.dim()) +
                            " are unconverged");
    return {std::move(r.values), std::move(r.right)};
}

/// Eigenvalues of the complex-symmetric tridiagonal matrix with diagonal d
/// and off-diagonal e, by implicit QL with complex orthogonal rotations.
/// d is overwritten with the eigenvalues. Returns false on breakdown
/// (a quasi-null rotation) or when an eigenvalue fails to converge.
inline bool csym_tridiagonal_eigenvalues(std::vector<cd>& d, std::vector<cd> e)
{
    const int n = static_cast<int>(d.size());
    e.resize(static_cast<std::size_t>(n), cd{});
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (int l = 0; l < n; ++l) {
        for (int iter = 0;; ++iter) {
            int m = l;
            for (; m < n - 1; ++m)
                if (std::abs(e[m]) <= eps * (std::abs(d[m]) + std::abs(d[m + 1])))
                    break;
            if (m == l)
                break;
            if (iter == 60)
                return false;
            cd g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            cd r = std::sqrt(g * g + 1.0);
            if (std::abs(g - r) > std::abs(g + r))
                r = -r;
            g = d[m] - d[l] + e[l] / (g + r);
            cd s = 1.0, c = 1.0, p = 0.0;
            bool deflated = false;
            for (int i = m - 1; i >= l; --i) {
                const cd f = s * e[i], b = c * e[i];
                r = std::sqrt(f * f + g * g);
                e[i + 1] = r;
                const double scale = std::abs(f) + std::abs(g);
                if (scale == 0.0) {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                if (std::abs(r) <= 1e3 * eps * scale)
                    return false;
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if (deflated)
                continue;
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    for (const cd& x : d)
        if (!std::isfinite(x.real()) || !std::isfinite(x.imag()))
            return false;
    return true;
}

/// Eigenvectors of a complex-symmetric tridiagonal matrix by inverse
/// iteration at the given eigenvalues. Vectors of nearby eigenvalues are
/// kept bilinearly orthogonal. Columns are scaled so that u^T u = 1 and the
/// eigenvalues are replaced by their bilinear Rayleigh quotients.
inline bool csym_tridiagonal_eigenvectors(const std::vector<cd>& diag, const std::vector<cd>& off,
                                          std::vector<cd>& values, Eigen::MatrixXcd& vectors)
{
    const int n = static_cast<int>(diag.size());
    double mnorm = 0.0;
    for (int i = 0; i < n; ++i)
        mnorm = std::max(mnorm, std::abs(diag[i]) + (i > 0 ? std::abs(off[i - 1]) : 0.0) +
                                    (i + 1 < n ? std::abs(off[i]) : 0.0));
    if (mnorm == 0.0)
        mnorm = 1.0;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    const double cluster_tol = 1e-6 * mnorm;

    auto apply = [&](const Eigen::VectorXcd& x) {
        Eigen::VectorXcd y(n);
        for (int i = 0; i < n; ++i)
            y(i) = diag[i] * x(i) + (i > 0 ? off[i - 1] * x(i - 1) : cd{}) +
                   (i + 1 < n ? off[i] * x(i + 1) : cd{});
        return y;
    };

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return values[a].real() != values[b].real() ? values[a].real() < values[b].real() : a < b;
    });

    vectors.resize(n, n);
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int pos = 0; pos < n; ++pos) {
        const int k = order[pos];
        std::vector<int> neighbours;
        for (int q = pos - 1; q >= 0 && values[k].real() - values[order[q]].real() < cluster_tol; --q)
            if (std::abs(values[k] - values[order[q]]) < cluster_tol)
                neighbours.push_back(order[q]);

        const cd shift = values[k] + cd(4.0 * eps * mnorm, 4.0 * eps * mnorm);
        std::vector<cd> d(diag);
        for (auto& x : d)
            x -= shift;
        const lapack::TridiagonalLU lu(off, d, off);
        if (!lu.ok())
            return false;
        Eigen::VectorXcd x(n);
        for (int i = 0; i < n; ++i)
            x(i) = cd(uni(rng), uni(rng));
        x.normalize();
        bool converged = false;
        for (int it = 0; it < 8 && !converged; ++it) {
            for (int j : neighbours)
                x -= vectors.col(j) * cd(vectors.col(j).transpose() * x);
            if (!lu.solve(x) || !x.allFinite() || x.norm() == 0.0)
                return false;
            x.normalize();
            for (int j : neighbours)
                x -= vectors.col(j) * cd(vectors.col(j).transpose() * x);
            x.normalize();
            if (it >= 1) {
                const Eigen::VectorXcd mx = apply(x);
                const cd rho = cd(x.transpose() * mx) / cd(x.transpose() * x);
                converged = (mx - rho * x).norm() <= 1e-12 * mnorm;
            }
        }
        if (!converged)
            return false;
        const cd q = x.transpose() * x;
        if (std::abs(q) < 1e-6)
            return false;
        x /= std::sqrt(q);
        values[k] = cd(x.transpose() * apply(x));
        vectors.col(k) = x;
    }
    return true;
}

/// Chiral-block solve; returns nullopt when any check fails.
inline std::optional<RawSpectrum> chiral_solve(const Hamiltonian& h, const SpectralOptions& opts)
{
    const int L = h.dim();
    const int N = L / 2;
    const auto& bonds = h.bonds();
    const double hnorm = h.norm1();
    // a[n]: A_n-B_n, c[n]: B_n-A_{n+1}
    std::vector<cd> a(static_cast<std::size_t>(N)), c(static_cast<std::size_t>(N - 1));
    for (int n = 0; n < N; ++n)
        a[n] = bonds[static_cast<std::size_t>(2 * n)];
    for (int n = 0; n + 1 < N; ++n)
        c[n] = bonds[static_cast<std::size_t>(2 * n + 1)];

    std::vector<cd> md(static_cast<std::size_t>(N)), mo(static_cast<std::size_t>(N - 1));
    for (int n = 0; n < N; ++n)
        md[n] = a[n] * a[n] + (n > 0 ? c[n - 1] * c[n - 1] : cd{});
    for (int n = 0; n + 1 < N; ++n)
        mo[n] = a[n] * c[n];

    std::vector<cd> lambda(md);
    Eigen::MatrixXcd uvec;
    if (!csym_tridiagonal_eigenvalues(lambda, mo) ||
        !csym_tridiagonal_eigenvectors(md, mo, lambda, uvec)) {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(N, N);
        for (int n = 0; n < N; ++n) {
            m(n, n) = md[n];
            if (n + 1 < N)
                m(n, n + 1) = m(n + 1, n) = mo[n];
        }
        auto eig = lapack::geev(std::move(m), false, true);
        if (eig.info != 0)
            return std::nullopt;
        lambda.assign(eig.values.data(), eig.values.data() + N);
        uvec = std::move(eig.right);
        for (int k = 0; k < N; ++k) {
            const cd qu = uvec.col(k).transpose() * uvec.col(k);
            if (std::abs(qu) < 1e-6 * uvec.col(k).squaredNorm())
                return std::nullopt;  // quasi-null under the bilinear form
            uvec.col(k) /= std::sqrt(qu);
        }
    }

    auto apply_at = [&](const Eigen::VectorXcd& u) {  // A^T u
        Eigen::VectorXcd out(N);
        for (int j = 0; j < N; ++j)
            out(j) = a[j] * u(j) + (j + 1 < N ? c[j] * u(j + 1) : cd{});
        return out;
    };
    auto apply_a = [&](const Eigen::VectorXcd& v) {  // A v
        Eigen::VectorXcd out(N);
        for (int i = 0; i < N; ++i)
            out(i) = a[i] * v(i) + (i > 0 ? c[i - 1] * v(i - 1) : cd{});
        return out;
    };

    const double small_energy = 1e-6 * hnorm;
    int small_count = 0;
    RawSpectrum out{Eigen::VectorXcd(L), Eigen::MatrixXcd(L, L)};
    for (int k = 0; k < N; ++k) {
        const Eigen::VectorXcd u = uvec.col(k);
        cd e = std::sqrt(lambda[k]);
        Eigen::VectorXcd v;
        if (std::abs(e) > small_energy) {
            // normalise v itself: u^T M u / lambda loses digits when lambda is small
            v = apply_at(u);
            v /= std::sqrt(cd(v.transpose() * v));
            e = cd(u.transpose() * apply_a(v));
        } else {
            if (++small_count > 1)
                return std::nullopt;
            // B-sublattice partner from inverse iteration on A^T A - lambda.
            std::vector<cd> d(static_cast<std::size_t>(N)), off(static_cast<std::size_t>(N - 1));
            const cd shift = lambda[k] + 4.0 * std::numeric_limits<double>::epsilon() * hnorm * hnorm;
            for (int j = 0; j < N; ++j)
                d[j] = a[j] * a[j] + (j + 1 < N ? c[j] * c[j] : cd{}) - shift;
            for (int j = 0; j + 1 < N; ++j)
                off[j] = c[j] * a[j + 1];
            lapack::TridiagonalLU lu(off, d, off);
            v = Eigen::VectorXcd::Ones(N);
            for (int it = 0; it < 3; ++it) {
                if (!lu.solve(v) || !v.allFinite())
                    return std::nullopt;
                v /= v.norm();
            }
            const cd qv = v.transpose() * v;
            if (std::abs(qv) < 1e-6)
                return std::nullopt;
            v /= std::sqrt(qv);
            e = cd(u.transpose() * apply_a(v));
        }
        for (int s = 0; s < 2; ++s) {
            const double sign = s == 0 ? 1.0 : -1.0;
            Eigen::VectorXcd psi(L);
            for (int n = 0; n < N; ++n) {
                psi(2 * n) = u(n);
                psi(2 * n + 1) = sign * v(n);
            }
            psi /= psi.norm();
            out.values(2 * k + s) = sign * e;
            out.vectors.col(2 * k + s) = psi;
        }
    }

    for (int j = 0; j < L; ++j) {
        Eigen::VectorXcd psi = out.vectors.col(j);
        cd e = out.values(j);
        if (residual(h, psi, e, hnorm) <= 1e-2 * opts.tol_eig)
            continue;
        if (std::abs(e) <= small_energy)
            return std::nullopt;  // refining would mix the zero-mode pair
        if (!refine_pair(h, psi, e) || residual(h, psi, e, hnorm) > opts.tol_eig)
            return std::nullopt;
        out.values(j) = e;
        out.vectors.col(j) = psi;
    }
    return out;
}

struct Cluster {
    std::vector<int> members;
};

/// Groups eigenvalues closer than `tol` (eigenvalues sorted by real part).
inline std::vector<Cluster> degenerate_clusters(const Eigen::VectorXcd& e, double tol)
{
    const int n = static_cast<int>(e.size());
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n && e(j).real() - e(i).real() < tol; ++j)
            if (std::abs(e(j) - e(i)) < tol)
                parent[find(j)] = find(i);
    std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        groups[find(i)].push_back(i);
    std::vector<Cluster> out;
    for (auto& g : groups)
        if (g.size() > 1)
            out.push_back({std::move(g)});
    return out;
}

/// Orthonormal basis of the k-dimensional invariant subspace of H^dagger
/// near conj(centre), by block inverse iteration on the tridiagonal H^dagger.
/// Returns nullopt when the iteration does not settle.
inline std::optional<Eigen::MatrixXcd> adjoint_cluster_span(const Hamiltonian& h, cd centre, int k,
                                                            double hnorm)
{
    const int L = h.dim();
    std::vector<cd> b(h.bonds());
    for (auto& x : b)
        x = std::conj(x);
    // a few ulps off the cluster keeps the pivots of an exact zero mode finite
    const double offset = 4.0 * std::numeric_limits<double>::epsilon() * hnorm;
    const cd shift = std::conj(centre) + cd(offset, offset);
    std::vector<cd> d(static_cast<std::size_t>(L), -shift);
    lapack::TridiagonalLU lu(b, d, b);
    if (!lu.ok())
        return std::nullopt;
    std::mt19937_64 rng(0xc105);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Eigen::MatrixXcd y(L, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < L; ++i)
            y(i, j) = cd(uni(rng), uni(rng));
    for (int it = 0; it < 4; ++it) {
        for (int j = 0; j < k; ++j) {
            Eigen::VectorXcd col = y.col(j);
            if (!lu.solve(col) || !col.allFinite() || col.norm() == 0.0)
                return std::nullopt;
            y.col(j) = col / col.norm();
        }
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(y);
        y = qr.householderQ() * Eigen::MatrixXcd::Identity(L, k);
    }
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXcd hy = h.apply_adjoint(y.col(j));
        // residual of the subspace: project out its own span
        hy -= y * (y.adjoint() * hy);
        if (hy.norm() > 1e-10 * hnorm)
            return std::nullopt;
    }
    return y;
}

/// Scales v so that its largest-magnitude component is real and positive.
inline void fix_phase(Eigen::VectorXcd& v)
{
    Eigen::Index k = 0;
    v.cwiseAbs().maxCoeff(&k);
    if (std::abs(v(k)) > 0.0)
        v *= std::abs(v(k)) / v(k);
}

/// A pair of states at E ~ 0 that is degenerate to working precision has no
/// preferred basis. It is replaced by the bonding/antibonding combinations
/// (a +- b)/sqrt(2) of its A- and B-sublattice polarised parts, matching the
/// non-degenerate chiral partners (u, +-v). Returns false when the pair is
/// not sublattice polarised (nothing is changed then).
inline bool canonicalise_zero_pair(Eigen::MatrixXcd& right, int i, int j)
{
    const Eigen::Index L = right.rows();
    const Eigen::Index N = L / 2;
    Eigen::MatrixXcd x(L, 2);
    x.col(0) = right.col(i);
    x.col(1) = right.col(j);
    Eigen::MatrixXcd xa(N, 2), xb(N, 2);
    for (Eigen::Index n = 0; n < N; ++n) {
        xa.row(n) = x.row(2 * n);
        xb.row(n) = x.row(2 * n + 1);
    }
    // a minimises the B weight, b minimises the A weight
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> sb(xb.adjoint() * xb), sa(xa.adjoint() * xa);
    Eigen::VectorXcd a = x * sb.eigenvectors().col(0);
    Eigen::VectorXcd b = x * sa.eigenvectors().col(0);
    if (a.norm() == 0.0 || b.norm() == 0.0)
        return false;
    a.normalize();
    b.normalize();
    double leak_a = 0.0, leak_b = 0.0;
    for (Eigen::Index n = 0; n < N; ++n) {
        leak_a += std::norm(a(2 * n + 1));
        leak_b += std::norm(b(2 * n));
    }
    if (leak_a > 1e-6 || leak_b > 1e-6)
        return false;
    for (Eigen::Index n = 0; n < N; ++n) {
        a(2 * n + 1) = 0.0;
        b(2 * n) = 0.0;
    }
    a.normalize();
    b.normalize();
    fix_phase(a);
    fix_phase(b);
    right.col(i) = (a + b) / std::sqrt(2.0);
    right.col(j) = (a - b) / std::sqrt(2.0);
    return true;
}

}  // namespace detail

/// Sets left vectors to the componentwise conjugate of the right vectors and
/// rescales so that <L_m|R_n> = delta_mn. Valid for complex-symmetric H.
/// Degenerate clusters whose conjugate Gram block is not diagonal get an
/// independent H^dagger solve, biorthonormalised within the cluster.
inline EigenSystem left_vectors_from_right(EigenSystem eig, const Hamiltonian& h,
                                           const SpectralOptions& opts = {})
{
    const int L = eig.dim;
    eig.left = eig.right.conjugate();
    std::vector<int> isotropic;
    // bilinear norms of the columns whose left vector is the scaled conjugate
    std::vector<cd> shortcut(static_cast<std::size_t>(L), cd{});
    for (int n = 0; n < L; ++n) {
        const cd s = eig.right.col(n).transpose() * eig.right.col(n);
        if (std::abs(s) < 1e-14) {
            isotropic.push_back(n);
            continue;
        }
        shortcut[n] = s;
        eig.left.col(n) /= std::conj(s);
    }
    if (!isotropic.empty())
        eig.warnings.push_back({SpectralWarning::Kind::near_defective, isotropic,
                                "self-orthogonal right eigenvector (exceptional point)"});

    const auto clusters = detail::degenerate_clusters(eig.eigenvalues, opts.degeneracy_tol * eig.h_norm);
    std::optional<lapack::GeevResult> independent;
    for (const auto& cl : clusters) {
        const auto k = static_cast<int>(cl.members.size());
        Eigen::MatrixXcd rs(L, k);
        for (int i = 0; i < k; ++i)
            rs.col(i) = eig.right.col(cl.members[i]);
        const Eigen::MatrixXcd gram = rs.transpose() * rs;
        double off = 0.0;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                if (i != j)
                    off = std::max(off, std::abs(gram(i, j)) /
                                            std::sqrt(std::abs(gram(i, i)) * std::abs(gram(j, j))));
        if (off < 1e-8)
            continue;

        cd centre{};
        for (int m : cl.members)
            centre += eig.eigenvalues(m);
        centre /= static_cast<double>(k);
        Eigen::MatrixXcd ys;
        if (auto span = detail::adjoint_cluster_span(h, centre, k, eig.h_norm)) {
            ys = std::move(*span);
        } else {
            if (!independent) {
                independent = lapack::geev(h.dense(), true, false);
                if (independent->info != 0)
                    throw SpectralError("left eigenproblem failed to converge");
            }
            // pick the k left eigenvalues nearest to the cluster
            const Eigen::VectorXcd& ev = independent->values;
            std::vector<int> pool(static_cast<std::size_t>(ev.size()));
            std::iota(pool.begin(), pool.end(), 0);
            std::partial_sort(pool.begin(), pool.begin() + k, pool.end(), [&](int x, int y) {
                const double dx = std::abs(ev(x) - centre), dy = std::abs(ev(y) - centre);
                return dx != dy ? dx < dy : x < y;
            });
            ys.resize(L, k);
            for (int i = 0; i < k; ++i)
                ys.col(i) = independent->left.col(pool[i]);
        }
        const Eigen::MatrixXcd g = ys.adjoint() * rs;
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(g);
        if (!lu.isInvertible()) {
            eig.warnings.push_back({SpectralWarning::Kind::near_defective, cl.members,
                                    "degenerate cluster with singular left/right overlap"});
            continue;
        }
        const Eigen::MatrixXcd ls = ys * lu.inverse().adjoint();
        for (int i = 0; i < k; ++i) {
            eig.left.col(cl.members[i]) = ls.col(i);
            shortcut[cl.members[i]] = cd{};
        }
        eig.warnings.push_back({SpectralWarning::Kind::left_cluster_solve, cl.members,
                                "degenerate cluster: left vectors from independent H^dagger solve"});
    }

    double lres = 0.0;
    for (int n = 0; n < L; ++n) {
        const Eigen::VectorXcd l = eig.left.col(n);
        const double ln = l.norm();
        if (ln == 0.0 || !std::isfinite(ln))
            continue;
        lres = std::max(lres, (h.apply_adjoint(l) - std::conj(eig.eigenvalues(n)) * l).norm() /
                                  (ln * eig.h_norm));
    }
    eig.left_residual_max = lres;

    if (opts.compute_biorth) {
        // <L_m|R_n> = (R^T R)_mn / s_m for shortcut rows; the rest explicitly
        Eigen::MatrixXcd overlap = lapack::transpose_gram(eig.right);
        for (int m = 0; m < L; ++m) {
            if (shortcut[m] != cd{}) {
                const cd inv = 1.0 / shortcut[m];
                for (int n = 0; n < m; ++n)
                    overlap(m, n) = overlap(n, m);
                overlap.row(m) *= inv;
            } else {
                overlap.row(m) = eig.left.col(m).adjoint() * eig.right;
            }
        }
        overlap.diagonal().array() -= 1.0;
        const Eigen::MatrixXd mag = overlap.cwiseAbs();
        eig.biorth_error = mag.allFinite() ? mag.maxCoeff() : std::numeric_limits<double>::infinity();
        if (!(eig.biorth_error <= opts.tol_biorth)) {
            std::vector<int> pairs;
            for (int j = 0; j < L && pairs.size() < 16; ++j)
                for (int i = 0; i < L && pairs.size() < 16; ++i)
                    if (!(mag(i, j) <= opts.tol_biorth)) {
                        pairs.push_back(i);
                        pairs.push_back(j);
                    }
            eig.warnings.push_back({SpectralWarning::Kind::near_defective, pairs,
                                    "near-defective spectrum: biorthogonality error " +
                                        std::to_string(eig.biorth_error)});
        }
    }
    return eig;
}

/// Complete eigendecomposition in by_real_part order with residual and
/// biorthogonality diagnostics.
inline EigenSystem eigendecompose(const Hamiltonian& h, const SpectralOptions& opts = {})
{
    if (!(opts.tol_eig > 0.0))
        throw std::invalid_argument("tol_eig must be positive");
    const int L = h.dim();
    const double hnorm = h.norm1();
    for (const cd& b : h.bonds())
        if (!std::isfinite(b.real()) || !std::isfinite(b.imag()))
            throw std::invalid_argument("Hamiltonian has non-finite entries");

    EigenSystem eig;
    eig.dim = L;
    eig.h_norm = hnorm > 0.0 ? hnorm : 1.0;

    std::optional<detail::RawSpectrum> raw;
    if (opts.backend != Backend::dense) {
        raw = detail::chiral_solve(h, opts);
        if (raw) {
            eig.backend_used = Backend::chiral;
        } else if (opts.backend == Backend::chiral) {
            throw SpectralError("chiral backend failed its residual checks");
        } else {
            eig.warnings.push_back({SpectralWarning::Kind::chiral_fallback, {},
                                    "chiral backend rejected; fell back to dense solve"});
        }
    }
    if (!raw) {
        raw = detail::dense_solve(h);
        eig.backend_used = Backend::dense;
    }

    const auto order = detail::real_part_order(raw->values);
    eig.eigenvalues.resize(L);
    eig.right.resize(L, L);
    eig.residual_norms.resize(L);
    for (int k = 0; k < L; ++k) {
        eig.eigenvalues(k) = raw->values(order[k]);
        Eigen::VectorXcd v = raw->vectors.col(order[k]);
        v /= v.norm();
        eig.right.col(k) = v;
    }
    std::vector<int> zero;
    for (int k = 0; k < L; ++k)
        if (std::abs(eig.eigenvalues(k)) <= opts.degeneracy_tol * eig.h_norm)
            zero.push_back(k);
    if (zero.size() == 2)
        detail::canonicalise_zero_pair(eig.right, zero[0], zero[1]);
    for (int k = 0; k < L; ++k)
        eig.residual_norms(k) = detail::residual(h, eig.right.col(k), eig.eigenvalues(k), eig.h_norm);
    if (eig.max_residual() > opts.tol_eig) {
        std::vector<int> bad;
        for (int k = 0; k < L; ++k)
            if (eig.residual_norms(k) > opts.tol_eig)
                bad.push_back(k);
        throw SpectralError("eigenpair residuals exceed tolerance for " + std::to_string(bad.size()) +
                            " eigenvalues starting at index " + std::to_string(bad.front()) +
                            " (E = " + std::to_string(eig.eigenvalues(bad.front()).real()) + "+" +
                            std::to_string(eig.eigenvalues(bad.front()).imag()) + "i)");
    }
    return left_vectors_from_right(std::move(eig), h, opts);
}

struct EdgeBulkSplit {
    std::array<int, 2> edge{};
    std::vector<int> bulk;
    bool tie_at_cut = false;
};

/// Two states of smallest |E| are "edge", the remaining L-2 are "bulk".
/// Both sets are returned in by_real_part (storage) order.
inline EdgeBulkSplit split_edge_bulk(const EigenSystem& eig, double degeneracy_tol = 1e-10)
{
    const int L = eig.dim;
    if (L < 4)
        throw std::invalid_argument("edge/bulk split needs L >= 4");
    std::vector<int> idx(static_cast<std::size_t>(L));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::abs(eig.eigenvalues(a)) < std::abs(eig.eigenvalues(b));
    });
    EdgeBulkSplit s;
    s.edge = {std::min(idx[0], idx[1]), std::max(idx[0], idx[1])};
    s.bulk.assign(idx.begin() + 2, idx.end());
    std::sort(s.bulk.begin(), s.bulk.end());
    s.tie_at_cut = std::abs(std::abs(eig.eigenvalues(idx[1])) - std::abs(eig.eigenvalues(idx[2]))) <
                   degeneracy_tol * eig.h_norm;
    return s;
}

inline void write_spectrum_csv(std::ostream& os, const EigenSystem& eig)
{
    os << "index,re_E,im_E,abs_E,residual\n";
    os.precision(17);
    for (int k = 0; k < eig.dim; ++k) {
        const cd e = eig.eigenvalues(k);
        os << k << ',' << e.real() << ',' << e.imag() << ',' << std::abs(e) << ','
           << eig.residual_norms(k) << '\n';
    }
}

}  // namespace qpssh
