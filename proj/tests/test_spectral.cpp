#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qpssh/spectral.hpp"

using namespace qpssh;
using namespace qpssh::oracle;

namespace {

ModelParams params(double t1, double t2, double w1, double w2, double gamma, int n)
{
    ModelParams p;
    p.t1 = t1;
    p.t2 = t2;
    p.w1 = w1;
    p.w2 = w2;
    p.gamma = gamma;
    p.n_cells = n;
    return p;
}

}  // namespace

TEST(Spectral, CharacteristicPolynomialOracleCleanChain)
{
    const Hamiltonian h(params(1.0, 1.3, 0.0, 0.0, 0.0, 4));
    const auto roots = polynomial_roots(characteristic_polynomial(h.bonds()));
    for (Backend b : {Backend::dense, Backend::chiral}) {
        SpectralOptions o;
        o.backend = b;
        const auto eig = eigendecompose(h, o);
        ASSERT_EQ(eig.dim, 8);
        EXPECT_LT(multiset_distance(values(eig), roots), 1e-10) << to_string(b);
        for (int k = 0; k < 8; ++k) {
            EXPECT_LT(std::abs(eig.eigenvalues(k).imag()), 1e-12);
            EXPECT_NEAR(eig.eigenvalues(k).real(), -eig.eigenvalues(7 - k).real(), 1e-12);
        }
    }
}

TEST(Spectral, CharacteristicPolynomialOracleComplexChain)
{
    const Hamiltonian h(params(1.0, 1.3, 1.0, 1.0, 0.5, 4));
    const auto roots = polynomial_roots(characteristic_polynomial(h.bonds()));
    const auto eig = eigendecompose(h);
    EXPECT_LT(multiset_distance(values(eig), roots), 1e-10);
}

TEST(Spectral, ResidualsBiorthogonalityAndCompleteness)
{
    const Hamiltonian h(params(1.0, 1.3, 0.8, 0.8, 0.2, 40));
    const auto eig = eigendecompose(h);
    EXPECT_LE(eig.max_residual(), 1e-8);
    EXPECT_LE(eig.left_residual_max, 1e-8);
    EXPECT_LE(eig.biorth_error, 1e-6);
    const Eigen::MatrixXcd completeness = eig.right * eig.left.adjoint();
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(80, 80);
    EXPECT_LT((completeness - id).cwiseAbs().maxCoeff(), 1e-6);
    for (int k = 0; k < eig.dim; ++k)
        EXPECT_NEAR(eig.right.col(k).norm(), 1.0, 1e-12);
}

TEST(Spectral, LeftVectorsAgainstIndependentAdjointSolve)
{
    const Hamiltonian h(params(1.0, 1.3, 1.0, 1.0, 0.5, 4));
    const auto eig = eigendecompose(h);
    const Eigen::MatrixXcd hd = h.dense().adjoint();
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> adj(hd);
    std::vector<cd> adj_values(adj.eigenvalues().data(), adj.eigenvalues().data() + 8);
    std::vector<cd> conj_values;
    for (int n = 0; n < 8; ++n) {
        conj_values.push_back(std::conj(eig.eigenvalues(n)));
        const Eigen::VectorXcd l = eig.right.col(n).conjugate();
        EXPECT_LT((hd * l - std::conj(eig.eigenvalues(n)) * l).norm(), 1e-12);
    }
    EXPECT_LT(multiset_distance(conj_values, adj_values), 1e-10);
}

TEST(Spectral, OrderingIsByRealPart)
{
    const auto eig = eigendecompose(Hamiltonian(params(1.0, 1.3, 2.0, 2.0, 0.4, 30)));
    EXPECT_EQ(eig.ordering, Ordering::by_real_part);
    for (int k = 1; k < eig.dim; ++k)
        EXPECT_LE(eig.eigenvalues(k - 1).real(), eig.eigenvalues(k).real());
}

TEST(Spectral, BackendsAgree)
{
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 6; ++trial) {
        const auto p = params(1.0, 0.5 + u(rng) / 2, u(rng), u(rng), u(rng) / 3, 30 + 7 * trial);
        const Hamiltonian h(p);
        SpectralOptions d, c;
        d.backend = Backend::dense;
        c.backend = Backend::chiral;
        const auto ed = eigendecompose(h, d), ec = eigendecompose(h, c);
        EXPECT_EQ(ec.backend_used, Backend::chiral);
        EXPECT_LT(multiset_distance(values(ed), values(ec)), 1e-9 * ed.h_norm);
        for (int k = 0; k < ed.dim; ++k) {
            // same state up to phase when the eigenvalue is isolated
            const double gap_lo = k > 0 ? std::abs(ed.eigenvalues(k) - ed.eigenvalues(k - 1)) : 1.0;
            const double gap_hi = k + 1 < ed.dim ? std::abs(ed.eigenvalues(k) - ed.eigenvalues(k + 1)) : 1.0;
            if (std::min(gap_lo, gap_hi) < 1e-6)
                continue;
            EXPECT_NEAR(std::abs(ed.right.col(k).dot(ec.right.col(k))), 1.0, 1e-8) << "trial " << trial;
        }
    }
}

TEST(Spectral, ComplexSymmetricTridiagonalEigenvalues)
{
    std::mt19937 rng(11);
    std::normal_distribution<double> g;
    for (int n : {1, 2, 5, 40, 150}) {
        std::vector<cd> d(n), e(n > 0 ? n - 1 : 0);
        for (auto& x : d)
            x = {g(rng), g(rng)};
        for (auto& x : e)
            x = {g(rng), g(rng)};
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            m(i, i) = d[i];
            if (i + 1 < n)
                m(i, i + 1) = m(i + 1, i) = e[i];
        }
        std::vector<cd> w = d;
        ASSERT_TRUE(detail::csym_tridiagonal_eigenvalues(w, e)) << n;
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ref(m, false);
        std::vector<cd> rv(ref.eigenvalues().data(), ref.eigenvalues().data() + n);
        EXPECT_LT(multiset_distance(w, rv), 1e-9 * m.cwiseAbs().colwise().sum().maxCoeff()) << n;

        Eigen::MatrixXcd vec;
        if (n > 1 && detail::csym_tridiagonal_eigenvectors(d, e, w, vec))
            for (int k = 0; k < n; ++k) {
                const Eigen::VectorXcd v = vec.col(k);
                EXPECT_LT((m * v - w[k] * v).norm() / v.norm(), 1e-9) << n;
                EXPECT_NEAR(std::abs(cd(v.transpose() * v) - 1.0), 0.0, 1e-10);
            }
    }
}

TEST(Spectral, CleanChainEdgeModes)
{
    const auto eig = eigendecompose(Hamiltonian(params(1.0, 1.3, 0.0, 0.0, 0.0, 200)));
    const auto split = split_edge_bulk(eig);
    for (int k : split.edge)
        EXPECT_LT(std::abs(eig.eigenvalues(k)), 1e-6);
    for (int k : split.bulk)
        EXPECT_GT(std::abs(eig.eigenvalues(k)), 0.25);
    EXPECT_EQ(split.bulk.size(), 398u);
    EXPECT_TRUE(std::is_sorted(split.bulk.begin(), split.bulk.end()));
    EXPECT_FALSE(split.tie_at_cut);
}

TEST(Spectral, SmallButNonzeroPairStaysBiorthogonal)
{
    const Hamiltonian h(params(1.0, 2.0, 0.3, 0.3, 0.5, 16));
    const auto ec = eigendecompose(h, with_backend(Backend::chiral));
    const auto ed = eigendecompose(h, with_backend(Backend::dense));
    ASSERT_EQ(ec.backend_used, Backend::chiral);
    int small = 0;
    for (int k = 0; k < ec.dim; ++k) {
        const double a = std::abs(ec.eigenvalues(k));
        small += a > 1e-6 * ec.h_norm && a < 1e-4 ? 1 : 0;
    }
    ASSERT_EQ(small, 2);
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(ec.dim, ec.dim);
    EXPECT_LT((ec.left.adjoint() * ec.right - id).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(ec.biorth_error, 1e-9);
    EXPECT_LT(multiset_distance(values(ec), values(ed)), 1e-12);
}

TEST(Spectral, DegenerateZeroPairIsCanonical)
{
    // edge modes split by far less than the degeneracy tolerance
    const Hamiltonian h(params(1.0, 1.3, 0.5, 0.5, 0.1, 150));
    SpectralOptions d, c;
    d.backend = Backend::dense;
    c.backend = Backend::chiral;
    const auto ed = eigendecompose(h, d), ec = eigendecompose(h, c);
    const auto sd = split_edge_bulk(ed), sc = split_edge_bulk(ec);
    ASSERT_LT(std::abs(ed.eigenvalues(sd.edge[0])), 1e-10);
    const ChiralOperator chi(h.dim());
    for (int i = 0; i < 2; ++i) {
        const Eigen::VectorXcd a = ed.right.col(sd.edge[i]), b = ec.right.col(sc.edge[i]);
        EXPECT_NEAR(std::abs(a.dot(b)), 1.0, 1e-8);
        // bonding pair: each state has equal weight on both sublattices
        double wa = 0.0;
        for (int s = 0; s < h.dim(); s += 2)
            wa += std::norm(a(s));
        EXPECT_NEAR(wa, 0.5, 1e-8);
    }
    // the two members are chiral partners of each other
    const Eigen::VectorXcd partner = chi.diagonal().cast<cd>().cwiseProduct(ed.right.col(sd.edge[0]));
    EXPECT_NEAR(std::abs(partner.dot(ed.right.col(sd.edge[1]))), 1.0, 1e-8);
    EXPECT_LE(ed.biorth_error, 1e-6);
    EXPECT_LE(ec.biorth_error, 1e-6);
}

TEST(Spectral, DegenerateClusterGetsIndependentLeftSolve)
{
    const Hamiltonian h(params(1.0, 1.3, 0.5, 0.5, 0.1, 150));
    const auto eig = eigendecompose(h);
    EXPECT_TRUE(eig.has_warning(SpectralWarning::Kind::left_cluster_solve));
    EXPECT_LE(eig.left_residual_max, 1e-8);
    const Eigen::MatrixXcd g = eig.left.adjoint() * eig.right - Eigen::MatrixXcd::Identity(300, 300);
    EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Spectral, BiorthogonalityCanBeSkipped)
{
    SpectralOptions o;
    o.compute_biorth = false;
    const auto eig = eigendecompose(Hamiltonian(params(1.0, 1.3, 0.2, 0.2, 0.1, 10)), o);
    EXPECT_TRUE(std::isnan(eig.biorth_error));
    EXPECT_EQ(eig.left.cols(), 20);
}

TEST(Spectral, InvalidToleranceRejected)
{
    SpectralOptions o;
    o.tol_eig = 0.0;
    EXPECT_THROW(eigendecompose(Hamiltonian(params(1.0, 1.3, 0.0, 0.0, 0.0, 4)), o), std::invalid_argument);
}

TEST(Spectral, DegenerateClusters)
{
    Eigen::VectorXcd e(5);
    e << cd(-1.0, 0.0), cd(0.0, 0.0), cd(1e-12, 0.0), cd(0.5, 0.0), cd(0.5, 1e-13);
    const auto cl = detail::degenerate_clusters(e, 1e-10);
    ASSERT_EQ(cl.size(), 2u);
    EXPECT_EQ(cl[0].members, (std::vector<int>{1, 2}));
    EXPECT_EQ(cl[1].members, (std::vector<int>{3, 4}));
}

TEST(Spectral, SpectrumCsv)
{
    const auto eig = eigendecompose(Hamiltonian(params(1.0, 1.3, 0.0, 0.0, 0.0, 2)));
    std::ostringstream os;
    write_spectrum_csv(os, eig);
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "index,re_E,im_E,abs_E,residual");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
}
