#pragma once

// Real-space winding number of the chiral chain,
//
//   mu = 1/(2 L') Tr'( C Q [Q, X] ),
//
// with Q = sum_occ ( |R><L| - C |R><L| C^{-1} ) the flattened biorthogonal
// projector, X the cell coordinate and Tr' the trace over the middle L'
// sites once l sites are dropped at each end.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpssh/model.hpp"
#include "qpssh/spectral.hpp"

namespace qpssh {

enum class OccupiedRule { lower_real_half };

inline std::string to_string(OccupiedRule) { return "lower_real_half"; }

/// The trace formula evaluates to exactly 1/2 per unit of winding on the
/// clean chain; mu_calibrated = kWindingCalibration * mu_raw.
inline constexpr double kWindingCalibration = 2.0;

struct WindingConfig {
    double trim_fraction = 0.2;
    OccupiedRule occupied_rule = OccupiedRule::lower_real_half;
    double im_tolerance = 1e-6;

    [[nodiscard]] int trim_sites(int L) const { return static_cast<int>(std::lround(trim_fraction * L)); }

    void validate(int L) const
    {
        if (!(trim_fraction > 0.0 && trim_fraction < 0.5))
            throw std::invalid_argument("trim_fraction must lie in (0, 0.5)");
        if (L - 2 * trim_sites(L) < 2)
            throw std::invalid_argument("trimmed interval L' = L - 2l must be >= 2");
    }
};

/// Diagonal coordinate operator: both sites of cell n carry the value n.
inline Eigen::VectorXd cell_coordinates(int L)
{
    Eigen::VectorXd x(L);
    for (int i = 0; i < L; ++i)
        x(i) = static_cast<double>(i / 2 + 1);
    return x;
}

struct FlattenedProjector {
    Eigen::MatrixXcd q;
    bool cut_well_defined = true;
    std::string warning;
};

/// Q over the L/2 states of smallest Re(E) (the storage order of EigenSystem).
inline FlattenedProjector build_q(const EigenSystem& eig, const ChiralOperator& c,
                                  OccupiedRule = OccupiedRule::lower_real_half)
{
    const int L = eig.dim;
    if (L % 2 != 0 || c.dim() != L)
        throw std::invalid_argument("build_q needs an even dimension matching the chiral operator");
    const int half = L / 2;

    FlattenedProjector out;
    // (P - C P C)_ij = (1 - C_i C_j) P_ij: only the A-B blocks survive
    using Eigen::seq;
    const auto a_rows = seq(0, L - 2, 2), b_rows = seq(1, L - 1, 2);
    const auto occ = seq(0, half - 1);
    const Eigen::MatrixXcd ra = eig.right(a_rows, occ), rb = eig.right(b_rows, occ);
    const Eigen::MatrixXcd la = eig.left(a_rows, occ), lb = eig.left(b_rows, occ);
    const Eigen::MatrixXcd p_ab = ra * lb.adjoint(), p_ba = rb * la.adjoint();
    out.q = Eigen::MatrixXcd::Zero(L, L);
    out.q(a_rows, b_rows) = 2.0 * p_ab;
    out.q(b_rows, a_rows) = 2.0 * p_ba;

    // The cut must separate chiral partners: if both states next to it sit at
    // Re(E) = 0, the occupied one has to map onto the unoccupied one under C.
    const cd below = eig.eigenvalues(half - 1), above = eig.eigenvalues(half);
    const double tol = 1e-8 * eig.h_norm;
    if (std::abs(below.real()) < tol && std::abs(above.real()) < tol) {
        const Eigen::VectorXcd partner = c.diagonal().cast<cd>().cwiseProduct(eig.right.col(half - 1));
        const double overlap = std::abs(eig.right.col(half).dot(partner));
        if (std::abs(below + above) > tol || overlap < 1.0 - 1e-6) {
            out.cut_well_defined = false;
            out.warning = "ill-defined occupied cut: states at Re(E)=0 are not chiral partners";
        }
    }
    return out;
}

struct WindingResult {
    double mu_raw = 0.0;
    double mu_calibrated = 0.0;
    double im_residual = 0.0;
    double trim_fraction = 0.2;
    OccupiedRule occupied_rule = OccupiedRule::lower_real_half;
    bool cut_well_defined = true;
    bool quantized = true;  // |Im| below tolerance
    std::string warning;

    [[nodiscard]] bool valid() const { return cut_well_defined && quantized; }
};

/// Middle-interval trace of C Q [Q, X] for a diagonal X:
/// sum_i C_i sum_j Q_ij Q_ji (X_i - X_j).
inline cd winding_trace(const Eigen::MatrixXcd& q, const ChiralOperator& c, const Eigen::VectorXd& x,
                        int first, int last)
{
    const int L = static_cast<int>(q.rows());
    cd total{};
    for (int i = first; i < last; ++i) {
        cd row{};
        for (int j = 0; j < L; ++j)
            row += q(i, j) * q(j, i) * (x(i) - x(j));
        total += c[i] * row;
    }
    return total;
}

inline WindingResult winding_number(const EigenSystem& eig, const WindingConfig& cfg = {})
{
    const int L = eig.dim;
    cfg.validate(L);
    const ChiralOperator c(L);
    const auto proj = build_q(eig, c, cfg.occupied_rule);

    const int l = cfg.trim_sites(L);
    const int inner = L - 2 * l;
    const cd mu = winding_trace(proj.q, c, cell_coordinates(L), l, L - l) / (2.0 * inner);

    WindingResult r;
    r.mu_raw = mu.real();
    r.mu_calibrated = kWindingCalibration * mu.real();
    r.im_residual = std::abs(mu.imag());
    r.trim_fraction = cfg.trim_fraction;
    r.occupied_rule = cfg.occupied_rule;
    r.cut_well_defined = proj.cut_well_defined;
    r.quantized = r.im_residual < cfg.im_tolerance;
    r.warning = proj.warning;
    if (!r.quantized) {
        if (!r.warning.empty())
            r.warning += "; ";
        r.warning += "non-quantized winding (|Im mu| = " + std::to_string(r.im_residual) + ")";
    }
    return r;
}

}  // namespace qpssh
