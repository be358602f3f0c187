#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpssh/spectral.hpp"

namespace qpssh {

enum class Regime { Extended, Coexisting, Localized, Indeterminate };

inline std::string to_string(Regime r)
{
    switch (r) {
    case Regime::Extended: return "Extended";
    case Regime::Coexisting: return "Coexisting";
    case Regime::Localized: return "Localized";
    case Regime::Indeterminate: return "Indeterminate";
    }
    return "?";
}

/// Finite-size cutoffs separating "zero" from "nonzero" IPR/NPR averages.
struct Thresholds {
    /// Default cutoff is max(kDefaultScale / L, 1e-3).
    static constexpr double kDefaultScale = 8.0;
    static constexpr double kFloor = 1e-3;

    double eta_ipr = 0.0;
    double eta_npr = 0.0;

    static Thresholds defaults(int L)
    {
        const double eta = std::max(kDefaultScale / static_cast<double>(L), kFloor);
        return {eta, eta};
    }
};

template <typename Vec>
double ipr_state(const Vec& v)
{
    double s2 = 0.0, s4 = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double p = std::norm(std::complex<double>(v(i)));
        s2 += p;
        s4 += p * p;
    }
    if (!(s2 > 0.0))
        throw std::invalid_argument("IPR of a zero vector is undefined");
    return s4 / (s2 * s2);
}

/// (L * sum |v_i|^4)^{-1} for the unit-normalised v.
template <typename Vec>
double npr_state(const Vec& v)
{
    return 1.0 / (static_cast<double>(v.size()) * ipr_state(v));
}

inline Regime classify_regime(double ipr_bulk, double npr_bulk, const Thresholds& t)
{
    const bool ipr_nonzero = ipr_bulk >= t.eta_ipr;
    const bool npr_nonzero = npr_bulk >= t.eta_npr;
    if (ipr_nonzero && npr_nonzero)
        return Regime::Coexisting;
    if (npr_nonzero)
        return Regime::Extended;
    if (ipr_nonzero)
        return Regime::Localized;
    return Regime::Indeterminate;
}

inline Regime classify_regime(double ipr_bulk, double npr_bulk, int L)
{
    return classify_regime(ipr_bulk, npr_bulk, Thresholds::defaults(L));
}

struct LocalizationReport {
    std::vector<double> per_state_ipr;
    std::vector<double> per_state_npr;
    double ipr_bulk = 0.0;
    double npr_bulk = 0.0;
    double ipr_edge = 0.0;
    double npr_edge = 0.0;
    double abs_E_edge = 0.0;
    Regime regime = Regime::Indeterminate;
    Thresholds thresholds_used;
};

/// Bulk and edge averages of the right-eigenvector IPR/NPR.
inline LocalizationReport aggregate(const EigenSystem& eig, const EdgeBulkSplit& split,
                                    const Thresholds& thresholds)
{
    const int L = eig.dim;
    LocalizationReport r;
    r.thresholds_used = thresholds;
    r.per_state_ipr.resize(static_cast<std::size_t>(L));
    r.per_state_npr.resize(static_cast<std::size_t>(L));
    for (int n = 0; n < L; ++n) {
        const double ipr = ipr_state(eig.right.col(n));
        r.per_state_ipr[n] = ipr;
        r.per_state_npr[n] = 1.0 / (static_cast<double>(L) * ipr);
    }
    for (int n : split.bulk) {
        r.ipr_bulk += r.per_state_ipr[n];
        r.npr_bulk += r.per_state_npr[n];
    }
    r.ipr_bulk /= static_cast<double>(split.bulk.size());
    r.npr_bulk /= static_cast<double>(split.bulk.size());
    for (int n : split.edge) {
        r.ipr_edge += 0.5 * r.per_state_ipr[n];
        r.npr_edge += 0.5 * r.per_state_npr[n];
        r.abs_E_edge += 0.5 * std::abs(eig.eigenvalues(n));
    }
    r.regime = classify_regime(r.ipr_bulk, r.npr_bulk, thresholds);
    return r;
}

inline LocalizationReport aggregate(const EigenSystem& eig, const EdgeBulkSplit& split)
{
    return aggregate(eig, split, Thresholds::defaults(eig.dim));
}

inline void write_states_csv(std::ostream& os, const EigenSystem& eig, const EdgeBulkSplit& split,
                             const LocalizationReport& rep)
{
    os << "index,re_E,im_E,abs_E,ipr,npr,is_edge\n";
    os.precision(17);
    for (int k = 0; k < eig.dim; ++k) {
        const cd e = eig.eigenvalues(k);
        const bool edge = k == split.edge[0] || k == split.edge[1];
        os << k << ',' << e.real() << ',' << e.imag() << ',' << std::abs(e) << ','
           << rep.per_state_ipr[k] << ',' << rep.per_state_npr[k] << ',' << (edge ? 1 : 0) << '\n';
    }
}

}  // namespace qpssh
