#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace qpssh::oracle;

namespace {

void check(const PropertyResult& r)
{
    EXPECT_GT(r.cases, 0);
    EXPECT_LT(r.worst, r.tol) << r.name << " over " << r.cases << " cases";
}

}  // namespace

TEST(Properties, ChiralPairing) { check(chiral_pairing()); }

TEST(Properties, NprIprProduct) { check(npr_ipr_product()); }

TEST(Properties, BiorthogonalCompleteness) { check(biorthogonal_completeness()); }

TEST(Properties, RealSpectrumWithoutGamma) { check(real_spectrum_without_gamma()); }

TEST(Properties, ConjugateUnderGammaFlip) { check(conjugate_under_gamma_flip()); }

TEST(Properties, CharacteristicPolynomialAtN4) { check(characteristic_polynomial_n4()); }

TEST(Properties, SuiteCoversEverySize)
{
    const auto r = chiral_pairing();
    EXPECT_EQ(r.cases, kDraws * 3);
}
