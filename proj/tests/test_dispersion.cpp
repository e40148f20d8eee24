#include <doctest.h>

#include "difflens/dispersion.hpp"

#include <cmath>

using namespace difflens;

namespace {

// Fixture glasses (catalog Sellmeier/polynomial constants, lambda in um).
DispersionModel nbk7() {
    return DispersionModel::sellmeier(1.03961212, 0.00600069867, 0.231792344, 0.0200179144,
                                      1.01046945, 103.560653);
}
DispersionModel f2() {
    return DispersionModel::sellmeier(1.34533359, 0.00997743871, 0.209073176, 0.0470450767,
                                      0.937357162, 111.886764);
}
DispersionModel nsf11() {
    return DispersionModel::sellmeier(1.73759695, 0.013188707, 0.313747346, 0.0623068142,
                                      1.89878101, 155.23629);
}
DispersionModel schott_bk7() {
    return DispersionModel::schott(
        {2.2718929, -1.0108077e-2, 1.0592509e-2, 2.0816965e-4, -7.6472538e-6, 4.9240991e-7});
}

// Long-double evaluation of the Sellmeier formula, independent of the
// implementation path.
long double sellmeier_oracle(const DispersionModel& m, long double wl_nm) {
    long double l2 = (wl_nm * 1e-3L) * (wl_nm * 1e-3L);
    long double n2 = 1.0L;
    const auto& c = m.coefficients();
    for (int j = 0; j < 3; ++j)
        n2 += static_cast<long double>(c[static_cast<std::size_t>(2 * j)]) * l2 /
              (l2 - static_cast<long double>(c[static_cast<std::size_t>(2 * j + 1)]));
    return sqrtl(n2);
}

} // namespace

TEST_CASE("air is exactly constant 1") {
    CHECK(DispersionModel::air().index_at(587.6) == 1.0);
    CHECK(DispersionModel::air().index_at(486.1) == 1.0);
    CHECK(DispersionModel::air().is_air());
}

TEST_CASE("N-BK7 Sellmeier at the d line") {
    DispersionModel m = nbk7();
    double n = m.index_at(587.6);
    // frozen from the arbitrary-precision oracle
    CHECK(n == doctest::Approx(1.5167984379050087).epsilon(1e-12));
    CHECK(std::fabs(n - 1.5168) < 2e-4);
    CHECK(n == doctest::Approx(static_cast<double>(sellmeier_oracle(m, 587.6L))).epsilon(1e-14));
}

TEST_CASE("constant polynomial collapses to n0") {
    double n0 = 1.7;
    DispersionModel m = DispersionModel::schott({n0 * n0, 0, 0, 0, 0, 0});
    for (double wl : {400.0, 587.6, 900.0, 2000.0}) CHECK(m.index_at(wl) == doctest::Approx(n0).epsilon(1e-15));
}

TEST_CASE("normal dispersion is monotone over the design lines") {
    for (const DispersionModel& m : {nbk7(), f2(), nsf11(), schott_bk7()}) {
        double nf = m.index_at(486.1);
        double nd = m.index_at(587.6);
        double nc = m.index_at(656.3);
        CHECK(nf > nd);
        CHECK(nd > nc);
        CHECK(nc >= 1.0);
    }
}

TEST_CASE("wavelengths outside the valid range are rejected") {
    DispersionModel m = DispersionModel::sellmeier(1.0, 0.01, 0.2, 0.02, 1.0, 100.0, 400.0, 800.0);
    CHECK_THROWS_AS((void)m.index_at(399.9), std::out_of_range);
    CHECK_THROWS_AS((void)m.index_at(800.1), std::out_of_range);
    CHECK_NOTHROW((void)m.index_at(400.0));
    CHECK_NOTHROW((void)m.index_at(800.0));
}

TEST_CASE("evaluation is pure and deterministic") {
    DispersionModel m = nbk7();
    double a = m.index_at(512.3);
    for (int i = 0; i < 16; ++i) CHECK(m.index_at(512.3) == a);
}
