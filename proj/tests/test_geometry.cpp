#include <doctest.h>

#include "difflens/surface.hpp"

#include <cmath>
#include <random>

using namespace difflens;

namespace {

SurfaceShape<double> plane() { return {}; }

SurfaceShape<double> conic(double c, double k = 0.0, double semi_ap = 10.0) {
    SurfaceShape<double> s;
    s.curvature = c;
    s.conic = k;
    s.semi_aperture = semi_ap;
    return s;
}

} // namespace

TEST_CASE("sag basics") {
    CHECK(sag_at_r2(plane(), 4.0) == 0.0);

    // frozen from a 40-digit evaluation of 0.1/(1+sqrt(0.99))
    CHECK(sag_at_r2(conic(0.1), 1.0) == doctest::Approx(0.05012562893380045).epsilon(1e-14));

    SurfaceShape<double> quartic;
    quartic.aspheric[1] = 0.01; // a_2 r^4
    quartic.any_aspheric = true;
    CHECK(sag_at_r2(quartic, 2.0) == doctest::Approx(0.04).epsilon(1e-15));
}

TEST_CASE("sag domain error") {
    SurfaceShape<double> s = conic(0.5, 0.0);
    // (1+k) c^2 r^2 >= 1 at r^2 >= 4
    CHECK_THROWS_AS((void)sag_at_r2(s, 4.1), SagDomainError);
    CHECK_NOTHROW((void)sag_at_r2(s, 3.9));
}

TEST_CASE("sag depends only on r^2") {
    SurfaceShape<double> s = conic(0.08, -0.7);
    s.aspheric[0] = 1e-4;
    s.aspheric[2] = -2e-6;
    s.any_aspheric = true;
    auto at = [&](double x, double y) { return sag_at_r2(s, x * x + y * y); };
    CHECK(at(1.2, -0.7) == at(-1.2, 0.7));
    CHECK(at(0.3, 2.0) == at(-0.3, -2.0));
}

TEST_CASE("surface gradient basics") {
    Vec3d g = shape_gradient(plane(), Vec3d{1.0, -2.0, 0.0});
    CHECK(g.x == 0.0);
    CHECK(g.y == 0.0);
    CHECK(g.z == 1.0);

    SurfaceShape<double> sphere = conic(0.5);
    Vec3d apex = shape_gradient(sphere, Vec3d{0.0, 0.0, 0.0});
    CHECK(apex.x == 0.0);
    CHECK(apex.y == 0.0);
    CHECK(apex.z == 1.0);
}

namespace {

double implicit_value(const SurfaceShape<double>& s, const Vec3d& p) {
    return p.z - s.z_vertex - sag_at_r2(s, p.x * p.x + p.y * p.y);
}

} // namespace

TEST_CASE("sphere gradient matches finite differences at a point") {
    SurfaceShape<double> sphere = conic(0.1);
    Vec3d p{1.0, 0.0, sag_at_r2(sphere, 1.0)};
    Vec3d g = shape_gradient(sphere, p);
    const double h = 1e-6;
    for (int axis = 0; axis < 3; ++axis) {
        Vec3d lo = p, hi = p;
        (axis == 0 ? lo.x : axis == 1 ? lo.y : lo.z) -= h;
        (axis == 0 ? hi.x : axis == 1 ? hi.y : hi.z) += h;
        double fd = (implicit_value(sphere, hi) - implicit_value(sphere, lo)) / (2.0 * h);
        double an = axis == 0 ? g.x : axis == 1 ? g.y : g.z;
        CHECK(std::fabs(an - fd) < 1e-9);
    }
}

TEST_CASE("gradient consistency at 100 random aperture points") {
    SurfaceShape<double> s = conic(0.12, -2.5, 4.0);
    s.aspheric[1] = 3e-4;
    s.aspheric[2] = -1.5e-5;
    s.any_aspheric = true;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> rad(0.0, 4.0);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
    for (int i = 0; i < 100; ++i) {
        double r = rad(rng), th = ang(rng);
        Vec3d p{r * std::cos(th), r * std::sin(th), sag_at_r2(s, r * r) + 0.1};
        Vec3d g = shape_gradient(s, p);
        const double h = 1e-6;
        double scale = std::sqrt(g.x * g.x + g.y * g.y + g.z * g.z);
        for (int axis = 0; axis < 3; ++axis) {
            Vec3d lo = p, hi = p;
            (axis == 0 ? lo.x : axis == 1 ? lo.y : lo.z) -= h;
            (axis == 0 ? hi.x : axis == 1 ? hi.y : hi.z) += h;
            double fd = (implicit_value(s, hi) - implicit_value(s, lo)) / (2.0 * h);
            double an = axis == 0 ? g.x : axis == 1 ? g.y : g.z;
            CHECK(std::fabs(an - fd) / scale < 1e-6);
        }
    }
}

TEST_CASE("reference points: plane grid") {
    Surface s;
    s.semi_aperture = 3.0;
    ReferencePointSet set = build_reference_points(s, 0, 4, 4);
    CHECK(set.points.size() == 17);
    for (const Vec3d& p : set.points) CHECK(p.z == 0.0);
}

TEST_CASE("reference points lie on the surface and inside the aperture") {
    Surface s;
    s.kind = Surface::Kind::EvenAsphere;
    s.curvature = 0.3;
    s.conic = -1.2;
    s.aspheric = {0.0, -0.02, 0.004, 0.0, 0.0, 0.0, 0.0, 0.0};
    s.semi_aperture = 1.9;
    ReferencePointSet set = build_reference_points(s, 0);
    CHECK(set.points.size() == 16 * 16 + 1);
    SurfaceShape<double> sh = shape_of(s, 0.0);
    double max_r = 0.0;
    for (const Vec3d& p : set.points) {
        double r2 = p.x * p.x + p.y * p.y;
        CHECK(std::fabs(p.z - sag_at_r2(sh, r2)) < 1e-12);
        max_r = std::max(max_r, std::sqrt(r2));
    }
    CHECK(max_r <= s.semi_aperture + 1e-12);
}

TEST_CASE("taped sag gradient matches finite differences in c, k, a") {
    auto eval = [](double c, double k, double a2, double r2) {
        SurfaceShape<double> s;
        s.curvature = c;
        s.conic = k;
        s.aspheric[1] = a2;
        s.any_aspheric = true;
        return sag_at_r2(s, r2);
    };
    const double c = 0.21, k = -0.8, a2 = 5e-3, r2 = 2.7;

    Tape tape;
    SurfaceShape<Real> s;
    Real rc = tape.leaf(c), rk = tape.leaf(k), ra = tape.leaf(a2);
    s.curvature = rc;
    s.conic = rk;
    s.aspheric[1] = ra;
    s.any_aspheric = true;
    Real z = sag_at_r2(s, Real(r2));
    tape.backward(z);

    const double h = 1e-7;
    CHECK(tape.adjoint(rc) ==
          doctest::Approx((eval(c + h, k, a2, r2) - eval(c - h, k, a2, r2)) / (2 * h)).epsilon(1e-6));
    CHECK(tape.adjoint(rk) ==
          doctest::Approx((eval(c, k + h, a2, r2) - eval(c, k - h, a2, r2)) / (2 * h)).epsilon(1e-6));
    CHECK(tape.adjoint(ra) ==
          doctest::Approx((eval(c, k, a2 + h, r2) - eval(c, k, a2 - h, r2)) / (2 * h)).epsilon(1e-6));

    // the closed-form partials used by the implicit intersection node agree
    SurfaceShape<double> sv;
    sv.curvature = c;
    sv.conic = k;
    sv.aspheric[1] = a2;
    sv.any_aspheric = true;
    SagPartials sp = sag_partials(sv, r2);
    CHECK(sp.d_c == doctest::Approx(tape.adjoint(rc)).epsilon(1e-10));
    CHECK(sp.d_k == doctest::Approx(tape.adjoint(rk)).epsilon(1e-10));
    CHECK(sp.d_a[1] == doctest::Approx(tape.adjoint(ra)).epsilon(1e-10));
}
