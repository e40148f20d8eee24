#include <doctest.h>

#include "difflens/trace.hpp"
#include "fixtures.hpp"

#include <cmath>
#include <random>

using namespace difflens;

TEST_CASE("refraction: normal incidence leaves the direction unchanged") {
    Vec3d d{0.0, 0.0, 1.0};
    Vec3d n{0.0, 0.0, -1.0};
    auto out = refract_dir(d, n, 1.0, 1.62);
    CHECK(!out.tir);
    CHECK(out.dir.x == doctest::Approx(0.0));
    CHECK(out.dir.y == doctest::Approx(0.0));
    CHECK(out.dir.z == doctest::Approx(1.0));
}

TEST_CASE("refraction: 45 degrees into n=1.5") {
    double s = std::sin(M_PI / 4), c = std::cos(M_PI / 4);
    Vec3d d{0.0, s, c};
    Vec3d n{0.0, 0.0, -1.0};
    auto out = refract_dir(d, n, 1.0, 1.5);
    CHECK(!out.tir);
    double angle = std::atan2(out.dir.y, out.dir.z) * 180.0 / M_PI;
    // scalar Snell oracle: asin(sin 45 / 1.5)
    CHECK(angle == doctest::Approx(28.125505702055706).epsilon(1e-12));
    CHECK(std::fabs(norm(out.dir) - 1.0) < 1e-12);
}

TEST_CASE("refraction: total internal reflection past the critical angle") {
    double a = 45.0 * M_PI / 180.0; // critical is asin(1/1.5) = 41.81 deg
    Vec3d d{0.0, std::sin(a), std::cos(a)};
    Vec3d n{0.0, 0.0, -1.0};
    auto out = refract_dir(d, n, 1.5, 1.0);
    CHECK(out.tir);
    double b = 41.0 * M_PI / 180.0;
    auto ok = refract_dir(Vec3d{0.0, std::sin(b), std::cos(b)}, n, 1.5, 1.0);
    CHECK(!ok.tir);
}

TEST_CASE("newton: plane intersected in one evaluation") {
    SurfaceShape<double> plane;
    plane.z_vertex = 7.5;
    plane.semi_aperture = 10.0;
    NewtonResult r = newton_intersect(plane, {0, 0, 0}, {0, 0, 1}, 7.5);
    CHECK(r.ok);
    CHECK(r.t == doctest::Approx(7.5));
    CHECK(r.evals == 1);
}

TEST_CASE("newton: sphere root matches the quadratic closed form") {
    SurfaceShape<double> sphere;
    sphere.curvature = 0.05;
    sphere.z_vertex = 4.0;
    sphere.semi_aperture = 12.0;
    Vec3d o{1.0, -2.0, 0.0};
    Vec3d d = normalized(Vec3d{0.05, 0.08, 1.0});

    // ray-sphere quadratic: center (0,0,z_v + R), radius R = 1/c
    double R = 1.0 / sphere.curvature;
    Vec3d ctr{0.0, 0.0, sphere.z_vertex + R};
    Vec3d oc = o - ctr;
    double b = dot(oc, d);
    double cq = norm2(oc) - R * R;
    double disc = b * b - cq;
    REQUIRE(disc > 0.0);
    double t_near = -b - std::sqrt(disc); // front cap

    NewtonResult r = newton_intersect(sphere, o, d, (sphere.z_vertex - o.z) / d.z);
    CHECK(r.ok);
    CHECK(std::fabs(r.t - t_near) < 1e-9);
}

TEST_CASE("initial guess: axial ray picks the apex") {
    Surface s;
    s.curvature = 0.1;
    s.semi_aperture = 4.0;
    ReferencePointSet refs = build_reference_points(s, 0);
    double t0 = 0.0;
    REQUIRE(initial_guess_t(refs, 10.0, {0, 0, 0}, {0, 0, 1}, &t0));
    CHECK(t0 == doctest::Approx(10.0));
}

TEST_CASE("initial guess: a ray through a reference point lands on it") {
    Surface s;
    s.curvature = 0.15;
    s.conic = -0.5;
    s.semi_aperture = 3.0;
    ReferencePointSet refs = build_reference_points(s, 0);
    const Vec3d target = refs.points[37];
    double z_v = 5.0;
    Vec3d tgt{target.x, target.y, target.z + z_v};
    Vec3d o{0.4, -0.2, -8.0};
    Vec3d d = normalized(tgt - o);
    double t0 = 0.0;
    REQUIRE(initial_guess_t(refs, z_v, o, d, &t0));
    Vec3d p = o + t0 * d;
    CHECK(std::fabs(p.x - tgt.x) < 1e-12);
    CHECK(std::fabs(p.y - tgt.y) < 1e-12);
    CHECK(std::fabs(p.z - tgt.z) < 1e-12);
}

TEST_CASE("initial guess: reduction equals the exhaustive argmin") {
    Surface s;
    s.kind = Surface::Kind::EvenAsphere;
    s.curvature = 0.3;
    s.conic = -1.2;
    s.aspheric[1] = -0.02;
    s.aspheric[2] = 0.004;
    s.semi_aperture = 1.9;
    ReferencePointSet refs = build_reference_points(s, 0);
    double z_v = 2.0;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int i = 0; i < 50; ++i) {
        Vec3d o{u(rng), u(rng), -6.0};
        Vec3d d = normalized(Vec3d{0.2 * u(rng), 0.2 * u(rng), 3.0});
        double t0 = 0.0;
        bool got = initial_guess_t(refs, z_v, o, d, &t0);

        // exhaustive scan, written independently
        double best = std::numeric_limits<double>::infinity();
        double bt = 0.0;
        bool found = false;
        for (const Vec3d& pl : refs.points) {
            Vec3d w{pl.x - o.x, pl.y - o.y, pl.z + z_v - o.z};
            double den = dot(w, d);
            if (den <= 0.0) continue;
            double ratio = norm(cross(w, d)) / den;
            if (ratio < best) {
                best = ratio;
                bt = den;
                found = true;
            }
        }
        REQUIRE(got == found);
        if (got) CHECK(t0 == bt);
    }
}

TEST_CASE("initial guess: nothing ahead of the ray") {
    Surface s;
    s.semi_aperture = 2.0;
    ReferencePointSet refs = build_reference_points(s, 0);
    double t0 = 0.0;
    CHECK(!initial_guess_t(refs, -5.0, {0, 0, 0}, {0, 0, 1}, &t0));
}

TEST_CASE("paraxial: single refracting surface") {
    LensSystem sys;
    Surface s1;
    s1.curvature = 0.02;
    s1.thickness = 10.0;
    s1.semi_aperture = 5.0;
    s1.material = DispersionModel::constant(1.5);
    s1.is_stop = true;
    sys.surfaces = {s1};
    // power = (1.5 - 1) * 0.02 = 0.01 -> EFFL 100
    CHECK(paraxial_effl(sys, 587.6) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("paraxial: all-plane system is afocal") {
    LensSystem sys;
    Surface s1;
    s1.thickness = 2.0;
    s1.semi_aperture = 5.0;
    s1.material = DispersionModel::constant(1.5);
    s1.is_stop = true;
    Surface s2;
    s2.thickness = 5.0;
    s2.semi_aperture = 5.0;
    sys.surfaces = {s1, s2};
    CHECK_THROWS_AS((void)paraxial_effl(sys, 587.6), AfocalError);
}

TEST_CASE("paraxial: thin biconvex lensmaker check") {
    LensSystem sys;
    Surface s1;
    s1.curvature = 0.01;
    s1.thickness = 1e-9;
    s1.semi_aperture = 5.0;
    s1.material = DispersionModel::constant(1.5);
    s1.is_stop = true;
    Surface s2;
    s2.curvature = -0.01;
    s2.thickness = 10.0;
    s2.semi_aperture = 5.0;
    sys.surfaces = {s1, s2};
    CHECK(paraxial_effl(sys, 587.6) == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("entrance pupil: stop on the front surface") {
    LensSystem sys = fixtures::singlet();
    EntrancePupil ep = entrance_pupil(sys, 587.6);
    CHECK(ep.z == 0.0);
    CHECK(ep.radius == doctest::Approx(5.0));
}

TEST_CASE("vignetting: on-axis unvignetted pupil") {
    LensSystem sys = fixtures::singlet();
    TracePlan plan = build_trace_plan(sys, {{0.0, 0.0}}, 9);
    const VignettingEllipse& e = plan.fields[0].ellipse;
    CHECK(std::fabs(e.vdx) < 1e-12);
    CHECK(std::fabs(e.vdy) < 1e-12);
    CHECK(std::fabs(e.vcx - 1.0) < 0.05);
    CHECK(std::fabs(e.vcy - 1.0) < 0.05);
}

TEST_CASE("vignetting: meridional field keeps x symmetry exactly") {
    LensSystem sys = fixtures::vignetted_doublet();
    TracePlan plan = build_trace_plan(sys, {{6.0, 0.0}}, 9);
    CHECK(plan.fields[0].ellipse.vdx == 0.0);
    CHECK(plan.fields[0].ellipse.vcy < 1.0);
}

TEST_CASE("vignetting: undersized element against a dense probe oracle") {
    LensSystem sys = fixtures::vignetted_doublet();
    TracePlan plan = build_trace_plan(sys, {{0.0, 0.0}}, 9);
    FieldSpec field{6.0, 0.0};
    PlanOptions opt;
    VignettingEllipse coarse = estimate_vignetting(sys, plan, field, opt);
    PlanOptions dense = opt;
    dense.probe_grid_n = 256;
    VignettingEllipse fine = estimate_vignetting(sys, plan, field, dense);
    CHECK(coarse.vcy < 1.0);
    CHECK(std::fabs(coarse.vcx - fine.vcx) < 0.05);
    CHECK(std::fabs(coarse.vcy - fine.vcy) < 0.05);
    CHECK(std::fabs(coarse.vdy - fine.vdy) < 0.05);
}

TEST_CASE("pupil sampling: lattice count and symmetry") {
    LensSystem sys = fixtures::singlet();
    TracePlan plan = build_trace_plan(sys, {{2.0, 0.0}}, 129);
    const FieldPlan& fp = plan.fields[0];

    // disk-lattice oracle
    int n = 129;
    std::size_t expect = 0;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            double gx = static_cast<double>(2 * ix + 1 - n) / n;
            double gy = static_cast<double>(2 * iy + 1 - n) / n;
            if (gx * gx + gy * gy <= 1.0) ++expect;
        }
    CHECK(fp.samples.size() == expect);
    CHECK(std::fabs(static_cast<double>(expect) - M_PI / 4.0 * n * n) <= n);

    // meridional mirror pairs exist
    for (std::size_t i = 0; i < fp.samples.size(); i += 97) {
        bool found = false;
        for (const PupilSample& s : fp.samples)
            if (s.gx == -fp.samples[i].gx && s.gy == fp.samples[i].gy) found = true;
        CHECK(found);
    }
}

TEST_CASE("pupil sampling: on-axis 3x3 center ray is axial") {
    LensSystem sys = fixtures::singlet();
    TracePlan plan = build_trace_plan(sys, {{0.0, 0.0}}, 3);
    SystemView<double> view = view_of(sys);
    TracedRay<double> center = trace_pupil_coord(view, plan, plan.fields[0].field, 0.0, 0.0, 587.6);
    CHECK(center.valid);
    CHECK(std::fabs(center.direction.x) < 1e-15);
    CHECK(std::fabs(center.direction.y) < 1e-15);
    CHECK(std::fabs(center.position.x) < 1e-12);
    CHECK(std::fabs(center.position.y) < 1e-12);
}

TEST_CASE("trace: doublet on-axis bundle focuses within 1 um") {
    LensSystem sys = fixtures::doublet();
    TracePlan plan = build_trace_plan(sys, {{0.0, 0.0}}, 17);
    SystemView<double> view = view_of(sys);
    TracedBundle<double> b = trace_bundle(view, plan, plan.fields[0], 587.6);
    CHECK(b.valid_count == static_cast<int>(b.rays.size()));
    for (const auto& r : b.rays) {
        CHECK(r.valid);
        CHECK(std::hypot(r.position.x, r.position.y) < 1e-3);
    }
}

TEST_CASE("trace: OPL of the axial ray matches a manual segment sum") {
    LensSystem sys = fixtures::singlet();
    TracePlan plan = build_trace_plan(sys, {{0.0, 0.0}}, 5);
    SystemView<double> view = view_of(sys);
    TracedRay<double> r = trace_pupil_coord(view, plan, {0.0, 0.0}, 0.0, 0.0, 587.6);
    REQUIRE(r.valid);

    double n_glass = sys.surfaces[0].material.index_at(587.6);
    double seg0 = 0.0 - plan.z_wavefront; // wavefront plane to front vertex
    double seg1 = sys.surfaces[0].thickness;
    double seg2 = sys.surfaces[1].thickness;
    double manual = seg0 + n_glass * seg1 + seg2;
    CHECK(std::fabs(r.opl - manual) < 1e-10);
}

TEST_CASE("trace: OPL is non-decreasing and directions stay unit") {
    LensSystem sys = fixtures::doublet();
    TracePlan plan = build_trace_plan(sys, {{3.0, 0.0}}, 9);
    SystemView<double> view = view_of(sys);
    for (double wl : sys.wavelengths_nm) {
        TracedBundle<double> b = trace_bundle(view, plan, plan.fields[0], wl);
        for (const auto& r : b.rays) {
            if (!r.valid) continue;
            CHECK(r.opl > 0.0);
            CHECK(std::fabs(norm(r.direction) - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("trace: meridional symmetry of image-plane x") {
    LensSystem sys = fixtures::doublet();
    TracePlan plan = build_trace_plan(sys, {{3.0, 0.0}}, 9);
    SystemView<double> view = view_of(sys);
    for (const PupilSample& s : plan.fields[0].samples) {
        TracedRay<double> a = trace_pupil_coord(view, plan, {3.0, 0.0}, s.gx, s.gy, 587.6);
        TracedRay<double> b = trace_pupil_coord(view, plan, {3.0, 0.0}, -s.gx, s.gy, 587.6);
        if (!a.valid || !b.valid) continue;
        CHECK(std::fabs(a.position.x + b.position.x) < 1e-10);
        CHECK(std::fabs(a.position.y - b.position.y) < 1e-10);
    }
}

TEST_CASE("chief ray: on-axis chief is the axial ray") {
    LensSystem sys = fixtures::doublet();
    TracePlan plan = build_trace_plan(sys, {{0.0, 0.0}}, 5);
    SystemView<double> view = view_of(sys);
    TracedRay<double> c = chief_ray(view, plan, plan.fields[0], 587.6);
    CHECK(std::fabs(plan.fields[0].chief_pupil.x) < 1e-12);
    CHECK(std::fabs(plan.fields[0].chief_pupil.y) < 1e-12);
    CHECK(std::fabs(c.position.x) < 1e-9);
    CHECK(std::fabs(c.position.y) < 1e-9);
}

TEST_CASE("chief ray: stop-plane intercept within 1e-8 mm") {
    LensSystem sys = fixtures::vignetted_doublet();
    sys.surfaces[0].is_stop = false;
    sys.surfaces[1].is_stop = true; // move the stop inside
    sys.validate();
    TracePlan plan = build_trace_plan(sys, {{5.0, 0.0}}, 5);
    SystemView<double> view = view_of(sys);

    // re-trace to the stop surface and check the intercept radius
    detail::RayStart rs =
        detail::start_ray(plan, {5.0, 0.0}, plan.fields[0].chief_pupil.x, plan.fields[0].chief_pupil.y);
    Vec3d p = rs.origin, d = rs.dir;
    for (int j = 0; j <= 1; ++j) {
        const SurfaceShape<double>& sh = view.shapes[static_cast<std::size_t>(j)];
        double t0 = 0.0;
        REQUIRE(initial_guess_t(plan.refs[static_cast<std::size_t>(j)], sh.z_vertex, p, d, &t0));
        NewtonResult nr = newton_intersect(sh, p, d, t0);
        REQUIRE(nr.ok);
        p = p + nr.t * d;
        if (j == 1) break;
        auto ro = refract_dir(d, -normalized(shape_gradient(sh, p)), sys.index_before(j, 587.6),
                              sys.index_after(j, 587.6));
        REQUIRE(!ro.tir);
        d = ro.dir;
    }
    CHECK(std::hypot(p.x, p.y) < 1e-8);
}

TEST_CASE("chief ray: image height grows monotonically with field") {
    LensSystem sys = fixtures::doublet();
    std::vector<FieldSpec> fields{{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}};
    TracePlan plan = build_trace_plan(sys, fields, 5);
    SystemView<double> view = view_of(sys);
    double prev = -1.0;
    for (const FieldPlan& fp : plan.fields) {
        TracedRay<double> c = chief_ray(view, plan, fp, 587.6);
        double r = std::hypot(c.position.x, c.position.y);
        CHECK(r > prev);
        prev = r;
    }
}

TEST_CASE("bundle extinct raises") {
    LensSystem sys = fixtures::singlet();
    TracePlan plan = build_trace_plan(sys, {{2.0, 0.0}}, 5);
    // collapse the rear aperture after planning: the oblique bundle loses
    // every ray there
    sys.surfaces[1].semi_aperture = 1e-6;
    SystemView<double> view = view_of(sys);
    CHECK_THROWS_AS((void)trace_bundle(view, plan, plan.fields[0], 587.6), TraceError);
}

TEST_CASE("taped trace equals the double trace and differentiates the root") {
    LensSystem sys = fixtures::singlet();
    TracePlan plan = build_trace_plan(sys, {{2.0, 0.0}}, 7);
    SystemView<double> view = view_of(sys);

    ParamVector params = ParamVector::from_system(sys);
    for (auto& e : params.entries)
        if (e.ref.kind == ParamKind::Curvature) e.trainable = true;

    Tape tape;
    TapedSystem ts = taped_view(sys, params, tape);
    const PupilSample s = plan.fields[0].samples[3];
    double px = plan.fields[0].ellipse.vdx + plan.fields[0].ellipse.vcx * s.gx;
    double py = plan.fields[0].ellipse.vdy + plan.fields[0].ellipse.vcy * s.gy;

    TracedRay<Real> rt = trace_pupil_coord(ts.view, plan, {2.0, 0.0}, px, py, 587.6);
    TracedRay<double> rd = trace_pupil_coord(view, plan, {2.0, 0.0}, px, py, 587.6);
    REQUIRE(rt.valid);
    REQUIRE(rd.valid);
    CHECK(value_of(rt.position.x) == rd.position.x);
    CHECK(value_of(rt.position.y) == rd.position.y);
    CHECK(value_of(rt.opl) == rd.opl);

    // d(image y)/d(curvature of surface 1) against central differences
    tape.backward(rt.position.y);
    double an = tape.adjoint(ts.leaves[0]);
    const double h = 1e-6;
    auto eval = [&](double dc) {
        LensSystem pert = sys;
        pert.surfaces[0].curvature += dc;
        SystemView<double> pv = view_of(pert);
        TracedRay<double> r = trace_pupil_coord(pv, plan, {2.0, 0.0}, px, py, 587.6);
        REQUIRE(r.valid);
        return r.position.y;
    };
    double fd = (eval(h) - eval(-h)) / (2.0 * h);
    CHECK(an == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("implicit intersection gradient vs finite differences on fixtures") {
    for (LensSystem sys : {fixtures::singlet(), fixtures::doublet()}) {
        TracePlan plan = build_trace_plan(sys, {{1.5, 0.0}}, 9);
        ParamVector params = ParamVector::from_system(sys);
        for (auto& e : params.entries)
            if (e.ref.kind == ParamKind::Curvature && e.ref.surface == 0) e.trainable = true;

        std::mt19937_64 rng(42);
        std::uniform_int_distribution<std::size_t> pick(0, plan.fields[0].samples.size() - 1);
        for (int trial = 0; trial < 20; ++trial) {
            const PupilSample s = plan.fields[0].samples[pick(rng)];
            Tape tape;
            TapedSystem ts = taped_view(sys, params, tape);
            TracedRay<Real> rt = trace_pupil_coord(ts.view, plan, {1.5, 0.0}, s.gx, s.gy, 587.6);
            if (!rt.valid) continue;
            tape.backward(rt.position.y);
            double an = tape.adjoint(ts.leaves[0]);

            const double h = 1e-6;
            auto eval = [&](double dc) {
                LensSystem pert = sys;
                pert.surfaces[0].curvature += dc;
                SystemView<double> pv = view_of(pert);
                TracedRay<double> r = trace_pupil_coord(pv, plan, {1.5, 0.0}, s.gx, s.gy, 587.6);
                return r.position.y;
            };
            double fd = (eval(h) - eval(-h)) / (2.0 * h);
            double denom = std::max(std::fabs(fd), 1e-10);
            CHECK(std::fabs(an - fd) / denom < 1e-5);
        }
    }
}
