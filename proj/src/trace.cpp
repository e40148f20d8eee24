#include "difflens/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace difflens {

std::string failure_reason_name(FailureReason r) {
    switch (r) {
    case FailureReason::None: return "none";
    case FailureReason::NoIntersection: return "no_intersection";
    case FailureReason::ApertureClip: return "aperture_clip";
    case FailureReason::TotalInternalReflection: return "tir";
    }
    return "?";
}

NewtonResult newton_intersect(const SurfaceShape<double>& shape, const Vec3d& origin,
                              const Vec3d& dir, double t0, const IntersectOptions& opt) {
    NewtonResult res;
    double t = t0;
    for (int e = 1; e <= opt.max_evals; ++e) {
        res.evals = e;
        Vec3d p{origin.x + t * dir.x, origin.y + t * dir.y, origin.z + t * dir.z};
        double r2 = p.x * p.x + p.y * p.y;
        if (!sag_is_real(shape, r2)) {
            res.reason = FailureReason::NoIntersection;
            return res;
        }
        double f = (p.z - shape.z_vertex) - sag_at_r2(shape, r2);
        if (std::fabs(f) < opt.tolerance_mm) {
            res.ok = true;
            res.t = t;
            return res;
        }
        SagPartials sp = sag_partials(shape, r2);
        double slope = -2.0 * p.x * sp.d_r2 * dir.x - 2.0 * p.y * sp.d_r2 * dir.y + dir.z;
        if (std::fabs(slope) < opt.min_slope) {
            res.reason = FailureReason::NoIntersection;
            return res;
        }
        t -= f / slope;
    }
    res.reason = FailureReason::NoIntersection;
    return res;
}

namespace {

// F along the ray; false when the sag is not real there.
inline bool implicit_f(const SurfaceShape<double>& shape, const Vec3d& origin, const Vec3d& dir,
                       double t, double* f) {
    Vec3d p{origin.x + t * dir.x, origin.y + t * dir.y, origin.z + t * dir.z};
    double r2 = p.x * p.x + p.y * p.y;
    if (!sag_is_real(shape, r2)) return false;
    *f = (p.z - shape.z_vertex) - sag_at_r2(shape, r2);
    return true;
}

} // namespace

MarchResult march_intersect(const SurfaceShape<double>& shape, const Vec3d& origin,
                            const Vec3d& dir, double t_lo, double t_hi, double step_mm) {
    MarchResult res;
    double t_prev = t_lo;
    double f_prev = 0.0;
    bool prev_ok = implicit_f(shape, origin, dir, t_prev, &f_prev);
    if (prev_ok && f_prev == 0.0) {
        res.found = true;
        res.t = t_prev;
        return res;
    }
    for (double t = t_lo + step_mm; t <= t_hi; t += step_mm) {
        double f = 0.0;
        bool ok = implicit_f(shape, origin, dir, t, &f);
        if (ok && prev_ok && ((f_prev < 0.0 && f >= 0.0) || (f_prev > 0.0 && f <= 0.0))) {
            double a = t_prev, b = t, fa = f_prev;
            for (int it = 0; it < 80; ++it) {
                double m = 0.5 * (a + b);
                double fm = 0.0;
                if (!implicit_f(shape, origin, dir, m, &fm)) break;
                if ((fa < 0.0) == (fm < 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            res.found = true;
            res.t = 0.5 * (a + b);
            return res;
        }
        t_prev = t;
        f_prev = f;
        prev_ok = ok;
    }
    return res;
}

bool initial_guess_t(const ReferencePointSet& refs, double z_vertex, const Vec3d& origin,
                     const Vec3d& dir, double* t0) {
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_t = 0.0;
    bool found = false;
    for (const Vec3d& p_local : refs.points) {
        Vec3d w{p_local.x - origin.x, p_local.y - origin.y, p_local.z + z_vertex - origin.z};
        double along = dot(w, dir);
        if (along <= 0.0) continue; // behind the ray
        Vec3d cr = cross(w, dir);
        double ratio = norm(cr) / along;
        if (ratio < best_ratio) {
            best_ratio = ratio;
            best_t = along;
            found = true;
        }
    }
    if (found) *t0 = best_t;
    return found;
}

namespace detail {

struct IntersectionOutcome {
    bool ok = false;
    FailureReason reason = FailureReason::None;
    int evals = 0;
};

// Newton runs on plain values; for the taped path the converged root becomes
// a single implicit-function node, so gradients never see the iterations.
inline IntersectionOutcome intersect_surface(const SurfaceShape<double>& shape,
                                             const Vec3<double>& origin, const Vec3<double>& dir,
                                             double t0, const IntersectOptions& opt, double* t_out) {
    IntersectionOutcome out;
    NewtonResult nr = newton_intersect(shape, {origin.x, origin.y, origin.z},
                                       {dir.x, dir.y, dir.z}, t0, opt);
    out.ok = nr.ok;
    out.reason = nr.reason;
    out.evals = nr.evals;
    if (nr.ok) *t_out = nr.t;
    return out;
}

inline IntersectionOutcome intersect_surface(const SurfaceShape<Real>& shape,
                                             const Vec3<Real>& origin, const Vec3<Real>& dir,
                                             double t0, const IntersectOptions& opt, Real* t_out) {
    IntersectionOutcome out;
    SurfaceShape<double> sv;
    sv.curvature = value_of(shape.curvature);
    sv.conic = value_of(shape.conic);
    for (int i = 0; i < 8; ++i) sv.aspheric[static_cast<std::size_t>(i)] = value_of(shape.aspheric[static_cast<std::size_t>(i)]);
    sv.z_vertex = value_of(shape.z_vertex);
    sv.semi_aperture = shape.semi_aperture;
    sv.any_aspheric = shape.any_aspheric;

    Vec3d ov{value_of(origin.x), value_of(origin.y), value_of(origin.z)};
    Vec3d dv{value_of(dir.x), value_of(dir.y), value_of(dir.z)};
    NewtonResult nr = newton_intersect(sv, ov, dv, t0, opt);
    out.ok = nr.ok;
    out.reason = nr.reason;
    out.evals = nr.evals;
    if (!nr.ok) return out;

    // Implicit-function partials of the root t* with respect to everything
    // it depends on: dF = g dt + dF/dtheta dtheta = 0 at the root.
    double t = nr.t;
    Vec3d p{ov.x + t * dv.x, ov.y + t * dv.y, ov.z + t * dv.z};
    double r2 = p.x * p.x + p.y * p.y;
    SagPartials sp = sag_partials(sv, r2);
    Vec3d grad_f{-2.0 * p.x * sp.d_r2, -2.0 * p.y * sp.d_r2, 1.0};
    double g = dot(grad_f, dv);
    double inv_g = 1.0 / g;

    std::pair<Real, double> parents[17];
    std::size_t n = 0;
    parents[n++] = {origin.x, -grad_f.x * inv_g};
    parents[n++] = {origin.y, -grad_f.y * inv_g};
    parents[n++] = {origin.z, -grad_f.z * inv_g};
    parents[n++] = {dir.x, -t * grad_f.x * inv_g};
    parents[n++] = {dir.y, -t * grad_f.y * inv_g};
    parents[n++] = {dir.z, -t * grad_f.z * inv_g};
    parents[n++] = {shape.curvature, sp.d_c * inv_g};
    parents[n++] = {shape.conic, sp.d_k * inv_g};
    parents[n++] = {shape.z_vertex, inv_g};
    for (int i = 0; i < 8; ++i)
        parents[n++] = {shape.aspheric[static_cast<std::size_t>(i)], sp.d_a[static_cast<std::size_t>(i)] * inv_g};

    Tape* tape = nullptr;
    for (std::size_t i = 0; i < n && !tape; ++i)
        if (parents[i].first.taped()) tape = parents[i].first.tape;
    if (tape)
        *t_out = tape->node_span(t, parents, n);
    else
        *t_out = Real(t);
    return out;
}

RayStart start_ray(const TracePlan& plan, const FieldSpec& field, double px, double py) {
    double v = field.angle_deg * M_PI / 180.0;
    Vec3d dir{0.0, std::sin(v), std::cos(v)};
    Vec3d aim{plan.pupil.radius * px, plan.pupil.radius * py, plan.pupil.z};
    Vec3d anchor{0.0, 0.0, plan.z_wavefront};
    double along = dot(aim - anchor, dir);
    RayStart rs;
    rs.origin = aim - along * dir;
    rs.dir = dir;
    return rs;
}

template <class T>
TracedRay<T> trace_ray_core(const SystemView<T>& view, const TracePlan& plan, const RayStart& rs,
                            double wavelength_nm, const TraceOptions& opt) {
    const LensSystem& sys = *view.base;
    TracedRay<T> ray;
    ray.wavelength_nm = wavelength_nm;
    Vec3<T> p{T(rs.origin.x), T(rs.origin.y), T(rs.origin.z)};
    Vec3<T> d{T(rs.dir.x), T(rs.dir.y), T(rs.dir.z)};
    T opl(0.0);

    auto fail = [&](FailureReason why) {
        ray.position = p;
        ray.direction = d;
        ray.opl = opl;
        ray.amplitude = 0.0;
        ray.valid = false;
        ray.reason = why;
        return ray;
    };

    for (int j = 0; j < sys.surface_count(); ++j) {
        const SurfaceShape<T>& shape = view.shapes[static_cast<std::size_t>(j)];
        Vec3d pv{value_of(p.x), value_of(p.y), value_of(p.z)};
        Vec3d dv{value_of(d.x), value_of(d.y), value_of(d.z)};

        double t0 = 0.0;
        if (opt.guess == InitialGuessKind::ReferencePoints) {
            if (!initial_guess_t(plan.refs[static_cast<std::size_t>(j)], value_of(shape.z_vertex), pv, dv, &t0))
                return fail(FailureReason::NoIntersection);
        } else {
            if (dv.z == 0.0) return fail(FailureReason::NoIntersection);
            t0 = (value_of(shape.z_vertex) - pv.z) / dv.z;
        }

        T t{};
        IntersectionOutcome io = intersect_surface(shape, p, d, t0, opt.intersect, &t);
        if (!io.ok) return fail(io.reason);
        ray.max_evals = std::max(ray.max_evals, io.evals);
        if (value_of(t) <= 0.0) return fail(FailureReason::NoIntersection);

        p = p + t * d;
        opl += T(sys.index_before(j, wavelength_nm)) * t;

        double r2v = value_of(p.x) * value_of(p.x) + value_of(p.y) * value_of(p.y);
        if (r2v > shape.semi_aperture * shape.semi_aperture)
            return fail(FailureReason::ApertureClip);

        double n1 = sys.index_before(j, wavelength_nm);
        double n2 = sys.index_after(j, wavelength_nm);
        if (n1 != n2) {
            Vec3<T> normal = normalized(shape_gradient(shape, p));
            RefractOutcome<T> ro = refract_dir(d, -normal, n1, n2);
            if (ro.tir) return fail(FailureReason::TotalInternalReflection);
            d = ro.dir;
        }
    }

    // propagate to the image plane
    T t_img = (view.image_z - p.z) / d.z;
    if (value_of(t_img) < 0.0) return fail(FailureReason::NoIntersection);
    p = p + t_img * d;
    int last = sys.surface_count() - 1;
    opl += T(sys.index_after(last, wavelength_nm)) * t_img;

    ray.position = p;
    ray.direction = d;
    ray.opl = opl;
    return ray;
}

template TracedRay<double> trace_ray_core<double>(const SystemView<double>&, const TracePlan&,
                                                  const RayStart&, double, const TraceOptions&);
template TracedRay<Real> trace_ray_core<Real>(const SystemView<Real>&, const TracePlan&,
                                              const RayStart&, double, const TraceOptions&);

} // namespace detail

template <class T>
TracedRay<T> trace_pupil_coord(const SystemView<T>& view, const TracePlan& plan,
                               const FieldSpec& field, double px, double py, double wavelength_nm,
                               const TraceOptions& opt) {
    detail::RayStart rs = detail::start_ray(plan, field, px, py);
    TracedRay<T> ray = detail::trace_ray_core(view, plan, rs, wavelength_nm, opt);
    if (field.azimuth_deg != 0.0) {
        // the system is rotationally symmetric: trace in the meridional frame
        // and rotate the outcome about the axis
        double az = field.azimuth_deg * M_PI / 180.0;
        double ca = std::cos(az), sa = std::sin(az);
        auto rot = [&](Vec3<T>& v) {
            T x = v.x * T(ca) - v.y * T(sa);
            T y = v.x * T(sa) + v.y * T(ca);
            v.x = x;
            v.y = y;
        };
        rot(ray.position);
        rot(ray.direction);
    }
    ray.pupil = {px, py};
    return ray;
}

template <class T>
TracedBundle<T> trace_bundle(const SystemView<T>& view, const TracePlan& plan,
                             const FieldPlan& fplan, double wavelength_nm,
                             const TraceOptions& opt) {
    TracedBundle<T> bundle;
    bundle.field = fplan.field;
    bundle.wavelength_nm = wavelength_nm;
    bundle.rays.resize(fplan.samples.size());

    auto trace_one = [&](std::size_t i) {
        const PupilSample& s = fplan.samples[i];
        double px = fplan.ellipse.vdx + fplan.ellipse.vcx * s.gx;
        double py = fplan.ellipse.vdy + fplan.ellipse.vcy * s.gy;
        bundle.rays[i] = trace_pupil_coord(view, plan, fplan.field, px, py, wavelength_nm, opt);
        bundle.rays[i].pupil = s;
    };

    if constexpr (std::is_same_v<T, double>) {
        if (opt.parallel) {
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(fplan.samples.size()); ++i)
                trace_one(static_cast<std::size_t>(i));
        } else {
            for (std::size_t i = 0; i < fplan.samples.size(); ++i) trace_one(i);
        }
    } else {
        for (std::size_t i = 0; i < fplan.samples.size(); ++i) trace_one(i);
    }

    for (const auto& r : bundle.rays)
        if (r.valid) ++bundle.valid_count;
    if (bundle.valid_count == 0)
        throw TraceError("bundle extinct: no valid rays at field " +
                         std::to_string(fplan.field.angle_deg) + " deg, wavelength " +
                         std::to_string(wavelength_nm) + " nm");
    return bundle;
}

template <class T>
TracedRay<T> chief_ray(const SystemView<T>& view, const TracePlan& plan, const FieldPlan& fplan,
                       double wavelength_nm, const TraceOptions& opt) {
    if (!fplan.chief_ok)
        throw TraceError("chief ray aiming unavailable for field " +
                         std::to_string(fplan.field.angle_deg) + " deg");
    TracedRay<T> ray = trace_pupil_coord(view, plan, fplan.field, fplan.chief_pupil.x,
                                         fplan.chief_pupil.y, wavelength_nm, opt);
    if (!ray.valid)
        throw TraceError("chief ray lost at field " + std::to_string(fplan.field.angle_deg) +
                         " deg (" + failure_reason_name(ray.reason) + ")");
    return ray;
}

namespace {

// Intersection point on the stop surface, used by the chief-ray aim.
bool stop_intercept(const SystemView<double>& view, const TracePlan& plan, const FieldSpec& field,
                    double px, double py, double wavelength_nm, Vec2d* out) {
    const LensSystem& sys = *view.base;
    int stop = sys.stop_index();
    detail::RayStart rs = detail::start_ray(plan, field, px, py);
    Vec3d p = rs.origin;
    Vec3d d = rs.dir;
    IntersectOptions iopt;
    for (int j = 0; j <= stop; ++j) {
        const SurfaceShape<double>& shape = view.shapes[static_cast<std::size_t>(j)];
        double t0 = 0.0;
        if (!initial_guess_t(plan.refs[static_cast<std::size_t>(j)], shape.z_vertex, p, d, &t0)) return false;
        NewtonResult nr = newton_intersect(shape, p, d, t0, iopt);
        if (!nr.ok || nr.t <= 0.0) return false;
        p = p + nr.t * d;
        if (j == stop) {
            *out = {p.x, p.y};
            return true;
        }
        double n1 = sys.index_before(j, wavelength_nm);
        double n2 = sys.index_after(j, wavelength_nm);
        if (n1 != n2) {
            Vec3d normal = normalized(shape_gradient(shape, p));
            RefractOutcome<double> ro = refract_dir(d, -normal, n1, n2);
            if (ro.tir) return false;
            d = ro.dir;
        }
    }
    return false;
}

} // namespace

Vec2d aim_chief(const LensSystem& system, const TracePlan& plan, const FieldSpec& field,
                double wavelength_nm, const PlanOptions&) {
    SystemView<double> view = view_of(system);
    Vec2d p{0.0, 0.0};
    Vec2d r;
    if (!stop_intercept(view, plan, field, p.x, p.y, wavelength_nm, &r))
        throw TraceError("chief ray aiming failed to reach the stop at field " +
                         std::to_string(field.angle_deg) + " deg");
    const double tol = 1e-8;
    for (int it = 0; it < 64; ++it) {
        if (std::hypot(r.x, r.y) < tol) return p;
        const double h = 1e-6;
        Vec2d rx, ry;
        if (!stop_intercept(view, plan, field, p.x + h, p.y, wavelength_nm, &rx) ||
            !stop_intercept(view, plan, field, p.x, p.y + h, wavelength_nm, &ry))
            throw TraceError("chief ray aiming lost the stop at field " +
                             std::to_string(field.angle_deg) + " deg");
        double j11 = (rx.x - r.x) / h, j12 = (ry.x - r.x) / h;
        double j21 = (rx.y - r.y) / h, j22 = (ry.y - r.y) / h;
        double det = j11 * j22 - j12 * j21;
        if (std::fabs(det) < 1e-18)
            throw TraceError("chief ray aiming Jacobian is singular at field " +
                             std::to_string(field.angle_deg) + " deg");
        double sx = (j22 * r.x - j12 * r.y) / det;
        double sy = (j11 * r.y - j21 * r.x) / det;
        double scale = 1.0;
        for (int damp = 0; damp < 8; ++damp) {
            Vec2d cand{p.x - scale * sx, p.y - scale * sy};
            Vec2d rc;
            if (stop_intercept(view, plan, field, cand.x, cand.y, wavelength_nm, &rc) &&
                std::hypot(rc.x, rc.y) < std::hypot(r.x, r.y)) {
                p = cand;
                r = rc;
                break;
            }
            scale *= 0.5;
            if (damp == 7)
                throw TraceError("chief ray aiming stalled at field " +
                                 std::to_string(field.angle_deg) + " deg");
        }
    }
    if (std::hypot(r.x, r.y) < tol) return p;
    throw TraceError("chief ray aiming did not converge at field " +
                     std::to_string(field.angle_deg) + " deg");
}

VignettingEllipse estimate_vignetting(const LensSystem& system, const TracePlan& plan,
                                      const FieldSpec& field, const PlanOptions& opt) {
    SystemView<double> view = view_of(system);
    const int n = opt.probe_grid_n;
    struct Probe {
        double px, py;
        bool alive = false;
    };
    std::vector<Probe> probes;
    probes.reserve(static_cast<std::size_t>(n) * n);
    for (int iy = 0; iy < n; ++iy) {
        for (int ix = 0; ix < n; ++ix) {
            double px = static_cast<double>(2 * ix + 1 - n) / n;
            double py = static_cast<double>(2 * iy + 1 - n) / n;
            if (px * px + py * py > 1.0) continue;
            probes.push_back({px, py, false});
        }
    }
    TraceOptions topt;
    topt.guess = opt.guess;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(probes.size()); ++i) {
        Probe& pr = probes[static_cast<std::size_t>(i)];
        TracedRay<double> ray = trace_pupil_coord(view, plan, field, pr.px, pr.py,
                                                  system.reference_wavelength_nm, topt);
        pr.alive = ray.valid;
    }
    double min_x = 1.0, max_x = -1.0, min_y = 1.0, max_y = -1.0;
    int survivors = 0;
    for (const Probe& pr : probes) {
        if (!pr.alive) continue;
        ++survivors;
        min_x = std::min(min_x, pr.px);
        max_x = std::max(max_x, pr.px);
        min_y = std::min(min_y, pr.py);
        max_y = std::max(max_y, pr.py);
    }
    if (survivors < opt.min_survivors)
        throw TraceError("field fully vignetted at " + std::to_string(field.angle_deg) +
                         " deg: " + std::to_string(survivors) + " surviving probes");
    // Half-step expansion compensates the probe quantization bias, the 1%
    // shrink keeps the sampled rim strictly inside the surviving region.
    double h = 2.0 / n;
    VignettingEllipse e;
    e.vdx = 0.5 * (max_x + min_x);
    e.vdy = 0.5 * (max_y + min_y);
    e.vcx = (0.5 * (max_x - min_x) + 0.5 * h) * 0.99;
    e.vcy = (0.5 * (max_y - min_y) + 0.5 * h) * 0.99;
    return e;
}

TracePlan build_trace_plan(const LensSystem& system, const std::vector<FieldSpec>& fields,
                           int pupil_grid_n, const PlanOptions& opt) {
    if (pupil_grid_n < 3) throw Error("pupil grid must be at least 3x3");
    TracePlan plan;
    plan.pupil = entrance_pupil(system, system.reference_wavelength_nm);
    plan.z_wavefront = std::min(0.0, plan.pupil.z) - 2.0 * plan.pupil.radius;
    plan.pupil_grid_n = pupil_grid_n;
    plan.refs.reserve(system.surfaces.size());
    for (int j = 0; j < system.surface_count(); ++j)
        plan.refs.push_back(build_reference_points(system.surfaces[static_cast<std::size_t>(j)], j,
                                                   opt.reference_radii, opt.reference_azimuths));
    for (const FieldSpec& f : fields) {
        FieldPlan fp;
        fp.field = f;
        fp.ellipse = estimate_vignetting(system, plan, {f.angle_deg, 0.0}, opt);
        for (int iy = 0; iy < pupil_grid_n; ++iy) {
            for (int ix = 0; ix < pupil_grid_n; ++ix) {
                double gx = static_cast<double>(2 * ix + 1 - pupil_grid_n) / pupil_grid_n;
                double gy = static_cast<double>(2 * iy + 1 - pupil_grid_n) / pupil_grid_n;
                if (gx * gx + gy * gy > 1.0) continue;
                fp.samples.push_back({gx, gy});
            }
        }
        fp.chief_pupil = aim_chief(system, plan, {f.angle_deg, 0.0},
                                   system.reference_wavelength_nm, opt);
        fp.chief_ok = true;
        plan.fields.push_back(std::move(fp));
    }
    return plan;
}

template TracedRay<double> trace_pupil_coord<double>(const SystemView<double>&, const TracePlan&,
                                                     const FieldSpec&, double, double, double,
                                                     const TraceOptions&);
template TracedRay<Real> trace_pupil_coord<Real>(const SystemView<Real>&, const TracePlan&,
                                                 const FieldSpec&, double, double, double,
                                                 const TraceOptions&);
template TracedBundle<double> trace_bundle<double>(const SystemView<double>&, const TracePlan&,
                                                   const FieldPlan&, double, const TraceOptions&);
template TracedBundle<Real> trace_bundle<Real>(const SystemView<Real>&, const TracePlan&,
                                               const FieldPlan&, double, const TraceOptions&);
template TracedRay<double> chief_ray<double>(const SystemView<double>&, const TracePlan&,
                                             const FieldPlan&, double, const TraceOptions&);
template TracedRay<Real> chief_ray<Real>(const SystemView<Real>&, const TracePlan&, const FieldPlan&,
                                         double, const TraceOptions&);

} // namespace difflens
