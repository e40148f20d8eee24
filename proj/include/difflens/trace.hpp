#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "difflens/paraxial.hpp"
#include "difflens/surface.hpp"
#include "difflens/system.hpp"
#include "difflens/tape.hpp"
#include "difflens/vec.hpp"

namespace difflens {

enum class FailureReason : uint8_t {
    None = 0,
    NoIntersection,
    ApertureClip,
    TotalInternalReflection,
};

std::string failure_reason_name(FailureReason r);

/// Object-space field. Azimuth 0 lies in the meridional (y-z) plane.
struct FieldSpec {
    double angle_deg = 0.0;
    double azimuth_deg = 0.0;
};

enum class InitialGuessKind : uint8_t {
    ReferencePoints, // nearest precomputed on-surface point, then the
                     // perpendicular foot on the ray
    TangentPlane,    // intersection with the vertex tangent plane
};

struct IntersectOptions {
    double tolerance_mm = 1e-10;
    int max_evals = 50;
    double min_slope = 1e-14;
};

struct NewtonResult {
    bool ok = false;
    double t = 0.0;
    int evals = 0;
    FailureReason reason = FailureReason::None;
};

/// Newton iteration on F(P(t)) = z - sag along the ray, starting from t0.
/// evals counts F evaluations, so an initial guess already on the surface
/// reports 1.
NewtonResult newton_intersect(const SurfaceShape<double>& shape, const Vec3d& origin,
                              const Vec3d& dir, double t0,
                              const IntersectOptions& opt = {});

/// Non-gradient reference intersection: fixed-step marching (1e-4 mm) until
/// the implicit function changes sign, then bisection. Independent of the
/// Newton path.
struct MarchResult {
    bool found = false;
    double t = 0.0;
};
MarchResult march_intersect(const SurfaceShape<double>& shape, const Vec3d& origin,
                            const Vec3d& dir, double t_lo, double t_hi, double step_mm = 1e-4);

/// Nearest reference point per the along-ray perpendicular-distance ratio;
/// returns false when no reference point lies ahead of the ray.
bool initial_guess_t(const ReferencePointSet& refs, double z_vertex, const Vec3d& origin,
                     const Vec3d& dir, double* t0);

/// Vector Snell. normal must be unit length and oriented against the incoming
/// direction (dot(dir, normal) <= 0).
template <class T>
struct RefractOutcome {
    bool tir = false;
    Vec3<T> dir;
};

template <class T>
RefractOutcome<T> refract_dir(const Vec3<T>& dir, const Vec3<T>& normal, double n1, double n2) {
    using std::sqrt;
    RefractOutcome<T> out;
    double mu = n1 / n2;
    T cos1 = -dot(dir, normal);
    T sin2sq = T(mu * mu) * (T(1.0) - cos1 * cos1);
    if (value_of(sin2sq) > 1.0) {
        out.tir = true;
        out.dir = dir;
        return out;
    }
    T cos2 = sqrt(T(1.0) - sin2sq);
    Vec3<T> d = T(mu) * dir + (T(mu) * cos1 - cos2) * normal;
    out.dir = normalized(d);
    return out;
}

/// Pupil sample in pre-compression coordinates (unit disk).
struct PupilSample {
    double gx = 0.0;
    double gy = 0.0;
};

struct VignettingEllipse {
    double vdx = 0.0;
    double vdy = 0.0;
    double vcx = 1.0;
    double vcy = 1.0;
};

struct FieldPlan {
    FieldSpec field;
    VignettingEllipse ellipse;
    std::vector<PupilSample> samples; // kept grid nodes inside the unit disk
    Vec2d chief_pupil{};              // raw pupil coordinates of the aimed chief
    bool chief_ok = false;
};

/// Frozen sampling geometry for one system state: entrance pupil, wavefront
/// anchor, reference points, and per-field pupil plans. Rebuilt whenever the
/// prescription changes; treated as constant data by the adjoint.
struct TracePlan {
    EntrancePupil pupil;
    double z_wavefront = 0.0;
    std::vector<ReferencePointSet> refs;
    std::vector<FieldPlan> fields;
    int pupil_grid_n = 0;
};

struct PlanOptions {
    int probe_grid_n = 32;
    int min_survivors = 8;
    int reference_radii = 16;
    int reference_azimuths = 16;
    InitialGuessKind guess = InitialGuessKind::ReferencePoints;
};

/// Probe-and-fit vignetting: trace a probe grid over the nominal entrance
/// pupil at the reference wavelength and fit the axis-aligned bounding
/// ellipse of the survivors (half-step expansion, then 1% shrink).
VignettingEllipse estimate_vignetting(const LensSystem& system, const TracePlan& plan,
                                      const FieldSpec& field, const PlanOptions& opt = {});

TracePlan build_trace_plan(const LensSystem& system, const std::vector<FieldSpec>& fields,
                           int pupil_grid_n, const PlanOptions& opt = {});

template <class T>
struct TracedRay {
    Vec3<T> position;  // image-plane point for valid rays, last point otherwise
    Vec3<T> direction; // unit
    T opl{};           // mm
    double amplitude = 1.0;
    double wavelength_nm = 0.0;
    PupilSample pupil;
    bool valid = true;
    FailureReason reason = FailureReason::None;
    int max_evals = 0; // worst Newton evaluation count across surfaces
};

template <class T>
struct TracedBundle {
    FieldSpec field;
    double wavelength_nm = 0.0;
    std::vector<TracedRay<T>> rays;
    int valid_count = 0;
};

struct TraceOptions {
    InitialGuessKind guess = InitialGuessKind::ReferencePoints;
    IntersectOptions intersect;
    bool parallel = true; // honored for the double path only
};

namespace detail {

/// Object-space start of a pupil sample: direction fixed by the field,
/// origin the projection of the pupil aim point onto the tilted wavefront
/// plane anchored one pupil diameter before the first vertex.
struct RayStart {
    Vec3d origin;
    Vec3d dir;
};

RayStart start_ray(const TracePlan& plan, const FieldSpec& field, double px, double py);

/// Core per-ray march through the surfaces; shared by the double and taped
/// paths. Azimuth rotation is applied by the callers.
template <class T>
TracedRay<T> trace_ray_core(const SystemView<T>& view, const TracePlan& plan, const RayStart& rs,
                            double wavelength_nm, const TraceOptions& opt);

} // namespace detail

/// Traces one pupil coordinate (meridional frame) and rotates the outcome to
/// the field azimuth.
template <class T>
TracedRay<T> trace_pupil_coord(const SystemView<T>& view, const TracePlan& plan,
                               const FieldSpec& field, double px, double py, double wavelength_nm,
                               const TraceOptions& opt = {});

/// Traces a planned field bundle at one wavelength. Throws TraceError when
/// every ray is lost ("bundle extinct").
template <class T>
TracedBundle<T> trace_bundle(const SystemView<T>& view, const TracePlan& plan,
                             const FieldPlan& fplan, double wavelength_nm,
                             const TraceOptions& opt = {});

/// Aims the chief ray (stop-center crossing) by a damped 2-D secant on the
/// pupil coordinates. Plain-double; the result is frozen into the plan.
Vec2d aim_chief(const LensSystem& system, const TracePlan& plan, const FieldSpec& field,
                double wavelength_nm, const PlanOptions& opt = {});

/// Chief ray traced with the plan's frozen aim coordinates.
template <class T>
TracedRay<T> chief_ray(const SystemView<T>& view, const TracePlan& plan, const FieldPlan& fplan,
                       double wavelength_nm, const TraceOptions& opt = {});

// Explicit double/Real instantiations live in trace.cpp.
extern template TracedRay<double> trace_pupil_coord<double>(const SystemView<double>&,
                                                            const TracePlan&, const FieldSpec&,
                                                            double, double, double,
                                                            const TraceOptions&);
extern template TracedRay<Real> trace_pupil_coord<Real>(const SystemView<Real>&, const TracePlan&,
                                                        const FieldSpec&, double, double, double,
                                                        const TraceOptions&);
extern template TracedBundle<double> trace_bundle<double>(const SystemView<double>&,
                                                          const TracePlan&, const FieldPlan&,
                                                          double, const TraceOptions&);
extern template TracedBundle<Real> trace_bundle<Real>(const SystemView<Real>&, const TracePlan&,
                                                      const FieldPlan&, double,
                                                      const TraceOptions&);
extern template TracedRay<double> chief_ray<double>(const SystemView<double>&, const TracePlan&,
                                                    const FieldPlan&, double, const TraceOptions&);
extern template TracedRay<Real> chief_ray<Real>(const SystemView<Real>&, const TracePlan&,
                                                const FieldPlan&, double, const TraceOptions&);

} // namespace difflens
