#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "difflens/dispersion.hpp"
#include "difflens/tape.hpp"
#include "difflens/vec.hpp"

namespace difflens {

struct SagDomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// One rotationally symmetric refracting (or stop) surface.
/// Sag: z = c r^2 / (1 + sqrt(1 - (1+k) c^2 r^2)) + sum_i a_i r^(2i), i = 1..8.
struct Surface {
    enum class Kind { StandardConic, EvenAsphere };

    Kind kind = Kind::StandardConic;
    double curvature = 0.0; // 1/mm
    double conic = 0.0;
    std::array<double, 8> aspheric{}; // a_i multiplies r^(2i), mm^(1-2i)
    double thickness = 0.0;           // axial distance to the next surface, mm
    double semi_aperture = 1.0;       // mm
    DispersionModel material = DispersionModel::air(); // medium behind this surface
    bool is_stop = false;

    bool has_aspheric_terms() const {
        for (double a : aspheric)
            if (a != 0.0) return true;
        return false;
    }
};

/// Surface shape parameters as seen by generic (double or taped) code.
/// Geometry only; apertures and media stay plain data.
template <class T>
struct SurfaceShape {
    T curvature{};
    T conic{};
    std::array<T, 8> aspheric{};
    T z_vertex{};
    double semi_aperture = 0.0;
    bool any_aspheric = false;
};

inline SurfaceShape<double> shape_of(const Surface& s, double z_vertex) {
    SurfaceShape<double> sh;
    sh.curvature = s.curvature;
    sh.conic = s.conic;
    for (int i = 0; i < 8; ++i) sh.aspheric[i] = s.aspheric[i];
    sh.z_vertex = z_vertex;
    sh.semi_aperture = s.semi_aperture;
    sh.any_aspheric = s.has_aspheric_terms();
    return sh;
}

/// True when the conic square root stays positive at this r^2.
template <class T>
inline bool sag_is_real(const SurfaceShape<T>& s, double r2) {
    double c = value_of(s.curvature);
    double k = value_of(s.conic);
    return 1.0 - (1.0 + k) * c * c * r2 > 0.0;
}

template <class T>
inline T sag_at_r2(const SurfaceShape<T>& s, const T& r2) {
    using std::sqrt;
    double arg_v = 1.0 - (1.0 + value_of(s.conic)) * value_of(s.curvature) *
                             value_of(s.curvature) * value_of(r2);
    if (arg_v <= 0.0) throw SagDomainError("sag square-root argument out of the real domain");
    T arg = T(1.0) - (T(1.0) + s.conic) * s.curvature * s.curvature * r2;
    T z = s.curvature * r2 / (T(1.0) + sqrt(arg));
    if (s.any_aspheric) {
        // Horner in r^2 over a_8..a_1, then one extra r^2 factor.
        T acc = s.aspheric[7];
        for (int i = 6; i >= 0; --i) acc = acc * r2 + s.aspheric[i];
        z = z + acc * r2;
    }
    return z;
}

/// d sag / d r^2 plus parameter partials, used by the surface normal and by
/// the implicit-function step of the intersection adjoint.
struct SagPartials {
    double d_r2 = 0.0;
    double d_c = 0.0;
    double d_k = 0.0;
    std::array<double, 8> d_a{};
};

inline SagPartials sag_partials(const SurfaceShape<double>& s, double r2) {
    SagPartials p;
    double c = s.curvature, k = s.conic;
    double arg = 1.0 - (1.0 + k) * c * c * r2;
    if (arg <= 0.0) throw SagDomainError("sag square-root argument out of the real domain");
    double sq = std::sqrt(arg);
    double den = 1.0 + sq;
    double den2 = den * den;
    p.d_r2 = c / den + c * r2 * (1.0 + k) * c * c / (2.0 * sq * den2);
    p.d_c = r2 / den + (1.0 + k) * c * c * r2 * r2 / (sq * den2);
    p.d_k = c * c * c * r2 * r2 / (2.0 * sq * den2);
    double r2i = r2; // r^(2i)
    for (int i = 0; i < 8; ++i) {
        p.d_a[i] = r2i;
        r2i *= r2;
    }
    if (s.any_aspheric) {
        // d/dr2 of sum a_i r^(2i) = sum i a_i r^(2(i-1))
        double r2im1 = 1.0;
        for (int i = 0; i < 8; ++i) {
            p.d_r2 += (i + 1) * s.aspheric[i] * r2im1;
            r2im1 *= r2;
        }
    }
    return p;
}

/// Gradient of F(x,y,z) = z - z_vertex - sag(x^2+y^2); normalizing it gives
/// the surface normal (positive z component).
template <class T>
inline Vec3<T> shape_gradient(const SurfaceShape<T>& s, const Vec3<T>& point) {
    using std::sqrt;
    T r2 = point.x * point.x + point.y * point.y;
    double r2v = value_of(r2);
    double arg_v =
        1.0 - (1.0 + value_of(s.conic)) * value_of(s.curvature) * value_of(s.curvature) * r2v;
    if (arg_v <= 0.0) throw SagDomainError("sag square-root argument out of the real domain");
    T arg = T(1.0) - (T(1.0) + s.conic) * s.curvature * s.curvature * r2;
    T sq = sqrt(arg);
    T den = T(1.0) + sq;
    T dsag = s.curvature / den +
             s.curvature * r2 * (T(1.0) + s.conic) * s.curvature * s.curvature /
                 (T(2.0) * sq * den * den);
    if (s.any_aspheric) {
        T acc = T(8.0) * s.aspheric[7];
        for (int i = 6; i >= 0; --i) acc = acc * r2 + T(double(i + 1)) * s.aspheric[i];
        dsag = dsag + acc;
    }
    return {T(-2.0) * point.x * dsag, T(-2.0) * point.y * dsag, T(1.0)};
}

/// Precomputed on-surface points used as Newton initial-guess anchors.
/// Points are in surface-local coordinates (vertex at origin).
struct ReferencePointSet {
    int surface_index = -1;
    int radii = 0;
    int azimuths = 0;
    std::vector<Vec3d> points;
};

/// Polar grid: radii uniform in (0, semi-aperture], azimuths uniform in
/// [0, 2pi), plus the apex.
ReferencePointSet build_reference_points(const Surface& surface, int surface_index, int radii = 16,
                                         int azimuths = 16);

} // namespace difflens
