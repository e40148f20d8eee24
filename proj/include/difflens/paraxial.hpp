#pragma once

#include "difflens/system.hpp"

namespace difflens {

/// First-order y-nu trace of a marginal ray from infinity (y=1, u=0).
/// Returns 1/power, i.e. the focal length referred to unit image index.
template <class T>
T paraxial_effl_view(const SystemView<T>& view, double wavelength_nm) {
    const LensSystem& sys = *view.base;
    T y(1.0);
    T omega(0.0); // reduced angle n*u
    for (int j = 0; j < sys.surface_count(); ++j) {
        const SurfaceShape<T>& sh = view.shapes[static_cast<std::size_t>(j)];
        double n1 = sys.index_before(j, wavelength_nm);
        double n2 = sys.index_after(j, wavelength_nm);
        T power = sh.curvature * (n2 - n1);
        omega = omega - y * power;
        if (j + 1 < sys.surface_count()) {
            T d = view.shapes[static_cast<std::size_t>(j + 1)].z_vertex - sh.z_vertex;
            y = y + d * (omega / T(n2));
        }
    }
    if (std::fabs(value_of(omega)) < 1e-12)
        throw AfocalError("system is afocal: paraxial marginal ray exits parallel to the axis");
    return -T(1.0) / omega;
}

inline double paraxial_effl(const LensSystem& system, double wavelength_nm) {
    SystemView<double> v = view_of(system);
    return paraxial_effl_view(v, wavelength_nm);
}

struct EntrancePupil {
    double z = 0.0;      // axial position, mm (first vertex at 0)
    double radius = 0.0; // mm
};

/// Paraxial image of the stop through the surfaces in front of it.
EntrancePupil entrance_pupil(const LensSystem& system, double wavelength_nm);

/// Distance from the last vertex to the paraxial marginal focus.
double back_focal_distance(const LensSystem& system, double wavelength_nm);

} // namespace difflens
