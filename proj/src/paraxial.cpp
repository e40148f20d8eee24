#include "difflens/paraxial.hpp"

#include <cmath>

namespace difflens {

EntrancePupil entrance_pupil(const LensSystem& system, double wavelength_nm) {
    int stop = system.stop_index();
    if (stop < 0) throw Error("lens system has no stop surface");
    const double r_stop = system.surfaces[static_cast<std::size_t>(stop)].semi_aperture;
    if (stop == 0) return {0.0, r_stop};

    // Linear map (y, u) at the first vertex -> height at the stop, from two
    // basis y-nu traces through the front group.
    auto height_at_stop = [&](double y, double u) {
        double omega = u; // object space n = 1
        for (int j = 0; j < stop; ++j) {
            const Surface& s = system.surfaces[static_cast<std::size_t>(j)];
            double n1 = system.index_before(j, wavelength_nm);
            double n2 = system.index_after(j, wavelength_nm);
            omega -= y * s.curvature * (n2 - n1);
            y += s.thickness * omega / n2;
        }
        return y;
    };
    double a = height_at_stop(1.0, 0.0);
    double b = height_at_stop(0.0, 1.0);
    if (std::fabs(a) < 1e-12)
        throw Error("entrance pupil lies at infinity (stop conjugate to the front focal plane)");
    return {b / a, r_stop / std::fabs(a)};
}

double back_focal_distance(const LensSystem& system, double wavelength_nm) {
    double y = 1.0;
    double omega = 0.0;
    int last = system.surface_count() - 1;
    for (int j = 0; j <= last; ++j) {
        const Surface& s = system.surfaces[static_cast<std::size_t>(j)];
        double n1 = system.index_before(j, wavelength_nm);
        double n2 = system.index_after(j, wavelength_nm);
        omega -= y * s.curvature * (n2 - n1);
        if (j < last) y += s.thickness * omega / n2;
    }
    double n_img = system.index_after(last, wavelength_nm);
    double u = omega / n_img;
    if (std::fabs(u) < 1e-14) throw AfocalError("system is afocal: no paraxial focus");
    return -y / u;
}

} // namespace difflens
