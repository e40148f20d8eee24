#pragma once

#include "difflens/paraxial.hpp"
#include "difflens/system.hpp"

namespace difflens::fixtures {

inline DispersionModel nbk7_glass() {
    return DispersionModel::sellmeier(1.03961212, 0.00600069867, 0.231792344, 0.0200179144,
                                      1.01046945, 103.560653);
}

inline DispersionModel f2_glass() {
    return DispersionModel::sellmeier(1.34533359, 0.00997743871, 0.209073176, 0.0470450767,
                                      0.937357162, 111.886764);
}

inline DispersionModel nsf11_glass() {
    return DispersionModel::sellmeier(1.73759695, 0.013188707, 0.313747346, 0.0623068142,
                                      1.89878101, 155.23629);
}

/// Focuses the system by setting the last thickness to the paraxial back
/// focal distance at the reference wavelength.
inline void focus_at_paraxial(LensSystem& sys) {
    sys.surfaces.back().thickness = 0.0;
    sys.surfaces.back().thickness = back_focal_distance(sys, sys.reference_wavelength_nm);
}

/// BK7 biconvex singlet, f ~ 50 mm, stop on the front surface.
inline LensSystem singlet(double semi_aperture = 5.0) {
    LensSystem sys;
    sys.name = "singlet";
    Surface s1;
    s1.curvature = 0.01935;
    s1.thickness = 3.0;
    s1.semi_aperture = semi_aperture;
    s1.material = nbk7_glass();
    s1.is_stop = true;
    Surface s2;
    s2.curvature = -0.01935;
    s2.thickness = 0.0;
    s2.semi_aperture = semi_aperture + 0.5;
    Surface& back = s2;
    (void)back;
    sys.surfaces = {s1, s2};
    sys.max_field_deg = 6.0;
    sys.field_angles_deg = {0.0, 2.0, 4.0};
    focus_at_paraxial(sys);
    sys.validate();
    return sys;
}

/// Strongly dispersive singlet for chromatic tests.
inline LensSystem dispersive_singlet() {
    LensSystem sys = singlet(3.0);
    sys.name = "dispersive_singlet";
    sys.surfaces[0].material = nsf11_glass();
    sys.surfaces[0].curvature = 0.0125;
    sys.surfaces[1].curvature = -0.0125;
    focus_at_paraxial(sys);
    sys.validate();
    return sys;
}

/// Cemented BK7/F2 achromat, slow aperture so the on-axis spot is tiny.
inline LensSystem doublet(double semi_aperture = 1.2) {
    LensSystem sys;
    sys.name = "doublet";
    Surface s1;
    s1.curvature = 0.0466;
    s1.thickness = 4.0;
    s1.semi_aperture = semi_aperture;
    s1.material = nbk7_glass();
    s1.is_stop = true;
    Surface s2;
    s2.curvature = -0.02801;
    s2.thickness = 2.5;
    s2.semi_aperture = semi_aperture + 0.5;
    s2.material = f2_glass();
    Surface s3;
    s3.curvature = 0.00730;
    s3.thickness = 0.0;
    s3.semi_aperture = semi_aperture + 0.5;
    sys.surfaces = {s1, s2, s3};
    sys.max_field_deg = 4.0;
    sys.field_angles_deg = {0.0, 1.5, 3.0};
    focus_at_paraxial(sys);
    sys.validate();
    return sys;
}

/// Doublet with an undersized rear element that clips oblique bundles.
inline LensSystem vignetted_doublet() {
    LensSystem sys = doublet(3.0);
    sys.name = "vignetted_doublet";
    sys.surfaces[1].semi_aperture = 2.4;
    sys.surfaces[2].semi_aperture = 2.4;
    sys.max_field_deg = 8.0;
    sys.field_angles_deg = {0.0, 3.0, 6.0};
    sys.validate();
    return sys;
}

} // namespace difflens::fixtures
