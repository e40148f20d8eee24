#include "difflens/surface.hpp"

namespace difflens {

ReferencePointSet build_reference_points(const Surface& surface, int surface_index, int radii,
                                         int azimuths) {
    ReferencePointSet set;
    set.surface_index = surface_index;
    set.radii = radii;
    set.azimuths = azimuths;
    set.points.reserve(static_cast<std::size_t>(radii) * azimuths + 1);
    SurfaceShape<double> sh = shape_of(surface, 0.0);
    set.points.push_back({0.0, 0.0, 0.0}); // apex
    for (int j = 1; j <= radii; ++j) {
        double r = surface.semi_aperture * static_cast<double>(j) / radii;
        double z = sag_at_r2(sh, r * r);
        for (int l = 0; l < azimuths; ++l) {
            double th = 2.0 * M_PI * l / azimuths;
            set.points.push_back({r * std::cos(th), r * std::sin(th), z});
        }
    }
    return set;
}

} // namespace difflens
