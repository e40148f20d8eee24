#pragma once

#include <optional>
#include <string>
#include <vector>

#include "difflens/surface.hpp"
#include "difflens/tape.hpp"

namespace difflens {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TraceError : Error {
    using Error::Error;
};

struct AfocalError : Error {
    using Error::Error;
};

/// Ordered surface prescription plus the sensor/wavelength context. The first
/// surface vertex sits at z = 0; the image plane at the cumulative thickness.
struct LensSystem {
    std::vector<Surface> surfaces;
    std::vector<double> wavelengths_nm{486.1, 587.6, 656.3};
    double reference_wavelength_nm = 587.6;
    std::vector<double> field_angles_deg{0.0};
    double max_field_deg = 0.0;     // largest traceable half angle
    double image_height_mm = 6.0;   // full diagonal
    double sensor_pitch_um = 1.2;
    std::string name;

    int surface_count() const { return static_cast<int>(surfaces.size()); }

    int stop_index() const {
        for (int j = 0; j < surface_count(); ++j)
            if (surfaces[static_cast<std::size_t>(j)].is_stop) return j;
        return -1;
    }

    double vertex_z(int surface_index) const {
        double z = 0.0;
        for (int j = 0; j < surface_index; ++j) z += surfaces[static_cast<std::size_t>(j)].thickness;
        return z;
    }

    double image_z() const { return vertex_z(surface_count()); }

    /// Total track length: first vertex to image plane.
    double total_track() const { return image_z(); }

    double index_before(int surface_index, double wavelength_nm) const {
        if (surface_index == 0) return 1.0;
        return surfaces[static_cast<std::size_t>(surface_index - 1)].material.index_at(wavelength_nm);
    }

    double index_after(int surface_index, double wavelength_nm) const {
        return surfaces[static_cast<std::size_t>(surface_index)].material.index_at(wavelength_nm);
    }

    /// Checks the structural invariants; throws Error naming the offender.
    void validate() const;
};

enum class ParamKind : uint8_t { Curvature, Thickness, Conic, Asphere };

std::string param_kind_name(ParamKind kind);

struct ParamRef {
    int surface = 0;              // 0-based
    ParamKind kind = ParamKind::Curvature;
    int asphere_index = 0;        // 1..8 when kind == Asphere

    bool operator==(const ParamRef&) const = default;
};

struct ParamEntry {
    ParamRef ref;
    double value = 0.0;
    bool trainable = false;
};

/// Flattened differentiable lens parameters in a stable order: surfaces
/// ascending, within a surface c, d, k, a1..a8.
struct ParamVector {
    std::vector<ParamEntry> entries;

    static ParamVector from_system(const LensSystem& system);
    void apply_to(LensSystem& system) const;

    std::vector<std::size_t> trainable_indices() const;
    std::string label(std::size_t i) const;
};

/// The system's differentiable view: geometry of each surface in scalar type
/// T plus the image-plane position. Media and apertures stay plain.
template <class T>
struct SystemView {
    const LensSystem* base = nullptr;
    std::vector<SurfaceShape<T>> shapes;
    T image_z{};
};

inline SystemView<double> view_of(const LensSystem& system) {
    SystemView<double> v;
    v.base = &system;
    v.shapes.reserve(system.surfaces.size());
    double z = 0.0;
    for (const Surface& s : system.surfaces) {
        v.shapes.push_back(shape_of(s, z));
        z += s.thickness;
    }
    v.image_z = z;
    return v;
}

/// Builds a taped view: trainable parameters become leaves, frozen ones
/// constants. Vertex positions and the image plane are cumulative sums of the
/// (possibly taped) thicknesses.
struct TapedSystem {
    SystemView<Real> view;
    std::vector<Real> leaves;           // one per trainable entry, param order
    std::vector<std::size_t> leaf_param; // index into params.entries
};

TapedSystem taped_view(const LensSystem& system, const ParamVector& params, Tape& tape);

/// Gradient of the last backward pass with respect to every trainable entry.
/// all_zero flags a loss disconnected from every parameter.
struct Gradient {
    std::vector<double> values; // aligned with ParamVector::trainable_indices()
    bool all_zero = true;
};

Gradient collect_gradient(const Tape& tape, const TapedSystem& ts);

} // namespace difflens
