#pragma once

#include <complex>
#include <vector>

#include "difflens/tape.hpp"
#include "difflens/trace.hpp"
#include "difflens/vec.hpp"

namespace difflens {

/// Image-plane sample grid. Row-major storage, row 0 at the smallest y;
/// coordinates are centered on (center_x, center_y).
struct PsfGridSpec {
    double center_x = 0.0; // mm
    double center_y = 0.0; // mm
    double pitch_mm = 0.6e-3;
    int side = 63;

    int cells() const { return side * side; }
    double offset(int i) const { return (i - (side - 1) / 2) * pitch_mm; }
    double coord_x(int col) const { return center_x + offset(col); }
    double coord_y(int row) const { return center_y + offset(row); }
};

struct PsfChannel {
    double wavelength_nm = 0.0;
    std::vector<std::complex<double>> amplitude; // row-major
    std::vector<double> intensity;               // |A|^2, normalized per mode
};

struct PSFGrid {
    enum class Norm { None, UnitSum };
    PsfGridSpec spec;
    std::vector<PsfChannel> channels;
    Norm norm = Norm::None;
};

inline double wave_number(double wavelength_nm) { return 2.0 * M_PI / (wavelength_nm * 1e-6); }

/// Plane-wave phase advance from a ray's image-plane point to a grid point.
inline double plane_wave_delta(const Vec3d& ray_point, const Vec3d& ray_dir,
                               const Vec3d& grid_point) {
    return dot(ray_dir, grid_point - ray_point);
}

/// Structure-of-arrays view of the valid rays feeding one PSF channel.
struct PsfRayData {
    std::vector<double> opl, x, y, dx, dy, dz, amp;

    std::size_t count() const { return opl.size(); }
    void reserve(std::size_t n);
    void push(double opl_mm, double x_mm, double y_mm, double dir_x, double dir_y, double dir_z,
              double amplitude);
};

PsfRayData ray_data_from_bundle(const TracedBundle<double>& bundle);

/// Coherent plane-wave summation kernels. The serial variant is the
/// reference; the parallel one splits over grid rows with per-point sums in
/// fixed ray order, so both produce identical bits.
void coherent_forward_serial(const PsfRayData& rays, const PsfGridSpec& spec, double k,
                             std::complex<double>* amplitude_out);
void coherent_forward_parallel(const PsfRayData& rays, const PsfGridSpec& spec, double k,
                               std::complex<double>* amplitude_out);

PsfChannel coherent_sum_channel(const PsfRayData& rays, const PsfGridSpec& spec,
                                double wavelength_nm, bool parallel = true);

/// Per-ray taped inputs of the coherent PSF node.
struct TapedPsfInputs {
    std::vector<Real> opl, x, y, dx, dy, dz, amp;
    Real center_x{0.0};
    Real center_y{0.0};

    std::size_t count() const { return opl.size(); }
};

TapedPsfInputs taped_inputs_from_bundle(const TracedBundle<Real>& bundle, Real center_x,
                                        Real center_y);

struct TapedPsf {
    Tape::CustomHandle handle;
    std::vector<Real> intensity; // unnormalized PSF values, row-major
    std::vector<std::complex<double>> amplitude;
    std::size_t node_saved_bytes = 0;
    std::size_t ray_count = 0;
};

/// Registers the whole ray->grid summation as ONE custom node. Saved state is
/// O(N + M): input variable indices, the accumulated amplitude, and the grid
/// geometry. The N x M phase table is recomputed streamwise in backward.
TapedPsf coherent_sum_taped(Tape& tape, const TapedPsfInputs& inputs, const PsfGridSpec& spec,
                            double wavelength_nm, bool parallel = true,
                            bool serial_backward = false);

/// Unit-sum normalization on the tape (fixed summation order).
std::vector<Real> normalize_unit_sum(const std::vector<Real>& values);

struct PsfRenderOptions {
    int pupil_grid_n = 129;
    int grid_side = 63;
    double pitch_mm = 0.6e-3;
    bool parallel = true;
    TraceOptions trace;
};

/// Three design wavelengths, all channels centered on the reference-
/// wavelength chief-ray image point, each channel normalized to unit sum.
PSFGrid psf_three_channel(const LensSystem& system, const TracePlan& plan, const FieldPlan& fplan,
                          const PsfRenderOptions& opt = {});

struct TapedPsfChannels {
    PsfGridSpec spec;
    std::vector<double> wavelengths_nm;
    std::vector<std::vector<Real>> channels; // unit-sum normalized intensities
};

TapedPsfChannels psf_three_channel_taped(Tape& tape, const SystemView<Real>& view,
                                         const TracePlan& plan, const FieldPlan& fplan,
                                         const PsfRenderOptions& opt = {});

} // namespace difflens
