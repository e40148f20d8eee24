#pragma once

#include <functional>
#include <vector>

#include "difflens/coherent_psf.hpp"

namespace difflens {

/// 3-channel intensity image in [0,1], row-major, channel-interleaved.
struct SceneImage {
    int width = 0;
    int height = 0;
    double pitch_um = 1.2;
    std::vector<double> data; // size = width*height*3

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + static_cast<std::size_t>(c)];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + static_cast<std::size_t>(c)];
    }
    void clip();
};

/// Provider of the three-channel PSF for a block center given in sensor
/// coordinates (mm from the sensor center).
using PsfProvider = std::function<PSFGrid(double x_mm, double y_mm)>;

struct DegradeOptions {
    int block_rows = 15;
    int block_cols = 20;
    double noise_sigma = 0.03;
    uint64_t seed = 0;
    bool parallel = true;
};

/// Block-wise spatially varying degradation: per block, convolve with the
/// block-center PSF (box-binned from the PSF grid pitch to the sensor pitch),
/// add white Gaussian noise, clip to [0,1]. Reflect padding per block.
SceneImage degrade(const SceneImage& scene, const PsfProvider& provider,
                   const DegradeOptions& opt = {});

/// 2x2 box binning of a PSF channel onto the sensor pitch, center-preserving,
/// renormalized to unit sum. Returns an odd-sized square kernel.
std::vector<double> bin_psf_to_sensor(const std::vector<double>& intensity, int side,
                                      int* kernel_side);

struct MTFCurve {
    enum class Direction { Sagittal, Tangential };
    std::vector<double> frequency_cyc_per_mm;
    std::vector<double> modulation;
    Direction direction = Direction::Sagittal;
    double wavelength_nm = 0.0;
};

/// Axis cuts of the PSF's 2-D discrete Fourier transform through DC,
/// normalized so MTF(0) = 1. Sagittal = x frequencies, tangential = y.
std::pair<MTFCurve, MTFCurve> mtf_from_psf(const PSFGrid& grid, int channel);

/// Analytic diffraction-limited MTF of a circular pupil at relative
/// frequency nu (0..1 of cutoff).
inline double diffraction_limited_mtf(double nu) {
    if (nu >= 1.0) return 0.0;
    return 2.0 / M_PI * (std::acos(nu) - nu * std::sqrt(1.0 - nu * nu));
}

} // namespace difflens
