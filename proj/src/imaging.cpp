#include "difflens/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace difflens {

void SceneImage::clip() {
    for (double& v : data) v = std::clamp(v, 0.0, 1.0);
}

std::vector<double> bin_psf_to_sensor(const std::vector<double>& intensity, int side,
                                      int* kernel_side) {
    // pairs (2i, 2i+1); the PSF center pixel (side-1)/2 falls in bin
    // (side-1)/4 rounded down via ks below, which keeps a centered delta a
    // centered delta
    int ks = side / 2;
    if (ks % 2 == 0) ks -= 1; // odd kernel so the convolution has a center
    int offset = (side - 2 * ks) / 2;
    std::vector<double> kernel(static_cast<std::size_t>(ks) * ks, 0.0);
    double total = 0.0;
    for (int r = 0; r < ks; ++r)
        for (int c = 0; c < ks; ++c) {
            double s = 0.0;
            for (int dr = 0; dr < 2; ++dr)
                for (int dc = 0; dc < 2; ++dc) {
                    int rr = offset + 2 * r + dr;
                    int cc = offset + 2 * c + dc;
                    if (rr < 0 || rr >= side || cc < 0 || cc >= side) continue;
                    s += intensity[static_cast<std::size_t>(rr) * side + cc];
                }
            kernel[static_cast<std::size_t>(r) * ks + c] = s;
            total += s;
        }
    if (total > 0.0)
        for (double& v : kernel) v /= total;
    *kernel_side = ks;
    return kernel;
}

namespace {

inline int reflect_index(int i, int n) {
    // reflect without repeating the edge sample: -1 -> 1, n -> n-2
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

// Standardized mt19937_64 bits + explicit Box-Muller keep the noise stream
// byte-reproducible across platforms.
struct GaussStream {
    std::mt19937_64 rng;
    bool have = false;
    double spare = 0.0;

    explicit GaussStream(uint64_t seed) : rng(seed) {}

    double uniform() {
        return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }
    double gauss() {
        if (have) {
            have = false;
            return spare;
        }
        double u1 = uniform(), u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare = r * std::sin(a);
        have = true;
        return r * std::cos(a);
    }
};

} // namespace

SceneImage degrade(const SceneImage& scene, const PsfProvider& provider,
                   const DegradeOptions& opt) {
    if (scene.width % opt.block_cols != 0 || scene.height % opt.block_rows != 0)
        throw Error("scene dimensions " + std::to_string(scene.width) + "x" +
                    std::to_string(scene.height) + " are not divisible into " +
                    std::to_string(opt.block_rows) + "x" + std::to_string(opt.block_cols) +
                    " blocks");
    const int bw = scene.width / opt.block_cols;
    const int bh = scene.height / opt.block_rows;
    const double pitch_mm = scene.pitch_um * 1e-3;

    SceneImage out = scene;

    const int blocks = opt.block_rows * opt.block_cols;
#pragma omp parallel for schedule(dynamic) if (opt.parallel)
    for (int b = 0; b < blocks; ++b) {
        int br = b / opt.block_cols;
        int bc = b % opt.block_cols;
        int x0 = bc * bw, y0 = br * bh;

        // block center in sensor coordinates (mm from the image center)
        double cx_mm = (x0 + 0.5 * bw - 0.5 * scene.width) * pitch_mm;
        double cy_mm = (y0 + 0.5 * bh - 0.5 * scene.height) * pitch_mm;
        PSFGrid psf = provider(cx_mm, cy_mm);

        GaussStream noise(opt.seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(b) + 1);

        for (int c = 0; c < 3; ++c) {
            int ch = std::min<int>(c, static_cast<int>(psf.channels.size()) - 1);
            int ks = 0;
            std::vector<double> kernel =
                bin_psf_to_sensor(psf.channels[static_cast<std::size_t>(ch)].intensity, psf.spec.side, &ks);
            int half = ks / 2;
            for (int y = 0; y < bh; ++y) {
                for (int x = 0; x < bw; ++x) {
                    double acc = 0.0;
                    for (int ky = 0; ky < ks; ++ky) {
                        int sy = reflect_index(y + ky - half, bh);
                        for (int kx = 0; kx < ks; ++kx) {
                            int sx = reflect_index(x + kx - half, bw);
                            acc += kernel[static_cast<std::size_t>(ky) * ks + kx] *
                                   scene.at(x0 + sx, y0 + sy, c);
                        }
                    }
                    out.at(x0 + x, y0 + y, c) = acc;
                }
            }
        }
        if (opt.noise_sigma > 0.0) {
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < bh; ++y)
                    for (int x = 0; x < bw; ++x)
                        out.at(x0 + x, y0 + y, c) += opt.noise_sigma * noise.gauss();
        }
    }
    out.clip();
    return out;
}

std::pair<MTFCurve, MTFCurve> mtf_from_psf(const PSFGrid& grid, int channel) {
    const PsfChannel& ch = grid.channels[static_cast<std::size_t>(channel)];
    const int n = grid.spec.side;
    double total = 0.0;
    for (double v : ch.intensity) {
        if (v < 0.0) throw Error("PSF intensity must be non-negative");
        total += v;
    }
    if (total <= 0.0) throw Error("PSF is identically zero");

    // projection-slice: the axis cuts of the 2-D DFT are the 1-D DFTs of the
    // row/column sums
    std::vector<double> sum_x(static_cast<std::size_t>(n), 0.0); // over y -> function of x
    std::vector<double> sum_y(static_cast<std::size_t>(n), 0.0); // over x -> function of y
    for (int row = 0; row < n; ++row)
        for (int col = 0; col < n; ++col) {
            double v = ch.intensity[static_cast<std::size_t>(row) * n + col];
            sum_x[static_cast<std::size_t>(col)] += v;
            sum_y[static_cast<std::size_t>(row)] += v;
        }

    auto cut = [&](const std::vector<double>& proj, MTFCurve::Direction dir) {
        MTFCurve curve;
        curve.direction = dir;
        curve.wavelength_nm = ch.wavelength_nm;
        int half = n / 2;
        for (int j = 0; j <= half; ++j) {
            double re = 0.0, im = 0.0;
            for (int i = 0; i < n; ++i) {
                double a = -2.0 * M_PI * j * i / n;
                re += proj[static_cast<std::size_t>(i)] * std::cos(a);
                im += proj[static_cast<std::size_t>(i)] * std::sin(a);
            }
            double mag = std::hypot(re, im);
            curve.frequency_cyc_per_mm.push_back(j / (n * grid.spec.pitch_mm));
            curve.modulation.push_back(j == 0 ? 1.0 : mag / total);
        }
        return curve;
    };
    return {cut(sum_x, MTFCurve::Direction::Sagittal), cut(sum_y, MTFCurve::Direction::Tangential)};
}

} // namespace difflens
