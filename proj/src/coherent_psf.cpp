#include "difflens/coherent_psf.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace difflens {

void PsfRayData::reserve(std::size_t n) {
    opl.reserve(n);
    x.reserve(n);
    y.reserve(n);
    dx.reserve(n);
    dy.reserve(n);
    dz.reserve(n);
    amp.reserve(n);
}

void PsfRayData::push(double opl_mm, double x_mm, double y_mm, double dir_x, double dir_y,
                      double dir_z, double amplitude) {
    opl.push_back(opl_mm);
    x.push_back(x_mm);
    y.push_back(y_mm);
    dx.push_back(dir_x);
    dy.push_back(dir_y);
    dz.push_back(dir_z);
    amp.push_back(amplitude);
}

PsfRayData ray_data_from_bundle(const TracedBundle<double>& bundle) {
    PsfRayData d;
    d.reserve(bundle.rays.size());
    for (const TracedRay<double>& r : bundle.rays) {
        if (!r.valid) continue;
        d.push(r.opl, r.position.x, r.position.y, r.direction.x, r.direction.y, r.direction.z,
               r.amplitude);
    }
    return d;
}

namespace {

// phi(i, g) = k*opl_i + k*dx_i*(gx - x_i) + k*dy_i*(gy - y_i), refactored as
// base_i + kdx_i*gx + kdy_i*gy. Forward and backward share this exact form.
struct PhaseTerms {
    std::vector<double> base, kdx, kdy;
};

PhaseTerms phase_terms(const double* opl, const double* x, const double* y, const double* dx,
                       const double* dy, std::size_t n, double k) {
    PhaseTerms t;
    t.base.resize(n);
    t.kdx.resize(n);
    t.kdy.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.kdx[i] = k * dx[i];
        t.kdy[i] = k * dy[i];
        t.base[i] = k * opl[i] - (t.kdx[i] * x[i] + t.kdy[i] * y[i]);
    }
    return t;
}

inline std::complex<double> sum_point(const PhaseTerms& t, const double* dz, const double* amp,
                                      std::size_t n, double gx, double gy) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double phi = t.base[i] + t.kdx[i] * gx + t.kdy[i] * gy;
        double w = amp[i] * dz[i]; // obliquity <n, D> with the image normal +z
        re += w * std::cos(phi);
        im += w * std::sin(phi);
    }
    return {re, im};
}

void forward_rows(const PsfRayData& rays, const PsfGridSpec& spec, double k,
                  std::complex<double>* out, bool parallel) {
    PhaseTerms t = phase_terms(rays.opl.data(), rays.x.data(), rays.y.data(), rays.dx.data(),
                               rays.dy.data(), rays.count(), k);
    const std::size_t n = rays.count();
    const int side = spec.side;
#pragma omp parallel for schedule(static) if (parallel)
    for (int row = 0; row < side; ++row) {
        double gy = spec.coord_y(row);
        for (int col = 0; col < side; ++col) {
            double gx = spec.coord_x(col);
            out[static_cast<std::size_t>(row) * side + col] =
                sum_point(t, rays.dz.data(), rays.amp.data(), n, gx, gy);
        }
    }
}

} // namespace

void coherent_forward_serial(const PsfRayData& rays, const PsfGridSpec& spec, double k,
                             std::complex<double>* out) {
    forward_rows(rays, spec, k, out, false);
}

void coherent_forward_parallel(const PsfRayData& rays, const PsfGridSpec& spec, double k,
                               std::complex<double>* out) {
    forward_rows(rays, spec, k, out, true);
}

PsfChannel coherent_sum_channel(const PsfRayData& rays, const PsfGridSpec& spec,
                                double wavelength_nm, bool parallel) {
    if (rays.count() == 0)
        throw TraceError("extinct channel: no valid rays for wavelength " +
                         std::to_string(wavelength_nm) + " nm");
    PsfChannel ch;
    ch.wavelength_nm = wavelength_nm;
    ch.amplitude.resize(static_cast<std::size_t>(spec.cells()));
    double k = wave_number(wavelength_nm);
    if (parallel)
        coherent_forward_parallel(rays, spec, k, ch.amplitude.data());
    else
        coherent_forward_serial(rays, spec, k, ch.amplitude.data());
    ch.intensity.resize(ch.amplitude.size());
    for (std::size_t g = 0; g < ch.amplitude.size(); ++g) {
        double re = ch.amplitude[g].real(), im = ch.amplitude[g].imag();
        ch.intensity[g] = re * re + im * im;
    }
    return ch;
}

TapedPsfInputs taped_inputs_from_bundle(const TracedBundle<Real>& bundle, Real center_x,
                                        Real center_y) {
    TapedPsfInputs in;
    in.center_x = center_x;
    in.center_y = center_y;
    for (const TracedRay<Real>& r : bundle.rays) {
        if (!r.valid) continue;
        in.opl.push_back(r.opl);
        in.x.push_back(r.position.x);
        in.y.push_back(r.position.y);
        in.dx.push_back(r.direction.x);
        in.dy.push_back(r.direction.y);
        in.dz.push_back(r.direction.z);
        in.amp.push_back(Real(r.amplitude));
    }
    return in;
}

namespace {

/// The coherent PSF differential operator. Keeps per-ray input indices, the
/// accumulated amplitude, and the grid geometry; never an N x M buffer. The
/// backward pass recomputes the phases ray by ray, accumulating all seven
/// per-ray cotangents plus the grid-center cotangent in one stream.
class CoherentPsfNode final : public CustomOp {
public:
    static constexpr int kSlots = 7; // opl x y dx dy dz amp

    CoherentPsfNode(Tape& tape, const TapedPsfInputs& in, const PsfGridSpec& spec, double k,
                    bool serial_backward)
        : spec_(spec), k_(k), serial_backward_(serial_backward) {
        n_ = in.count();
        idx_.resize(kSlots * n_);
        const std::vector<Real>* slots[kSlots] = {&in.opl, &in.x,  &in.y, &in.dx,
                                                  &in.dy,  &in.dz, &in.amp};
        bool any_const = false;
        for (int s = 0; s < kSlots; ++s)
            for (std::size_t i = 0; i < n_; ++i) {
                const Real& r = (*slots[s])[i];
                idx_[static_cast<std::size_t>(s) * n_ + i] = r.taped() ? r.idx : -1;
                any_const |= !r.taped();
            }
        if (any_const) {
            const_vals_.resize(kSlots * n_);
            for (int s = 0; s < kSlots; ++s)
                for (std::size_t i = 0; i < n_; ++i)
                    const_vals_[static_cast<std::size_t>(s) * n_ + i] = value_of((*slots[s])[i]);
        }
        cx_idx_ = in.center_x.taped() ? in.center_x.idx : -1;
        cy_idx_ = in.center_y.taped() ? in.center_y.idx : -1;
        cx_ = value_of(in.center_x);
        cy_ = value_of(in.center_y);
        amplitude_.resize(static_cast<std::size_t>(spec.cells()));
        (void)tape;
    }

    void set_out_begin(int32_t b) { out_begin_ = b; }
    std::vector<std::complex<double>>& amplitude() { return amplitude_; }

    double input(const Tape& tape, int slot, std::size_t i) const {
        int32_t id = idx_[static_cast<std::size_t>(slot) * n_ + i];
        if (id >= 0) return tape.value_at(id);
        return const_vals_[static_cast<std::size_t>(slot) * n_ + i];
    }

    void forward(Tape& tape, std::vector<double>* intensity, bool parallel) {
        PsfRayData rays;
        rays.reserve(n_);
        for (std::size_t i = 0; i < n_; ++i)
            rays.push(input(tape, 0, i), input(tape, 1, i), input(tape, 2, i), input(tape, 3, i),
                      input(tape, 4, i), input(tape, 5, i), input(tape, 6, i));
        PsfGridSpec spec = spec_;
        spec.center_x = cx_;
        spec.center_y = cy_;
        if (parallel)
            coherent_forward_parallel(rays, spec, k_, amplitude_.data());
        else
            coherent_forward_serial(rays, spec, k_, amplitude_.data());
        intensity->resize(amplitude_.size());
        for (std::size_t g = 0; g < amplitude_.size(); ++g) {
            double re = amplitude_[g].real(), im = amplitude_[g].imag();
            (*intensity)[g] = re * re + im * im;
        }
    }

    void backward(Tape& tape) override {
        const int side = spec_.side;
        const std::size_t m = amplitude_.size();
        // per-ray cotangent rows; the center cotangent is folded in afterwards
        std::vector<double> grad(kSlots * n_, 0.0);

        auto ray_pass = [&](std::size_t i) {
            double opl = input(tape, 0, i), x = input(tape, 1, i), y = input(tape, 2, i);
            double dx = input(tape, 3, i), dy = input(tape, 4, i), dz = input(tape, 5, i);
            double amp = input(tape, 6, i);
            double kdx = k_ * dx, kdy = k_ * dy;
            double base = k_ * opl - (kdx * x + kdy * y);
            double g_phi_sum = 0.0, g_amp = 0.0, g_dz = 0.0, g_dx = 0.0, g_dy = 0.0;
            for (std::size_t g = 0; g < m; ++g) {
                double w = tape.adjoint_at(out_begin_ + static_cast<int32_t>(g));
                if (w == 0.0) continue;
                int row = static_cast<int>(g) / side;
                int col = static_cast<int>(g) % side;
                double gx = cx_ + spec_.offset(col);
                double gy = cy_ + spec_.offset(row);
                double phi = base + kdx * gx + kdy * gy;
                double c = std::cos(phi), s = std::sin(phi);
                double re = amplitude_[g].real(), im = amplitude_[g].imag();
                // dPSF/dphi = 2 a obq (Im A cos - Re A sin); dPSF/d(a obq) parts
                double t_phase = 2.0 * amp * dz * (im * c - re * s) * w;
                double t_amp = 2.0 * (re * c + im * s) * w;
                g_phi_sum += t_phase;
                g_amp += dz * t_amp;
                g_dz += amp * t_amp;
                g_dx += k_ * (gx - x) * t_phase;
                g_dy += k_ * (gy - y) * t_phase;
            }
            grad[0 * n_ + i] = k_ * g_phi_sum;   // opl
            grad[1 * n_ + i] = -kdx * g_phi_sum; // x
            grad[2 * n_ + i] = -kdy * g_phi_sum; // y
            grad[3 * n_ + i] = g_dx;
            grad[4 * n_ + i] = g_dy;
            grad[5 * n_ + i] = g_dz;
            grad[6 * n_ + i] = g_amp;
        };

        if (serial_backward_) {
            for (std::size_t i = 0; i < n_; ++i) ray_pass(i);
        } else {
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(n_); ++i)
                ray_pass(static_cast<std::size_t>(i));
        }

        for (int s = 0; s < kSlots; ++s)
            for (std::size_t i = 0; i < n_; ++i) {
                int32_t id = idx_[static_cast<std::size_t>(s) * n_ + i];
                if (id >= 0) tape.accumulate_adjoint(id, grad[static_cast<std::size_t>(s) * n_ + i]);
            }
        // d phi/d center = +k d, i.e. minus the position cotangent, reduced
        // in fixed ray order
        if (cx_idx_ >= 0 || cy_idx_ >= 0) {
            double gcx = 0.0, gcy = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                gcx -= grad[1 * n_ + i];
                gcy -= grad[2 * n_ + i];
            }
            if (cx_idx_ >= 0) tape.accumulate_adjoint(cx_idx_, gcx);
            if (cy_idx_ >= 0) tape.accumulate_adjoint(cy_idx_, gcy);
        }
    }

    std::size_t saved_bytes() const override {
        return idx_.capacity() * sizeof(int32_t) + const_vals_.capacity() * sizeof(double) +
               amplitude_.capacity() * sizeof(std::complex<double>) + sizeof(*this);
    }

    const char* name() const override { return "coherent_psf"; }

private:
    PsfGridSpec spec_;
    double k_;
    bool serial_backward_;
    std::size_t n_ = 0;
    std::vector<int32_t> idx_;
    std::vector<double> const_vals_;
    double cx_ = 0.0, cy_ = 0.0;
    int32_t cx_idx_ = -1, cy_idx_ = -1;
    std::vector<std::complex<double>> amplitude_;
    int32_t out_begin_ = -1;
};

} // namespace

TapedPsf coherent_sum_taped(Tape& tape, const TapedPsfInputs& inputs, const PsfGridSpec& spec,
                            double wavelength_nm, bool parallel, bool serial_backward) {
    if (inputs.count() == 0)
        throw TraceError("extinct channel: no valid rays for wavelength " +
                         std::to_string(wavelength_nm) + " nm");
    double k = wave_number(wavelength_nm);
    auto node = std::make_unique<CoherentPsfNode>(tape, inputs, spec, k, serial_backward);
    CoherentPsfNode* raw = node.get();
    std::vector<double> intensity;
    raw->forward(tape, &intensity, parallel);
    raw->set_out_begin(static_cast<int32_t>(tape.size()) + 1);

    TapedPsf out;
    out.ray_count = inputs.count();
    out.amplitude = raw->amplitude();
    out.handle = tape.add_custom(std::move(node), intensity);
    out.node_saved_bytes = tape.custom_saved_bytes(out.handle);
    out.intensity.reserve(intensity.size());
    for (std::size_t g = 0; g < intensity.size(); ++g)
        out.intensity.push_back(tape.output(out.handle, static_cast<int32_t>(g)));
    return out;
}

std::vector<Real> normalize_unit_sum(const std::vector<Real>& values) {
    Real total(0.0);
    for (const Real& v : values) total += v;
    std::vector<Real> out;
    out.reserve(values.size());
    for (const Real& v : values) out.push_back(v / total);
    return out;
}

PSFGrid psf_three_channel(const LensSystem& system, const TracePlan& plan, const FieldPlan& fplan,
                          const PsfRenderOptions& opt) {
    SystemView<double> view = view_of(system);
    TracedRay<double> chief = chief_ray(view, plan, fplan, system.reference_wavelength_nm, opt.trace);

    PSFGrid grid;
    grid.spec.center_x = chief.position.x;
    grid.spec.center_y = chief.position.y;
    grid.spec.pitch_mm = opt.pitch_mm;
    grid.spec.side = opt.grid_side;
    grid.norm = PSFGrid::Norm::UnitSum;

    for (double wl : system.wavelengths_nm) {
        TracedBundle<double> bundle = trace_bundle(view, plan, fplan, wl, opt.trace);
        PsfRayData rays = ray_data_from_bundle(bundle);
        PsfChannel ch = coherent_sum_channel(rays, grid.spec, wl, opt.parallel);
        double total = 0.0;
        for (double v : ch.intensity) total += v;
        if (total > 0.0)
            for (double& v : ch.intensity) v /= total;
        grid.channels.push_back(std::move(ch));
    }
    return grid;
}

TapedPsfChannels psf_three_channel_taped(Tape& tape, const SystemView<Real>& view,
                                         const TracePlan& plan, const FieldPlan& fplan,
                                         const PsfRenderOptions& opt) {
    const LensSystem& system = *view.base;
    TracedRay<Real> chief = chief_ray(view, plan, fplan, system.reference_wavelength_nm, opt.trace);

    TapedPsfChannels out;
    out.spec.center_x = value_of(chief.position.x);
    out.spec.center_y = value_of(chief.position.y);
    out.spec.pitch_mm = opt.pitch_mm;
    out.spec.side = opt.grid_side;

    for (double wl : system.wavelengths_nm) {
        TracedBundle<Real> bundle = trace_bundle(view, plan, fplan, wl, opt.trace);
        TapedPsfInputs in = taped_inputs_from_bundle(bundle, chief.position.x, chief.position.y);
        TapedPsf psf = coherent_sum_taped(tape, in, out.spec, wl, opt.parallel);
        out.wavelengths_nm.push_back(wl);
        out.channels.push_back(normalize_unit_sum(psf.intensity));
    }
    return out;
}

} // namespace difflens
