#include "difflens/losses.hpp"

#include <algorithm>
#include <cmath>

namespace difflens {

double min_surface_gap(const LensSystem& system, int samples) {
    SystemView<double> view = view_of(system);
    double worst = std::numeric_limits<double>::infinity();
    int s_count = system.surface_count();
    for (int j = 0; j < s_count; ++j) {
        const SurfaceShape<double>& a = view.shapes[static_cast<std::size_t>(j)];
        const bool to_image = j + 1 == s_count;
        double r_max = a.semi_aperture;
        if (!to_image)
            r_max = std::min(r_max, view.shapes[static_cast<std::size_t>(j + 1)].semi_aperture);
        for (int i = 1; i <= samples; ++i) {
            double r = r_max * static_cast<double>(i) / samples;
            double za = a.z_vertex + sag_at_r2(a, r * r);
            double zb = to_image ? view.image_z
                                 : view.shapes[static_cast<std::size_t>(j + 1)].z_vertex +
                                       sag_at_r2(view.shapes[static_cast<std::size_t>(j + 1)], r * r);
            worst = std::min(worst, zb - za);
        }
    }
    return worst;
}

OpticalLossEvaluator::OpticalLossEvaluator(const LensSystem& system, const DesignSpec& spec,
                                           LossOptions opt)
    : spec_(spec), opt_(std::move(opt)) {
    double hfov = spec_.half_fov_deg();
    double tan_max = std::tan(hfov * M_PI / 180.0);
    for (int i = 0; i < opt_.field_count; ++i) {
        double t = tan_max * static_cast<double>(i) / (opt_.field_count - 1);
        fields_.push_back({std::atan(t) * 180.0 / M_PI, 0.0});
    }
    std::vector<FieldSpec> plan_fields = fields_;
    plan_fields.push_back({opt_.v_small_rad * 180.0 / M_PI, 0.0}); // DFFL probe
    dffl_index_ = static_cast<int>(plan_fields.size()) - 1;
    plan_ = build_trace_plan(system, plan_fields, opt_.spot_grid_n, opt_.plan);
}

template <class T>
LossTerms<T> OpticalLossEvaluator::eval_impl(const SystemView<T>& view) const {
    using std::sqrt;
    const LensSystem& sys = *view.base;
    LossTerms<T> out;

    // total track: max(sum of thicknesses, budget)
    out.ttl = branch_max(view.image_z, T(spec_.ttl_max_mm));

    out.effl_value = paraxial_effl_view(view, sys.reference_wavelength_nm);
    out.effl = abs_val(out.effl_value - T(spec_.effl_target()));

    // surface gap: -sum min(dz, eps) over aperture-sampled adjacent pairs,
    // last surface against the image plane
    T gap_acc(0.0);
    int s_count = sys.surface_count();
    for (int j = 0; j < s_count; ++j) {
        const SurfaceShape<T>& a = view.shapes[static_cast<std::size_t>(j)];
        const bool to_image = j + 1 == s_count;
        double r_max = a.semi_aperture;
        if (!to_image)
            r_max = std::min(r_max, view.shapes[static_cast<std::size_t>(j + 1)].semi_aperture);
        for (int i = 1; i <= opt_.gap_samples; ++i) {
            double r = r_max * static_cast<double>(i) / opt_.gap_samples;
            T r2(r * r);
            T za = a.z_vertex + sag_at_r2(a, r2);
            T zb = to_image ? view.image_z
                            : view.shapes[static_cast<std::size_t>(j + 1)].z_vertex +
                                  sag_at_r2(view.shapes[static_cast<std::size_t>(j + 1)], r2);
            gap_acc += branch_min(zb - za, T(spec_.gap_epsilon_mm));
        }
    }
    out.gap = -gap_acc;

    // spot RMS pooled over wavelengths and pupil, averaged over the field set
    T spot_acc(0.0);
    std::vector<T> chief_r(fields_.size());
    for (std::size_t f = 0; f < fields_.size(); ++f) {
        const FieldPlan& fp = plan_.fields[f];
        TracedRay<T> chief = chief_ray(view, plan_, fp, sys.reference_wavelength_nm, opt_.trace);
        chief_r[f] = sqrt(chief.position.x * chief.position.x +
                          chief.position.y * chief.position.y);
        T sum(0.0);
        long count = 0;
        for (double wl : sys.wavelengths_nm) {
            TracedBundle<T> bundle = trace_bundle(view, plan_, fp, wl, opt_.trace);
            for (const TracedRay<T>& r : bundle.rays) {
                if (!r.valid) continue;
                T dx = r.position.x - chief.position.x;
                T dy = r.position.y - chief.position.y;
                sum += dx * dx + dy * dy;
                ++count;
            }
        }
        spot_acc += sqrt(sum / T(static_cast<double>(count)));
    }
    out.spot = spot_acc / T(static_cast<double>(fields_.size()));

    // distortion against the small-angle DFFL reference, maxed over the
    // nonzero fields
    TracedRay<T> small = chief_ray(view, plan_, plan_.fields[static_cast<std::size_t>(dffl_index_)],
                                   sys.reference_wavelength_nm, opt_.trace);
    T r_small = sqrt(small.position.x * small.position.x + small.position.y * small.position.y);
    T dffl = r_small / T(std::tan(opt_.v_small_rad));
    bool any = false;
    T worst(0.0);
    for (std::size_t f = 0; f < fields_.size(); ++f) {
        double v = fields_[f].angle_deg * M_PI / 180.0;
        if (v == 0.0) continue;
        T ideal = dffl * T(std::tan(v));
        T rel = abs_val((chief_r[f] - ideal) / ideal);
        worst = any ? branch_max(worst, rel) : rel;
        any = true;
    }
    out.dist = any ? branch_max(worst, T(spec_.dist_epsilon)) : T(spec_.dist_epsilon);

    LossWeights w;
    out.optic = out.spot + T(w.ttl) * out.ttl + T(w.effl) * out.effl + T(w.gap) * out.gap +
                T(w.dist) * out.dist;
    return out;
}

LossTerms<double> OpticalLossEvaluator::evaluate(const LensSystem& system) const {
    SystemView<double> view = view_of(system);
    return eval_impl(view);
}

LossTerms<Real> OpticalLossEvaluator::evaluate_taped(Tape& tape, const TapedSystem& taped) const {
    (void)tape;
    return eval_impl(taped.view);
}

OpticalLossReport OpticalLossEvaluator::report(const LensSystem& system,
                                               const ParamVector* params) const {
    OpticalLossReport rep;
    rep.effl_target = spec_.effl_target();
    if (!params) {
        rep.terms = evaluate(system);
        return rep;
    }
    Tape tape;
    TapedSystem ts = taped_view(system, *params, tape);
    LossTerms<Real> t = evaluate_taped(tape, ts);
    rep.terms = {value_of(t.spot), value_of(t.ttl),  value_of(t.effl),      value_of(t.gap),
                 value_of(t.dist), value_of(t.optic), value_of(t.effl_value)};
    auto grad_norm = [&](const Real& term) {
        tape.backward(term);
        double s = 0.0;
        for (const Real& leaf : ts.leaves) {
            double g = tape.adjoint(leaf);
            s += g * g;
        }
        return std::sqrt(s);
    };
    rep.grad_spot = grad_norm(t.spot);
    rep.grad_ttl = grad_norm(t.ttl);
    rep.grad_effl = grad_norm(t.effl);
    rep.grad_gap = grad_norm(t.gap);
    rep.grad_dist = grad_norm(t.dist);
    rep.has_gradients = true;
    return rep;
}

template LossTerms<double> OpticalLossEvaluator::eval_impl<double>(const SystemView<double>&) const;
template LossTerms<Real> OpticalLossEvaluator::eval_impl<Real>(const SystemView<Real>&) const;

} // namespace difflens
