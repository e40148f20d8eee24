#include "difflens/system.hpp"

namespace difflens {

void LensSystem::validate() const {
    if (surfaces.empty()) throw Error("lens system has no surfaces");
    int stops = 0;
    for (int j = 0; j < surface_count(); ++j) {
        const Surface& s = surfaces[static_cast<std::size_t>(j)];
        if (s.is_stop) ++stops;
        if (s.semi_aperture <= 0.0)
            throw Error("surface " + std::to_string(j + 1) + ": semi-aperture must be positive");
        if (s.kind == Surface::Kind::StandardConic && s.has_aspheric_terms())
            throw Error("surface " + std::to_string(j + 1) +
                        ": standard surface carries aspheric coefficients");
        double r2 = s.semi_aperture * s.semi_aperture;
        if (1.0 - (1.0 + s.conic) * s.curvature * s.curvature * r2 <= 0.0)
            throw Error("surface " + std::to_string(j + 1) +
                        ": sag is not real over the full aperture");
    }
    if (stops != 1)
        throw Error("lens system must carry exactly one stop surface, found " +
                    std::to_string(stops));
    for (double w : wavelengths_nm)
        for (int j = 0; j < surface_count(); ++j) (void)index_after(j, w);
    bool ref_listed = false;
    for (double w : wavelengths_nm) ref_listed |= w == reference_wavelength_nm;
    if (!ref_listed) throw Error("reference wavelength is not one of the design wavelengths");
}

std::string param_kind_name(ParamKind kind) {
    switch (kind) {
    case ParamKind::Curvature: return "c";
    case ParamKind::Thickness: return "d";
    case ParamKind::Conic: return "k";
    case ParamKind::Asphere: return "a";
    }
    return "?";
}

ParamVector ParamVector::from_system(const LensSystem& system) {
    ParamVector p;
    for (int j = 0; j < system.surface_count(); ++j) {
        const Surface& s = system.surfaces[static_cast<std::size_t>(j)];
        p.entries.push_back({{j, ParamKind::Curvature, 0}, s.curvature, false});
        p.entries.push_back({{j, ParamKind::Thickness, 0}, s.thickness, false});
        p.entries.push_back({{j, ParamKind::Conic, 0}, s.conic, false});
        for (int i = 1; i <= 8; ++i)
            p.entries.push_back({{j, ParamKind::Asphere, i}, s.aspheric[static_cast<std::size_t>(i - 1)], false});
    }
    return p;
}

void ParamVector::apply_to(LensSystem& system) const {
    for (const ParamEntry& e : entries) {
        Surface& s = system.surfaces[static_cast<std::size_t>(e.ref.surface)];
        switch (e.ref.kind) {
        case ParamKind::Curvature: s.curvature = e.value; break;
        case ParamKind::Thickness: s.thickness = e.value; break;
        case ParamKind::Conic: s.conic = e.value; break;
        case ParamKind::Asphere:
            s.aspheric[static_cast<std::size_t>(e.ref.asphere_index - 1)] = e.value;
            break;
        }
    }
}

std::vector<std::size_t> ParamVector::trainable_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].trainable) out.push_back(i);
    return out;
}

std::string ParamVector::label(std::size_t i) const {
    const ParamEntry& e = entries[i];
    std::string s = "s" + std::to_string(e.ref.surface + 1) + "." + param_kind_name(e.ref.kind);
    if (e.ref.kind == ParamKind::Asphere) s += std::to_string(e.ref.asphere_index);
    return s;
}

TapedSystem taped_view(const LensSystem& system, const ParamVector& params, Tape& tape) {
    TapedSystem ts;
    ts.view.base = &system;
    ts.view.shapes.resize(system.surfaces.size());

    // Start every shape from the frozen values, then overwrite trainables
    // with leaves.
    std::vector<Real> thickness(system.surfaces.size());
    for (std::size_t j = 0; j < system.surfaces.size(); ++j) {
        const Surface& s = system.surfaces[j];
        SurfaceShape<Real>& sh = ts.view.shapes[j];
        sh.curvature = Real(s.curvature);
        sh.conic = Real(s.conic);
        for (int i = 0; i < 8; ++i) sh.aspheric[static_cast<std::size_t>(i)] = Real(s.aspheric[static_cast<std::size_t>(i)]);
        sh.semi_aperture = s.semi_aperture;
        sh.any_aspheric = s.has_aspheric_terms();
        thickness[j] = Real(s.thickness);
    }
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        const ParamEntry& e = params.entries[i];
        if (!e.trainable) continue;
        Real leaf = tape.leaf(e.value);
        ts.leaves.push_back(leaf);
        ts.leaf_param.push_back(i);
        auto j = static_cast<std::size_t>(e.ref.surface);
        switch (e.ref.kind) {
        case ParamKind::Curvature: ts.view.shapes[j].curvature = leaf; break;
        case ParamKind::Thickness: thickness[j] = leaf; break;
        case ParamKind::Conic: ts.view.shapes[j].conic = leaf; break;
        case ParamKind::Asphere:
            ts.view.shapes[j].aspheric[static_cast<std::size_t>(e.ref.asphere_index - 1)] = leaf;
            // gradient must flow through a trainable coefficient even at 0
            ts.view.shapes[j].any_aspheric = true;
            break;
        }
    }
    Real z(0.0);
    for (std::size_t j = 0; j < system.surfaces.size(); ++j) {
        ts.view.shapes[j].z_vertex = z;
        z += thickness[j];
    }
    ts.view.image_z = z;
    return ts;
}

Gradient collect_gradient(const Tape& tape, const TapedSystem& ts) {
    Gradient g;
    g.values.reserve(ts.leaves.size());
    for (const Real& leaf : ts.leaves) {
        double a = tape.adjoint(leaf);
        g.values.push_back(a);
        if (a != 0.0) g.all_zero = false;
    }
    return g;
}

} // namespace difflens
