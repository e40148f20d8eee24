#include "difflens/prescription.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace difflens {

namespace {

struct Line {
    int number = 0;
    std::string key;
    std::string value;
    bool is_section = false;
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<Line> tokenize(const std::string& text) {
    std::vector<Line> lines;
    std::istringstream in(text);
    std::string raw;
    int number = 0;
    while (std::getline(in, raw)) {
        ++number;
        std::string s = trim(raw);
        std::size_t hash = s.find('#');
        if (hash != std::string::npos) s = trim(s.substr(0, hash));
        if (s.empty()) continue;
        Line l;
        l.number = number;
        if (s.front() == '[') {
            if (s.back() != ']') throw ParseError(number, "unterminated section header");
            l.is_section = true;
            l.key = trim(s.substr(1, s.size() - 2));
        } else {
            std::size_t eq = s.find('=');
            if (eq == std::string::npos) throw ParseError(number, "expected key = value");
            l.key = trim(s.substr(0, eq));
            l.value = trim(s.substr(eq + 1));
            if (l.key.empty()) throw ParseError(number, "empty key");
        }
        lines.push_back(std::move(l));
    }
    return lines;
}

double parse_number(const Line& l, const std::string& token) {
    try {
        std::size_t used = 0;
        double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParseError(l.number, "cannot parse number '" + token + "' for key '" + l.key + "'");
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : value) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<double> parse_numbers(const Line& l) {
    std::vector<double> out;
    for (const std::string& tok : split_list(l.value)) out.push_back(parse_number(l, tok));
    return out;
}

bool parse_bool(const Line& l) {
    if (l.value == "true" || l.value == "1" || l.value == "yes") return true;
    if (l.value == "false" || l.value == "0" || l.value == "no") return false;
    throw ParseError(l.number, "expected true/false for key '" + l.key + "'");
}

DispersionModel parse_material(const Line& l) {
    std::vector<std::string> toks = split_list(l.value);
    if (toks.empty()) throw ParseError(l.number, "empty material");
    const std::string& kind = toks[0];
    auto need = [&](std::size_t n) {
        if (toks.size() != n + 1)
            throw ParseError(l.number, "material '" + kind + "' expects " + std::to_string(n) +
                                           " coefficients, got " + std::to_string(toks.size() - 1));
    };
    if (kind == "air") {
        need(0);
        return DispersionModel::air();
    }
    if (kind == "constant") {
        need(1);
        return DispersionModel::constant(parse_number(l, toks[1]));
    }
    if (kind == "sellmeier") {
        need(6);
        return DispersionModel::sellmeier(parse_number(l, toks[1]), parse_number(l, toks[2]),
                                          parse_number(l, toks[3]), parse_number(l, toks[4]),
                                          parse_number(l, toks[5]), parse_number(l, toks[6]));
    }
    if (kind == "schott") {
        need(6);
        std::array<double, 6> a{};
        for (int i = 0; i < 6; ++i) a[static_cast<std::size_t>(i)] = parse_number(l, toks[static_cast<std::size_t>(i + 1)]);
        return DispersionModel::schott(a);
    }
    throw ParseError(l.number, "unknown material kind '" + kind + "'");
}

std::string format_number(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

} // namespace

Prescription parse_prescription(const std::string& text) {
    std::vector<Line> lines = tokenize(text);
    Prescription pres;
    LensSystem& sys = pres.system;
    sys.wavelengths_nm.clear();
    sys.field_angles_deg.clear();

    struct SurfaceDecl {
        Surface surface;
        std::vector<std::string> trainable;
        int stop_line = -1;
        int line = 0;
    };
    std::vector<SurfaceDecl> decls;
    int system_stop_id = -1;

    enum class Section { None, System, Surface };
    Section section = Section::None;

    for (const Line& l : lines) {
        if (l.is_section) {
            if (l.key == "system") {
                if (section != Section::None)
                    throw ParseError(l.number, "[system] must be the first section");
                section = Section::System;
            } else if (l.key == "surface") {
                if (section == Section::None)
                    throw ParseError(l.number, "[system] must precede the surfaces");
                section = Section::Surface;
                decls.emplace_back();
                decls.back().line = l.number;
            } else {
                throw ParseError(l.number, "unknown section [" + l.key + "]");
            }
            continue;
        }
        if (section == Section::System) {
            if (l.key == "name") sys.name = l.value;
            else if (l.key == "wavelengths") sys.wavelengths_nm = parse_numbers(l);
            else if (l.key == "reference") sys.reference_wavelength_nm = parse_number(l, l.value);
            else if (l.key == "fields") sys.field_angles_deg = parse_numbers(l);
            else if (l.key == "max_field") sys.max_field_deg = parse_number(l, l.value);
            else if (l.key == "image_height") sys.image_height_mm = parse_number(l, l.value);
            else if (l.key == "sensor_pitch") sys.sensor_pitch_um = parse_number(l, l.value);
            else if (l.key == "stop") system_stop_id = static_cast<int>(parse_number(l, l.value));
            else if (l.key == "object") {
                if (l.value != "infinity")
                    throw ParseError(l.number, "only object = infinity is supported");
            } else throw ParseError(l.number, "unknown system key '" + l.key + "'");
        } else if (section == Section::Surface) {
            SurfaceDecl& d = decls.back();
            Surface& s = d.surface;
            if (l.key == "kind") {
                if (l.value == "standard") s.kind = Surface::Kind::StandardConic;
                else if (l.value == "even_asphere") s.kind = Surface::Kind::EvenAsphere;
                else throw ParseError(l.number, "unknown surface kind '" + l.value + "'");
            } else if (l.key == "c") s.curvature = parse_number(l, l.value);
            else if (l.key == "d") s.thickness = parse_number(l, l.value);
            else if (l.key == "k") s.conic = parse_number(l, l.value);
            else if (l.key.size() == 2 && l.key[0] == 'a' && l.key[1] >= '1' && l.key[1] <= '8')
                s.aspheric[static_cast<std::size_t>(l.key[1] - '1')] = parse_number(l, l.value);
            else if (l.key == "semi_aperture") s.semi_aperture = parse_number(l, l.value);
            else if (l.key == "material") s.material = parse_material(l);
            else if (l.key == "material_range") {
                std::vector<double> r = parse_numbers(l);
                if (r.size() != 2) throw ParseError(l.number, "material_range expects two numbers");
                DispersionModel m = s.material;
                switch (m.kind()) {
                case DispersionModel::Kind::Constant:
                    s.material = DispersionModel::constant(m.coefficients()[0], r[0], r[1]);
                    break;
                case DispersionModel::Kind::Sellmeier: {
                    const auto& c = m.coefficients();
                    s.material =
                        DispersionModel::sellmeier(c[0], c[1], c[2], c[3], c[4], c[5], r[0], r[1]);
                    break;
                }
                case DispersionModel::Kind::Schott:
                    s.material = DispersionModel::schott(m.coefficients(), r[0], r[1]);
                    break;
                }
            } else if (l.key == "stop") {
                s.is_stop = parse_bool(l);
                if (s.is_stop) d.stop_line = l.number;
            } else if (l.key == "trainable") {
                for (const std::string& t : split_list(l.value)) d.trainable.push_back(t);
            } else throw ParseError(l.number, "unknown surface key '" + l.key + "'");
        } else {
            throw ParseError(l.number, "key outside any section");
        }
    }

    if (decls.empty()) throw ParseError(0, "prescription declares no surfaces");
    for (SurfaceDecl& d : decls) sys.surfaces.push_back(d.surface);

    if (system_stop_id > 0) {
        if (system_stop_id > sys.surface_count())
            throw Error("system stop id " + std::to_string(system_stop_id) +
                        " exceeds the surface count");
        sys.surfaces[static_cast<std::size_t>(system_stop_id - 1)].is_stop = true;
    }
    std::vector<int> stops;
    for (int j = 0; j < sys.surface_count(); ++j)
        if (sys.surfaces[static_cast<std::size_t>(j)].is_stop) stops.push_back(j + 1);
    if (stops.size() > 1) {
        std::string which;
        for (int id : stops) which += (which.empty() ? "" : " and ") + std::to_string(id);
        throw Error("multiple stop flags: surfaces " + which);
    }
    if (stops.empty()) throw Error("no stop surface declared");

    if (sys.wavelengths_nm.empty()) sys.wavelengths_nm = {486.1, 587.6, 656.3};
    if (sys.field_angles_deg.empty()) sys.field_angles_deg = {0.0};
    if (sys.max_field_deg == 0.0)
        sys.max_field_deg = *std::max_element(sys.field_angles_deg.begin(), sys.field_angles_deg.end());
    sys.validate();

    pres.params = ParamVector::from_system(sys);
    for (std::size_t j = 0; j < decls.size(); ++j) {
        for (const std::string& t : decls[j].trainable) {
            ParamKind kind;
            int asph = 0;
            if (t == "c") kind = ParamKind::Curvature;
            else if (t == "d") kind = ParamKind::Thickness;
            else if (t == "k") kind = ParamKind::Conic;
            else if (t.size() == 2 && t[0] == 'a' && t[1] >= '1' && t[1] <= '8') {
                kind = ParamKind::Asphere;
                asph = t[1] - '0';
            } else {
                throw Error("surface " + std::to_string(j + 1) + ": unknown trainable flag '" + t +
                            "'");
            }
            bool found = false;
            for (ParamEntry& e : pres.params.entries)
                if (e.ref.surface == static_cast<int>(j) && e.ref.kind == kind &&
                    e.ref.asphere_index == asph) {
                    e.trainable = true;
                    found = true;
                }
            if (!found) throw Error("trainable flag did not match a parameter");
        }
    }
    return pres;
}

Prescription load_prescription(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_prescription(buf.str());
}

std::string emit_prescription(const LensSystem& sys, const ParamVector& params) {
    std::ostringstream out;
    out << "[system]\n";
    if (!sys.name.empty()) out << "name = " << sys.name << "\n";
    out << "wavelengths = ";
    for (std::size_t i = 0; i < sys.wavelengths_nm.size(); ++i)
        out << (i ? ", " : "") << format_number(sys.wavelengths_nm[i]);
    out << "\nreference = " << format_number(sys.reference_wavelength_nm) << "\n";
    out << "fields = ";
    for (std::size_t i = 0; i < sys.field_angles_deg.size(); ++i)
        out << (i ? ", " : "") << format_number(sys.field_angles_deg[i]);
    out << "\nmax_field = " << format_number(sys.max_field_deg) << "\n";
    out << "image_height = " << format_number(sys.image_height_mm) << "\n";
    out << "sensor_pitch = " << format_number(sys.sensor_pitch_um) << "\n";
    out << "object = infinity\n";

    for (int j = 0; j < sys.surface_count(); ++j) {
        const Surface& s = sys.surfaces[static_cast<std::size_t>(j)];
        out << "\n[surface]\n";
        out << "kind = " << (s.kind == Surface::Kind::StandardConic ? "standard" : "even_asphere")
            << "\n";
        out << "c = " << format_number(s.curvature) << "\n";
        out << "d = " << format_number(s.thickness) << "\n";
        if (s.conic != 0.0) out << "k = " << format_number(s.conic) << "\n";
        for (int i = 0; i < 8; ++i)
            if (s.aspheric[static_cast<std::size_t>(i)] != 0.0)
                out << "a" << i + 1 << " = " << format_number(s.aspheric[static_cast<std::size_t>(i)]) << "\n";
        out << "semi_aperture = " << format_number(s.semi_aperture) << "\n";
        const DispersionModel& m = s.material;
        if (m.is_air()) {
            out << "material = air\n";
        } else if (m.kind() == DispersionModel::Kind::Constant) {
            out << "material = constant " << format_number(m.coefficients()[0]) << "\n";
        } else {
            out << "material = "
                << (m.kind() == DispersionModel::Kind::Sellmeier ? "sellmeier" : "schott");
            for (double c : m.coefficients()) out << " " << format_number(c);
            out << "\n";
        }
        if (m.range_lo_nm() != 300.0 || m.range_hi_nm() != 2500.0)
            out << "material_range = " << format_number(m.range_lo_nm()) << ", "
                << format_number(m.range_hi_nm()) << "\n";
        if (s.is_stop) out << "stop = true\n";
        std::string tr;
        for (const ParamEntry& e : params.entries) {
            if (!e.trainable || e.ref.surface != j) continue;
            if (!tr.empty()) tr += ", ";
            tr += param_kind_name(e.ref.kind);
            if (e.ref.kind == ParamKind::Asphere) tr += std::to_string(e.ref.asphere_index);
        }
        if (!tr.empty()) out << "trainable = " << tr << "\n";
    }
    return out.str();
}

void save_prescription(const LensSystem& system, const ParamVector& params,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << emit_prescription(system, params);
    if (!out) throw Error("cannot write " + path);
}

DesignSpec parse_design_spec(const std::string& text) {
    DesignSpec spec;
    bool in_design = false;
    for (const Line& l : tokenize(text)) {
        if (l.is_section) {
            if (l.key != "design") throw ParseError(l.number, "expected [design]");
            in_design = true;
            continue;
        }
        if (!in_design) throw ParseError(l.number, "key outside [design]");
        if (l.key == "ttl_max") spec.ttl_max_mm = parse_number(l, l.value);
        else if (l.key == "fov") spec.fov_deg = parse_number(l, l.value);
        else if (l.key == "image_height") spec.image_height_mm = parse_number(l, l.value);
        else if (l.key == "gap_epsilon") spec.gap_epsilon_mm = parse_number(l, l.value);
        else if (l.key == "dist_epsilon") spec.dist_epsilon = parse_number(l, l.value);
        else throw ParseError(l.number, "unknown design key '" + l.key + "'");
    }
    if (spec.ttl_max_mm <= 0.0 || spec.fov_deg <= 0.0 || spec.image_height_mm <= 0.0)
        throw Error("design spec must set positive ttl_max, fov and image_height");
    if (spec.dist_epsilon <= 0.0 || spec.dist_epsilon >= 0.2)
        throw Error("dist_epsilon must lie in (0, 0.2)");
    if (spec.gap_epsilon_mm <= 0.0) throw Error("gap_epsilon must be positive");
    return spec;
}

DesignSpec load_design_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_design_spec(buf.str());
}

std::string emit_design_spec(const DesignSpec& spec) {
    std::ostringstream out;
    out << "[design]\n";
    out << "ttl_max = " << format_number(spec.ttl_max_mm) << "\n";
    out << "fov = " << format_number(spec.fov_deg) << "\n";
    out << "image_height = " << format_number(spec.image_height_mm) << "\n";
    out << "gap_epsilon = " << format_number(spec.gap_epsilon_mm) << "\n";
    out << "dist_epsilon = " << format_number(spec.dist_epsilon) << "\n";
    return out.str();
}

} // namespace difflens
