#include "difflens/dispersion.hpp"

#include <cmath>

namespace difflens {

DispersionModel DispersionModel::constant(double n, double lo_nm, double hi_nm) {
    DispersionModel m;
    m.kind_ = Kind::Constant;
    m.coef_ = {n, 0, 0, 0, 0, 0};
    m.lo_nm_ = lo_nm;
    m.hi_nm_ = hi_nm;
    return m;
}

DispersionModel DispersionModel::sellmeier(double b1, double c1, double b2, double c2, double b3,
                                           double c3, double lo_nm, double hi_nm) {
    DispersionModel m;
    m.kind_ = Kind::Sellmeier;
    m.coef_ = {b1, c1, b2, c2, b3, c3};
    m.lo_nm_ = lo_nm;
    m.hi_nm_ = hi_nm;
    return m;
}

DispersionModel DispersionModel::schott(const std::array<double, 6>& a, double lo_nm,
                                        double hi_nm) {
    DispersionModel m;
    m.kind_ = Kind::Schott;
    m.coef_ = a;
    m.lo_nm_ = lo_nm;
    m.hi_nm_ = hi_nm;
    return m;
}

double DispersionModel::index_at(double wavelength_nm) const {
    if (wavelength_nm < lo_nm_ || wavelength_nm > hi_nm_)
        throw std::out_of_range("wavelength " + std::to_string(wavelength_nm) +
                                " nm outside dispersion model range [" + std::to_string(lo_nm_) +
                                ", " + std::to_string(hi_nm_) + "] nm");
    switch (kind_) {
    case Kind::Constant:
        return coef_[0];
    case Kind::Sellmeier: {
        double l2 = wavelength_nm * 1e-3 * (wavelength_nm * 1e-3);
        double n2 = 1.0;
        for (int j = 0; j < 3; ++j) n2 += coef_[2 * j] * l2 / (l2 - coef_[2 * j + 1]);
        return std::sqrt(n2);
    }
    case Kind::Schott: {
        double l2 = wavelength_nm * 1e-3 * (wavelength_nm * 1e-3);
        double il2 = 1.0 / l2;
        double n2 = coef_[0] + coef_[1] * l2 +
                    il2 * (coef_[2] + il2 * (coef_[3] + il2 * (coef_[4] + il2 * coef_[5])));
        return std::sqrt(n2);
    }
    }
    return 1.0;
}

} // namespace difflens
