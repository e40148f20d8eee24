#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace difflens {

/// Wavelength-dependent refractive index of a medium. Coefficients are fixed
/// data, never design parameters. Wavelengths are nm at the API surface and
/// converted to um internally, matching the usual catalog conventions.
class DispersionModel {
public:
    enum class Kind { Constant, Sellmeier, Schott };

    static DispersionModel air() { return constant(1.0); }

    static DispersionModel constant(double n, double lo_nm = 300.0, double hi_nm = 2500.0);

    /// n^2(lambda) = 1 + sum_j B_j lambda^2 / (lambda^2 - C_j), lambda in um.
    static DispersionModel sellmeier(double b1, double c1, double b2, double c2, double b3,
                                     double c3, double lo_nm = 300.0, double hi_nm = 2500.0);

    /// n^2(lambda) = a0 + a1 l^2 + a2 l^-2 + a3 l^-4 + a4 l^-6 + a5 l^-8, l in um.
    static DispersionModel schott(const std::array<double, 6>& a, double lo_nm = 300.0,
                                  double hi_nm = 2500.0);

    double index_at(double wavelength_nm) const;

    Kind kind() const { return kind_; }
    const std::array<double, 6>& coefficients() const { return coef_; }
    double range_lo_nm() const { return lo_nm_; }
    double range_hi_nm() const { return hi_nm_; }
    bool is_air() const { return kind_ == Kind::Constant && coef_[0] == 1.0; }

    bool operator==(const DispersionModel&) const = default;

private:
    Kind kind_ = Kind::Constant;
    std::array<double, 6> coef_{1.0, 0, 0, 0, 0, 0};
    double lo_nm_ = 300.0;
    double hi_nm_ = 2500.0;
};

} // namespace difflens
