#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "filmgen/simulate.hpp"

namespace filmgen::photometry {

class PhotometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EmitterSpec {
    double power_W = 100.0;
    double area_mm2 = 20.0;
    double view_factor = 1.0;  // f in (0, 1]
    double t0_K = 2578.0;      // bare blackbody temperature at power_W

    void validate() const;
};

/// Photopic sensitivity V(lambda); zero outside the tabulated support.
class LuminosityCurve {
public:
    LuminosityCurve(std::vector<double> wavelengths_nm, std::vector<double> values);

    [[nodiscard]] double at(double wavelength_nm) const;
    [[nodiscard]] double peak_wavelength_nm() const;
    [[nodiscard]] std::span<const double> wavelengths_nm() const { return wl_; }

private:
    std::vector<double> wl_;
    std::vector<double> v_;
};

/// CSV with header `wavelength_nm,V`.
LuminosityCurve load_luminosity(const std::filesystem::path& csv);

double effective_emissivity(double reflectance, double view_factor);

/// Fixed Gauss-Legendre rule on [0, pi/2] for 2 * integral cos(d) sin(d) e(d) dd.
class HemisphereRule {
public:
    explicit HemisphereRule(std::size_t nodes = 64);

    [[nodiscard]] const std::vector<double>& angles_rad() const { return angles_; }
    /// weights already include the 2 cos sin kernel.
    [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
    [[nodiscard]] double average(std::span<const double> values) const;

private:
    std::vector<double> angles_;
    std::vector<double> weights_;
};

/// 2 * integral cos sin R over the hemisphere at each wavelength (unpolarized).
std::vector<double> angle_averaged_reflectance(const Structure& structure, const materials::MaterialLibrary& library,
                                               const Media& media, std::span<const double> wavelengths_nm,
                                               const HemisphereRule& rule,
                                               std::vector<materials::RangeWarning>* warnings = nullptr);

/// Angle-averaged effective emissivity of `structure` at each wavelength.
std::vector<double> angle_averaged_emissivity(const Structure& structure, const materials::MaterialLibrary& library,
                                              const Media& media, std::span<const double> wavelengths_nm,
                                              double view_factor, const HemisphereRule& rule,
                                              std::vector<materials::RangeWarning>* warnings = nullptr);

/// Planck spectral radiance 2hc^2 / lambda^5 / (exp(hc / lambda k t) - 1), SI units per metre of wavelength.
double blackbody_intensity(double wavelength_nm, double t_K);

double trapezoid(std::span<const double> x, std::span<const double> y);

/// Power model P(t) = area * kappa * integral eps(lambda) I(lambda, t) dlambda on a fixed grid.
class EmitterModel {
public:
    EmitterModel(std::vector<double> wavelengths_nm, std::vector<double> emissivity, EmitterSpec spec);

    /// kappa chosen so that a black emitter of the configured area at t0 emits power_W.
    static double calibrate_kappa(std::span<const double> wavelengths_nm, const EmitterSpec& spec);

    [[nodiscard]] double power_W(double t_K) const;
    [[nodiscard]] double kappa() const { return kappa_; }
    [[nodiscard]] const EmitterSpec& spec() const { return spec_; }
    [[nodiscard]] std::span<const double> wavelengths_nm() const { return wl_; }
    [[nodiscard]] std::span<const double> emissivity() const { return eps_; }

    /// Root of P(t) = power on [lo, hi] K, to |dP| < 1e-4 * power.
    [[nodiscard]] double solve_temperature(double power, double lo_K = 500.0, double hi_K = 6000.0) const;
    [[nodiscard]] double solve_temperature() const { return solve_temperature(spec_.power_W); }

    /// chi = integral eps I(t) V / integral I(t0) V.
    [[nodiscard]] double enhancement_factor(double t_K, const LuminosityCurve& v) const;

private:
    std::vector<double> wl_;
    std::vector<double> eps_;
    EmitterSpec spec_;
    double kappa_;
};

struct PhotometryGrid {
    double lo_nm = 300.0;
    double hi_nm = 5000.0;
    double step_nm = 1.0;
    std::size_t angle_nodes = 64;
};

struct PhotometryReport {
    double view_factor = 1.0;
    double t_solved_K = 0.0;
    double chi = 0.0;
    double t0_K = 0.0;
    double t0_check_K = 0.0;  // black emitter solved with the same convention
    double power_W = 0.0;
    std::vector<materials::RangeWarning> warnings;
};

nlohmann::json to_json(const PhotometryReport& report);

/// One report per view factor; the reflectance is computed once.
std::vector<PhotometryReport> evaluate_emitter(const Structure& structure, const materials::MaterialLibrary& library,
                                               const Media& media, const EmitterSpec& spec,
                                               std::span<const double> view_factors, const LuminosityCurve& luminosity,
                                               const PhotometryGrid& grid = {});

PhotometryReport evaluate_emitter(const Structure& structure, const materials::MaterialLibrary& library,
                                  const Media& media, const EmitterSpec& spec, const LuminosityCurve& luminosity,
                                  const PhotometryGrid& grid = {});

}  // namespace filmgen::photometry
