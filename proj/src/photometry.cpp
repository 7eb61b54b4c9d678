#include "filmgen/photometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <boost/math/tools/toms748_solve.hpp>
#include <gsl/gsl_integration.h>

#include "filmgen/text_util.hpp"

namespace filmgen::photometry {

namespace {

constexpr double kPlanck = 6.62607015e-34;
constexpr double kLight = 299792458.0;
constexpr double kBoltzmann = 1.380649e-23;

}  // namespace

void EmitterSpec::validate() const {
    if (!(power_W > 0.0) || !std::isfinite(power_W)) throw PhotometryError("power must be > 0");
    if (!(area_mm2 > 0.0) || !std::isfinite(area_mm2)) throw PhotometryError("area must be > 0");
    if (!(view_factor > 0.0 && view_factor <= 1.0)) throw PhotometryError("view factor must lie in (0, 1]");
    if (!(t0_K > 0.0) || !std::isfinite(t0_K)) throw PhotometryError("t0 must be > 0");
}

// ---------------------------------------------------------------------------

LuminosityCurve::LuminosityCurve(std::vector<double> wavelengths_nm, std::vector<double> values)
    : wl_(std::move(wavelengths_nm)), v_(std::move(values)) {
    if (wl_.size() < 2 || wl_.size() != v_.size()) throw PhotometryError("luminosity curve needs >= 2 samples");
    for (std::size_t i = 0; i < wl_.size(); ++i) {
        if (!(v_[i] >= 0.0 && v_[i] <= 1.0)) throw PhotometryError("luminosity values must lie in [0, 1]");
        if (i > 0 && !(wl_[i] > wl_[i - 1])) throw PhotometryError("luminosity wavelengths must increase");
    }
}

double LuminosityCurve::at(double wl) const {
    if (wl < wl_.front() || wl > wl_.back()) return 0.0;
    const auto it = std::upper_bound(wl_.begin(), wl_.end(), wl);
    if (it == wl_.end()) return v_.back();
    const std::size_t hi = static_cast<std::size_t>(it - wl_.begin());
    const std::size_t lo = hi - 1;
    const double u = (wl - wl_[lo]) / (wl_[hi] - wl_[lo]);
    return v_[lo] + u * (v_[hi] - v_[lo]);
}

double LuminosityCurve::peak_wavelength_nm() const {
    return wl_[static_cast<std::size_t>(std::max_element(v_.begin(), v_.end()) - v_.begin())];
}

LuminosityCurve load_luminosity(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) throw PhotometryError("cannot open luminosity file " + csv.string());
    std::string line;
    std::size_t lineno = 0;
    std::vector<double> wl;
    std::vector<double> v;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = text::trim(line);
        if (t.empty()) continue;
        if (lineno == 1) {
            if (t != "wavelength_nm,V") throw PhotometryError(csv.string() + ":1: expected header wavelength_nm,V");
            continue;
        }
        const auto cells = text::split(t, ',');
        double a = 0.0;
        double b = 0.0;
        if (cells.size() != 2 || !text::parse_double(cells[0], a) || !text::parse_double(cells[1], b)) {
            throw PhotometryError(csv.string() + ":" + std::to_string(lineno) + ": malformed row");
        }
        wl.push_back(a);
        v.push_back(b);
    }
    try {
        return LuminosityCurve(std::move(wl), std::move(v));
    } catch (const PhotometryError& e) {
        throw PhotometryError(csv.string() + ": " + e.what());
    }
}

double effective_emissivity(double reflectance, double view_factor) {
    return 1.0 - view_factor * view_factor * reflectance;
}

// ---------------------------------------------------------------------------

HemisphereRule::HemisphereRule(std::size_t nodes) {
    if (nodes == 0) throw PhotometryError("quadrature needs at least one node");
    gsl_integration_glfixed_table* table = gsl_integration_glfixed_table_alloc(nodes);
    if (!table) throw PhotometryError("cannot build Gauss-Legendre table");
    for (std::size_t i = 0; i < nodes; ++i) {
        double x = 0.0;
        double w = 0.0;
        gsl_integration_glfixed_point(0.0, std::numbers::pi / 2.0, i, &x, &w, table);
        angles_.push_back(x);
        weights_.push_back(2.0 * std::cos(x) * std::sin(x) * w);
    }
    gsl_integration_glfixed_table_free(table);
    // Node order from GSL is not monotone; sort by angle for readable output.
    std::vector<std::size_t> order(nodes);
    for (std::size_t i = 0; i < nodes; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return angles_[a] < angles_[b]; });
    std::vector<double> a(nodes);
    std::vector<double> w(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        a[i] = angles_[order[i]];
        w[i] = weights_[order[i]];
    }
    angles_ = std::move(a);
    weights_ = std::move(w);
}

double HemisphereRule::average(std::span<const double> values) const {
    if (values.size() != weights_.size()) throw PhotometryError("value count differs from quadrature nodes");
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += weights_[i] * values[i];
    return s;
}

std::vector<double> angle_averaged_reflectance(const Structure& structure, const materials::MaterialLibrary& library,
                                               const Media& media, std::span<const double> wavelengths_nm,
                                               const HemisphereRule& rule,
                                               std::vector<materials::RangeWarning>* warnings) {
    optics::SpectrumQuery query;
    query.wavelengths_nm.assign(wavelengths_nm.begin(), wavelengths_nm.end());
    query.angles_rad = rule.angles_rad();
    query.polarization = optics::Polarization::unpolarized;

    std::vector<std::string> ids;
    for (const auto& l : structure.layers) ids.push_back(l.material);
    const GridEvaluator eval(library, ids, query, media);
    if (warnings) warnings->insert(warnings->end(), eval.warnings().begin(), eval.warnings().end());
    const auto spectrum = eval.evaluate(structure);

    std::vector<double> out(spectrum.n_wavelengths);
    for (std::size_t i = 0; i < spectrum.n_wavelengths; ++i) {
        out[i] = rule.average(std::span<const double>(spectrum.R).subspan(spectrum.offset(i, 0), spectrum.n_angles));
    }
    return out;
}

namespace {

std::vector<double> emissivity_from_reflectance(std::span<const double> r_avg, double view_factor,
                                                const HemisphereRule& rule) {
    double kernel = 0.0;
    for (double w : rule.weights()) kernel += w;
    std::vector<double> eps(r_avg.size());
    for (std::size_t i = 0; i < r_avg.size(); ++i) eps[i] = kernel - view_factor * view_factor * r_avg[i];
    return eps;
}

}  // namespace

std::vector<double> angle_averaged_emissivity(const Structure& structure, const materials::MaterialLibrary& library,
                                              const Media& media, std::span<const double> wavelengths_nm,
                                              double view_factor, const HemisphereRule& rule,
                                              std::vector<materials::RangeWarning>* warnings) {
    if (!(view_factor > 0.0 && view_factor <= 1.0)) throw PhotometryError("view factor must lie in (0, 1]");
    const auto r = angle_averaged_reflectance(structure, library, media, wavelengths_nm, rule, warnings);
    return emissivity_from_reflectance(r, view_factor, rule);
}

double blackbody_intensity(double wavelength_nm, double t_K) {
    if (!(wavelength_nm > 0.0) || !(t_K > 0.0)) throw PhotometryError("wavelength and temperature must be > 0");
    const double wl = wavelength_nm * 1e-9;
    const double x = kPlanck * kLight / (wl * kBoltzmann * t_K);
    if (x > 700.0) return 0.0;  // exp would overflow; the radiance is zero to double precision
    return 2.0 * kPlanck * kLight * kLight / std::pow(wl, 5) / std::expm1(x);
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw PhotometryError("trapezoid: size mismatch");
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

// ---------------------------------------------------------------------------

namespace {

double weighted_planck_integral(std::span<const double> wl, std::span<const double> weight, double t) {
    std::vector<double> y(wl.size());
    for (std::size_t i = 0; i < wl.size(); ++i) y[i] = weight[i] * blackbody_intensity(wl[i], t);
    return trapezoid(wl, y);
}

}  // namespace

EmitterModel::EmitterModel(std::vector<double> wavelengths_nm, std::vector<double> emissivity, EmitterSpec spec)
    : wl_(std::move(wavelengths_nm)), eps_(std::move(emissivity)), spec_(spec) {
    spec_.validate();
    if (wl_.size() < 2 || wl_.size() != eps_.size()) throw PhotometryError("emissivity grid needs >= 2 points");
    for (double e : eps_) {
        if (!(e >= 0.0 && e <= 1.0 + 1e-12)) throw PhotometryError("emissivity must lie in [0, 1]");
    }
    kappa_ = calibrate_kappa(wl_, spec_);
}

double EmitterModel::calibrate_kappa(std::span<const double> wl, const EmitterSpec& spec) {
    spec.validate();
    const std::vector<double> ones(wl.size(), 1.0);
    const double integral = weighted_planck_integral(wl, ones, spec.t0_K);
    if (!(integral > 0.0)) throw PhotometryError("blackbody integral vanishes at t0");
    return spec.power_W / (spec.area_mm2 * integral);
}

double EmitterModel::power_W(double t_K) const {
    return spec_.area_mm2 * kappa_ * weighted_planck_integral(wl_, eps_, t_K);
}

double EmitterModel::solve_temperature(double power, double lo_K, double hi_K) const {
    if (!(power > 0.0)) throw PhotometryError("power must be > 0");
    auto residual = [&](double t) { return power_W(t) - power; };
    const double f_lo = residual(lo_K);
    const double f_hi = residual(hi_K);
    if (!(f_lo < 0.0 && f_hi > 0.0)) {
        std::ostringstream msg;
        msg << "temperature not bracketed: P(" << lo_K << " K) = " << f_lo + power << " W, P(" << hi_K
            << " K) = " << f_hi + power << " W, target " << power << " W";
        throw PhotometryError(msg.str());
    }
    std::uintmax_t iterations = 200;
    const auto tol = [&](double a, double b) {
        return std::abs(b - a) < 1e-9 * b || std::abs(residual(0.5 * (a + b))) < 1e-6 * power;
    };
    const auto [a, b] = boost::math::tools::toms748_solve(residual, lo_K, hi_K, f_lo, f_hi, tol, iterations);
    const double t = 0.5 * (a + b);
    if (!(std::abs(residual(t)) < 1e-4 * power)) throw PhotometryError("temperature solve did not converge");
    return t;
}

double EmitterModel::enhancement_factor(double t_K, const LuminosityCurve& v) const {
    std::vector<double> num(wl_.size());
    std::vector<double> den(wl_.size());
    for (std::size_t i = 0; i < wl_.size(); ++i) {
        const double vi = v.at(wl_[i]);
        num[i] = eps_[i] * blackbody_intensity(wl_[i], t_K) * vi;
        den[i] = blackbody_intensity(wl_[i], spec_.t0_K) * vi;
    }
    const double d = trapezoid(wl_, den);
    if (!(d > 0.0)) throw PhotometryError("luminosity curve does not overlap the wavelength grid");
    return trapezoid(wl_, num) / d;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const PhotometryReport& r) {
    nlohmann::json j = {{"f", r.view_factor},          {"t_solved_K", r.t_solved_K}, {"chi", r.chi},
                        {"t0_K", r.t0_K},              {"t0_check_K", r.t0_check_K}, {"power_W", r.power_W}};
    auto w = nlohmann::json::array();
    for (const auto& x : r.warnings) {
        w.push_back({{"material", x.material}, {"requested_nm", x.requested_nm}, {"clamped_to_nm", x.clamped_to_nm}});
    }
    j["range_warnings"] = w;
    return j;
}

std::vector<PhotometryReport> evaluate_emitter(const Structure& structure, const materials::MaterialLibrary& library,
                                               const Media& media, const EmitterSpec& spec,
                                               std::span<const double> view_factors, const LuminosityCurve& luminosity,
                                               const PhotometryGrid& grid) {
    spec.validate();
    for (double f : view_factors) {
        if (!(f > 0.0 && f <= 1.0)) throw PhotometryError("view factor must lie in (0, 1]");
    }
    if (!(grid.step_nm > 0.0) || !(grid.lo_nm > 0.0) || grid.hi_nm <= grid.lo_nm) {
        throw PhotometryError("invalid photometry wavelength grid");
    }
    std::vector<double> wl;
    const auto n = static_cast<std::size_t>(std::floor((grid.hi_nm - grid.lo_nm) / grid.step_nm + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) wl.push_back(grid.lo_nm + static_cast<double>(i) * grid.step_nm);

    const HemisphereRule rule(grid.angle_nodes);
    std::vector<materials::RangeWarning> warnings;
    const auto r_avg = angle_averaged_reflectance(structure, library, media, wl, rule, &warnings);
    const EmitterModel black(wl, std::vector<double>(wl.size(), 1.0), spec);
    const double t0_check = black.solve_temperature();

    std::vector<PhotometryReport> out;
    for (double f : view_factors) {
        auto s = spec;
        s.view_factor = f;
        const EmitterModel model(wl, emissivity_from_reflectance(r_avg, f, rule), s);
        PhotometryReport report;
        report.view_factor = f;
        report.t0_K = spec.t0_K;
        report.power_W = spec.power_W;
        report.t0_check_K = t0_check;
        report.t_solved_K = model.solve_temperature();
        report.chi = model.enhancement_factor(report.t_solved_K, luminosity);
        report.warnings = warnings;
        out.push_back(std::move(report));
    }
    return out;
}

PhotometryReport evaluate_emitter(const Structure& structure, const materials::MaterialLibrary& library,
                                  const Media& media, const EmitterSpec& spec, const LuminosityCurve& luminosity,
                                  const PhotometryGrid& grid) {
    const double f[1] = {spec.view_factor};
    return evaluate_emitter(structure, library, media, spec, f, luminosity, grid).front();
}

}  // namespace filmgen::photometry
