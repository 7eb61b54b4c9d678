#include "filmgen/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace filmgen::optics {

namespace {

using WideComplex = std::complex<long double>;

// Normal wavevector component N cos(theta) for the given transverse invariant.
// Im >= 0 keeps evanescent and absorbed waves decaying away from the interface.
WideComplex normal_component(WideComplex index, long double transverse) {
    WideComplex q = std::sqrt(index * index - transverse * transverse);
    if (q.imag() < 0.0L || (q.imag() == 0.0L && q.real() < 0.0L)) q = -q;
    return q;
}

// cos and sin of a complex phase from one sincos and one exp.
void complex_cos_sin(WideComplex delta, WideComplex& c, WideComplex& s) {
    const long double x = delta.real();
    const long double y = delta.imag();
    const long double sx = std::sin(x);
    const long double cx = std::cos(x);
    const long double ey = std::exp(y);
    const long double ch = 0.5L * (ey + 1.0L / ey);
    const long double sh = std::abs(y) < 1e-5L ? y * (1.0L + y * y / 6.0L) : 0.5L * (ey - 1.0L / ey);
    c = {cx * ch, -sx * sh};
    s = {sx * ch, cx * sh};
}

struct Matrix {
    WideComplex m11{1.0L}, m12{0.0L}, m21{0.0L}, m22{1.0L};

    // this = this * [[c, -i s / eta], [-i eta s, c]]
    void multiply_layer(WideComplex c, WideComplex s, WideComplex eta) {
        const WideComplex a12{s.imag(), -s.real()};  // -i s
        const WideComplex b12 = a12 / eta;
        const WideComplex b21 = a12 * eta;
        const WideComplex n11 = m11 * c + m12 * b21;
        const WideComplex n12 = m11 * b12 + m12 * c;
        const WideComplex n21 = m21 * c + m22 * b21;
        const WideComplex n22 = m21 * b12 + m22 * c;
        m11 = n11;
        m12 = n12;
        m21 = n21;
        m22 = n22;
    }

    [[nodiscard]] PowerResponse response(WideComplex eta0, WideComplex eta_sub) const {
        const WideComplex b = m11 + m12 * eta_sub;
        const WideComplex c = m21 + m22 * eta_sub;
        const WideComplex denom = eta0 * b + c;
        const WideComplex r = (eta0 * b - c) / denom;
        const long double reflect = std::norm(r);
        const long double transmit = 4.0L * eta0.real() * eta_sub.real() / std::norm(denom);
        PowerResponse out;
        out.R = std::clamp(static_cast<double>(reflect), 0.0, 1.0);
        out.T = std::clamp(static_cast<double>(transmit), 0.0, 1.0 - out.R);
        return out;
    }
};

// Characteristic-matrix products for the n + ik convention. Both polarizations
// share the phase thickness of every layer, so they are built in one pass.
void polarization_pair(std::span<const Complex> indices, std::span<const double> thicknesses, double wavelength_nm,
                       double angle_rad, bool want_s, bool want_p, PowerResponse& out_s, PowerResponse& out_p) {
    const long double lambda = wavelength_nm;
    const WideComplex ambient{indices.front().real(), indices.front().imag()};
    const long double transverse = ambient.real() * std::sin(static_cast<long double>(angle_rad));
    const long double two_pi = 2.0L * std::numbers::pi_v<long double>;

    const WideComplex q0 = normal_component(ambient, transverse);
    const WideComplex sub{indices.back().real(), indices.back().imag()};
    const WideComplex q_sub = normal_component(sub, transverse);

    Matrix ms;
    Matrix mp;
    for (std::size_t j = 0; j < thicknesses.size(); ++j) {
        const WideComplex n{indices[j + 1].real(), indices[j + 1].imag()};
        const WideComplex q = normal_component(n, transverse);
        WideComplex c;
        WideComplex s;
        complex_cos_sin(two_pi * static_cast<long double>(thicknesses[j]) * q / lambda, c, s);
        if (want_s) ms.multiply_layer(c, s, q);
        if (want_p) mp.multiply_layer(c, s, n * n / q);
    }
    if (want_s) out_s = ms.response(q0, q_sub);
    if (want_p) out_p = mp.response(ambient * ambient / q0, sub * sub / q_sub);
}

bool finite(const ComplexIndex& idx) { return std::isfinite(idx.n) && std::isfinite(idx.k); }

}  // namespace

const std::vector<double>& SpectrumResult::values(Quantity q) const {
    switch (q) {
        case Quantity::R: return R;
        case Quantity::T: return T;
        case Quantity::A: return A;
    }
    return A;
}

PowerResponse coherent_response(std::span<const Complex> indices, std::span<const double> thicknesses_nm,
                                double wavelength_nm, double angle_rad, Polarization pol) {
    PowerResponse s;
    PowerResponse p;
    polarization_pair(indices, thicknesses_nm, wavelength_nm, angle_rad, pol != Polarization::p,
                      pol != Polarization::s, s, p);
    if (pol == Polarization::s) return s;
    if (pol == Polarization::p) return p;
    return {0.5 * (s.R + p.R), 0.5 * (s.T + p.T)};
}

void validate_index(const ComplexIndex& index, const char* what) {
    if (!finite(index)) throw OpticsError(std::string("non-finite refractive index for ") + what);
    if (!(index.n > 0.0)) throw OpticsError(std::string("refractive index n must be > 0 for ") + what);
    if (index.k < 0.0) throw OpticsError(std::string("extinction coefficient k must be >= 0 for ") + what);
}

void validate_stack(const Stack& stack) {
    validate_index(stack.ambient, "ambient");
    if (stack.ambient.k != 0.0) throw OpticsError("ambient medium must be lossless");
    validate_index(stack.substrate, "substrate");
    for (std::size_t i = 0; i < stack.layers.size(); ++i) {
        const auto label = "layer " + std::to_string(i);
        validate_index(stack.layers[i].index, label.c_str());
        const double d = stack.layers[i].thickness_nm;
        if (!std::isfinite(d) || d <= 0.0) throw OpticsError(label + ": thickness must be finite and > 0");
    }
}

void validate_query(const SpectrumQuery& query) {
    if (query.wavelengths_nm.empty()) throw OpticsError("query has no wavelengths");
    if (query.angles_rad.empty()) throw OpticsError("query has no angles");
    double prev = 0.0;
    for (double wl : query.wavelengths_nm) {
        if (!std::isfinite(wl) || wl <= 0.0) throw OpticsError("wavelengths must be finite and > 0");
        if (wl <= prev) throw OpticsError("wavelengths must be strictly increasing");
        prev = wl;
    }
    for (double a : query.angles_rad) {
        if (!std::isfinite(a) || a < 0.0 || a >= std::numbers::pi / 2) {
            throw OpticsError("incidence angles must lie in [0, pi/2)");
        }
    }
}

SpectrumResult evaluate_stack(const Stack& stack, const SpectrumQuery& query) {
    validate_stack(stack);
    validate_query(query);

    std::vector<Complex> indices;
    std::vector<double> thicknesses;
    indices.reserve(stack.layers.size() + 2);
    indices.push_back(stack.ambient.value());
    for (const auto& layer : stack.layers) {
        indices.push_back(layer.index.value());
        thicknesses.push_back(layer.thickness_nm);
    }
    indices.push_back(stack.substrate.value());

    SpectrumResult out;
    out.n_wavelengths = query.wavelengths_nm.size();
    out.n_angles = query.angles_rad.size();
    const std::size_t total = out.n_wavelengths * out.n_angles;
    out.R.resize(total);
    out.T.resize(total);
    out.A.resize(total);
    for (std::size_t i = 0; i < out.n_wavelengths; ++i) {
        for (std::size_t j = 0; j < out.n_angles; ++j) {
            const auto resp = coherent_response(indices, thicknesses, query.wavelengths_nm[i], query.angles_rad[j],
                                                query.polarization);
            const std::size_t o = out.offset(i, j);
            out.R[o] = resp.R;
            out.T[o] = resp.T;
            out.A[o] = resp.A();
        }
    }
    return out;
}

double average_quantity(const SpectrumResult& result, Quantity quantity) {
    const auto& v = result.values(quantity);
    if (v.empty()) throw OpticsError("cannot average an empty spectrum");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

const char* to_string(Polarization pol) {
    switch (pol) {
        case Polarization::s: return "s";
        case Polarization::p: return "p";
        case Polarization::unpolarized: return "unpolarized";
    }
    return "unpolarized";
}

Polarization polarization_from_string(const std::string& text) {
    if (text == "s" || text == "TE") return Polarization::s;
    if (text == "p" || text == "TM") return Polarization::p;
    if (text == "unpolarized" || text == "u") return Polarization::unpolarized;
    throw OpticsError("unknown polarization '" + text + "'");
}

const char* to_string(Quantity q) {
    switch (q) {
        case Quantity::R: return "R";
        case Quantity::T: return "T";
        case Quantity::A: return "A";
    }
    return "A";
}

Quantity quantity_from_string(const std::string& text) {
    if (text == "R") return Quantity::R;
    if (text == "T") return Quantity::T;
    if (text == "A") return Quantity::A;
    throw OpticsError("unknown spectral quantity '" + text + "' (expected R, T or A)");
}

}  // namespace filmgen::optics
