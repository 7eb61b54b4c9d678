#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace filmgen::optics {

using Complex = std::complex<double>;

class OpticsError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Complex refractive index N = n + i k (k >= 0 is absorption).
struct ComplexIndex {
    double n = 1.0;
    double k = 0.0;

    [[nodiscard]] Complex value() const { return {n, k}; }
    friend bool operator==(const ComplexIndex&, const ComplexIndex&) = default;
};

struct Layer {
    ComplexIndex index;
    double thickness_nm = 0.0;
};

/// Semi-infinite ambient / finite layers / semi-infinite substrate.
/// Layers are listed from the illuminated side.
struct Stack {
    ComplexIndex ambient{1.0, 0.0};
    std::vector<Layer> layers;
    ComplexIndex substrate{1.5, 0.0};
};

enum class Polarization { s, p, unpolarized };
enum class Quantity { R, T, A };

struct SpectrumQuery {
    std::vector<double> wavelengths_nm;
    std::vector<double> angles_rad{0.0};
    Polarization polarization = Polarization::unpolarized;
};

/// Power quantities on a wavelength x angle grid, row-major by wavelength.
struct SpectrumResult {
    std::size_t n_wavelengths = 0;
    std::size_t n_angles = 0;
    std::vector<double> R;
    std::vector<double> T;
    std::vector<double> A;

    [[nodiscard]] std::size_t offset(std::size_t wl, std::size_t angle) const { return wl * n_angles + angle; }
    [[nodiscard]] const std::vector<double>& values(Quantity q) const;
    [[nodiscard]] bool empty() const { return R.empty(); }
};

struct PowerResponse {
    double R = 0.0;
    double T = 0.0;
    [[nodiscard]] double A() const { return 1.0 - R - T; }
};

/// Coherent response of one configuration.
///
/// `indices` holds ambient, every layer, then substrate (size = thicknesses.size() + 2).
/// The ambient must be lossless. No validation is performed here; callers that
/// accept external data go through evaluate_stack or validate_* first.
PowerResponse coherent_response(std::span<const Complex> indices, std::span<const double> thicknesses_nm,
                                double wavelength_nm, double angle_rad, Polarization pol);

void validate_index(const ComplexIndex& index, const char* what);
void validate_stack(const Stack& stack);
void validate_query(const SpectrumQuery& query);

SpectrumResult evaluate_stack(const Stack& stack, const SpectrumQuery& query);

/// Unweighted mean of one quantity over every grid point.
double average_quantity(const SpectrumResult& result, Quantity quantity);

const char* to_string(Polarization pol);
Polarization polarization_from_string(const std::string& text);
const char* to_string(Quantity q);
Quantity quantity_from_string(const std::string& text);

}  // namespace filmgen::optics
