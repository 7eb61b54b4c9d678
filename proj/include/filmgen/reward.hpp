#pragma once

#include <string>
#include <vector>

#include "filmgen/simulate.hpp"

namespace filmgen {

/// Target spectrum on a (wavelength x angle) grid and the quantity it constrains.
struct RewardSpec {
    optics::SpectrumQuery grid;
    optics::Quantity quantity = optics::Quantity::A;
    std::vector<double> target;  // row-major by wavelength, like SpectrumResult

    void validate() const;

    /// Same target value at every grid point.
    static RewardSpec constant(optics::SpectrumQuery grid, optics::Quantity quantity, double value);
    /// `inside` on [band_lo, band_hi] nm (inclusive), `outside` elsewhere.
    static RewardSpec band(optics::SpectrumQuery grid, optics::Quantity quantity, double band_lo_nm,
                           double band_hi_nm, double inside, double outside);
};

/// G = 1 - mean |quantity - target| over the grid.
double spectral_reward(const optics::SpectrumResult& result, const RewardSpec& spec);

/// Reward evaluation bound to a material set. Thread-safe after construction.
class RewardModel {
public:
    RewardModel(const materials::MaterialLibrary& library, const std::vector<std::string>& material_ids,
                RewardSpec spec, Media media = {});

    [[nodiscard]] double operator()(const Structure& structure) const;
    [[nodiscard]] optics::SpectrumResult spectrum(const Structure& structure) const;

    [[nodiscard]] const RewardSpec& spec() const { return spec_; }
    [[nodiscard]] const GridEvaluator& evaluator() const { return evaluator_; }

private:
    RewardSpec spec_;
    GridEvaluator evaluator_;
};

/// One-shot reward for a structure.
double compute_reward(const Structure& structure, const RewardSpec& spec, const materials::MaterialLibrary& library,
                      const Media& media = {});

/// Evenly spaced grid {lo, lo + step, ..., hi}.
std::vector<double> linear_grid(double lo, double hi, double step);

}  // namespace filmgen
