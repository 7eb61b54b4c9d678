#include "filmgen/reward.hpp"

#include <algorithm>
#include <cmath>

namespace filmgen {

void RewardSpec::validate() const {
    optics::validate_query(grid);
    const std::size_t n = grid.wavelengths_nm.size() * grid.angles_rad.size();
    if (target.size() != n) {
        throw optics::OpticsError("target has " + std::to_string(target.size()) + " values, grid has " +
                                  std::to_string(n));
    }
    for (double t : target) {
        if (!(t >= 0.0 && t <= 1.0)) throw optics::OpticsError("target values must lie in [0, 1]");
    }
}

RewardSpec RewardSpec::constant(optics::SpectrumQuery grid, optics::Quantity quantity, double value) {
    RewardSpec s{std::move(grid), quantity, {}};
    s.target.assign(s.grid.wavelengths_nm.size() * s.grid.angles_rad.size(), value);
    s.validate();
    return s;
}

RewardSpec RewardSpec::band(optics::SpectrumQuery grid, optics::Quantity quantity, double band_lo_nm,
                            double band_hi_nm, double inside, double outside) {
    RewardSpec s{std::move(grid), quantity, {}};
    for (double wl : s.grid.wavelengths_nm) {
        const double v = (wl >= band_lo_nm && wl <= band_hi_nm) ? inside : outside;
        s.target.insert(s.target.end(), s.grid.angles_rad.size(), v);
    }
    s.validate();
    return s;
}

double spectral_reward(const optics::SpectrumResult& result, const RewardSpec& spec) {
    const auto& values = result.values(spec.quantity);
    if (values.size() != spec.target.size()) throw optics::OpticsError("spectrum and target grids differ");
    double err = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) err += std::abs(values[i] - spec.target[i]);
    const double g = 1.0 - err / static_cast<double>(values.size());
    return std::clamp(g, 0.0, 1.0);
}

RewardModel::RewardModel(const materials::MaterialLibrary& library, const std::vector<std::string>& material_ids,
                         RewardSpec spec, Media media)
    : spec_((spec.validate(), std::move(spec))), evaluator_(library, material_ids, spec_.grid, media) {}

double RewardModel::operator()(const Structure& structure) const {
    return spectral_reward(evaluator_.evaluate(structure), spec_);
}

optics::SpectrumResult RewardModel::spectrum(const Structure& structure) const {
    return evaluator_.evaluate(structure);
}

double compute_reward(const Structure& structure, const RewardSpec& spec, const materials::MaterialLibrary& library,
                      const Media& media) {
    spec.validate();
    return spectral_reward(evaluate_structure(structure, library, spec.grid, media), spec);
}

std::vector<double> linear_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
        throw optics::OpticsError("invalid wavelength or angle grid");
    }
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + static_cast<double>(i) * step;
    return out;
}

}  // namespace filmgen
