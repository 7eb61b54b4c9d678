#pragma once

#include <map>
#include <string>
#include <vector>

#include "filmgen/materials.hpp"
#include "filmgen/optics.hpp"
#include "filmgen/structure.hpp"

namespace filmgen {

/// Semi-infinite media bracketing every evaluated structure.
struct Media {
    optics::ComplexIndex ambient{1.0, 0.0};
    optics::ComplexIndex substrate{1.5, 0.0};
};

/// Resolves a fixed set of materials onto a fixed spectral grid once, then
/// evaluates any structure built from those materials. Immutable after
/// construction, so concurrent evaluate() calls are safe.
class GridEvaluator {
public:
    GridEvaluator(const materials::MaterialLibrary& library, const std::vector<std::string>& material_ids,
                  optics::SpectrumQuery query, Media media = {});

    [[nodiscard]] optics::SpectrumResult evaluate(const Structure& structure) const;

    [[nodiscard]] const optics::SpectrumQuery& query() const { return query_; }
    [[nodiscard]] const Media& media() const { return media_; }
    [[nodiscard]] bool knows(const std::string& material) const { return slot_.contains(material); }
    /// Endpoint clamps that happened while resolving the grid (one per material and side).
    [[nodiscard]] const std::vector<materials::RangeWarning>& warnings() const { return warnings_; }

private:
    optics::SpectrumQuery query_;
    Media media_;
    std::map<std::string, std::size_t> slot_;
    std::vector<std::vector<optics::Complex>> indices_;  // [material slot][wavelength]
    std::vector<materials::RangeWarning> warnings_;
};

/// One-shot convenience wrapper around GridEvaluator.
optics::SpectrumResult evaluate_structure(const Structure& structure, const materials::MaterialLibrary& library,
                                          const optics::SpectrumQuery& query, const Media& media = {},
                                          std::vector<materials::RangeWarning>* warnings = nullptr);

}  // namespace filmgen
