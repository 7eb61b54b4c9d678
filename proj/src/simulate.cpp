#include "filmgen/simulate.hpp"

#include <cmath>
#include <set>

namespace filmgen {

GridEvaluator::GridEvaluator(const materials::MaterialLibrary& library, const std::vector<std::string>& material_ids,
                             optics::SpectrumQuery query, Media media)
    : query_(std::move(query)), media_(media) {
    optics::validate_query(query_);
    optics::validate_index(media_.ambient, "ambient");
    if (media_.ambient.k != 0.0) throw optics::OpticsError("ambient medium must be lossless");
    optics::validate_index(media_.substrate, "substrate");

    for (const auto& id : material_ids) {
        if (slot_.contains(id)) continue;
        const auto& table = library.table(id);
        std::vector<materials::RangeWarning> raw;
        std::vector<optics::Complex> column;
        column.reserve(query_.wavelengths_nm.size());
        for (double wl : query_.wavelengths_nm) column.push_back(table.index_at(wl, &raw).value());
        // Collapse per-wavelength clamp records to the extreme request on each side.
        const auto [lo, hi] = table.span_nm();
        const materials::RangeWarning* below = nullptr;
        const materials::RangeWarning* above = nullptr;
        for (const auto& w : raw) {
            if (w.requested_nm < lo && (!below || w.requested_nm < below->requested_nm)) below = &w;
            if (w.requested_nm > hi && (!above || w.requested_nm > above->requested_nm)) above = &w;
        }
        if (below) warnings_.push_back(*below);
        if (above) warnings_.push_back(*above);
        slot_.emplace(id, indices_.size());
        indices_.push_back(std::move(column));
    }
}

optics::SpectrumResult GridEvaluator::evaluate(const Structure& structure) const {
    std::vector<const std::vector<optics::Complex>*> columns;
    std::vector<double> thicknesses;
    columns.reserve(structure.size());
    for (std::size_t i = 0; i < structure.size(); ++i) {
        const auto& layer = structure.layers[i];
        const auto it = slot_.find(layer.material);
        if (it == slot_.end()) throw materials::MaterialError("unknown material '" + layer.material + "'");
        if (!std::isfinite(layer.thickness_nm) || layer.thickness_nm <= 0.0) {
            throw optics::OpticsError("layer " + std::to_string(i) + ": thickness must be finite and > 0");
        }
        columns.push_back(&indices_[it->second]);
        thicknesses.push_back(layer.thickness_nm);
    }

    optics::SpectrumResult out;
    out.n_wavelengths = query_.wavelengths_nm.size();
    out.n_angles = query_.angles_rad.size();
    const std::size_t total = out.n_wavelengths * out.n_angles;
    out.R.resize(total);
    out.T.resize(total);
    out.A.resize(total);

    std::vector<optics::Complex> indices(structure.size() + 2);
    indices.front() = media_.ambient.value();
    indices.back() = media_.substrate.value();
    for (std::size_t i = 0; i < out.n_wavelengths; ++i) {
        for (std::size_t l = 0; l < columns.size(); ++l) indices[l + 1] = (*columns[l])[i];
        for (std::size_t j = 0; j < out.n_angles; ++j) {
            const auto resp = optics::coherent_response(indices, thicknesses, query_.wavelengths_nm[i],
                                                        query_.angles_rad[j], query_.polarization);
            const std::size_t o = out.offset(i, j);
            out.R[o] = resp.R;
            out.T[o] = resp.T;
            out.A[o] = resp.A();
        }
    }
    return out;
}

optics::SpectrumResult evaluate_structure(const Structure& structure, const materials::MaterialLibrary& library,
                                          const optics::SpectrumQuery& query, const Media& media,
                                          std::vector<materials::RangeWarning>* warnings) {
    std::vector<std::string> ids;
    for (const auto& l : structure.layers) ids.push_back(l.material);
    GridEvaluator eval(library, ids, query, media);
    if (warnings) warnings->insert(warnings->end(), eval.warnings().begin(), eval.warnings().end());
    return eval.evaluate(structure);
}

}  // namespace filmgen
