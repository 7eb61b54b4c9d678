#include "filmgen/structure.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "filmgen/io_util.hpp"

namespace filmgen {

double Structure::total_thickness_nm() const {
    return std::accumulate(layers.begin(), layers.end(), 0.0,
                           [](double acc, const LayerSpec& l) { return acc + l.thickness_nm; });
}

std::vector<double> Structure::thicknesses() const {
    std::vector<double> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l.thickness_nm);
    return out;
}

std::string Structure::describe() const {
    std::ostringstream os;
    os << '{';
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i) os << ", ";
        os << '(' << layers[i].material << ", " << layers[i].thickness_nm << ')';
    }
    os << '}';
    return os.str();
}

nlohmann::json to_json(const Structure& s) {
    auto arr = nlohmann::json::array();
    for (const auto& l : s.layers) arr.push_back({{"material", l.material}, {"thickness_nm", l.thickness_nm}});
    return arr;
}

Structure structure_from_json(const nlohmann::json& j) {
    const nlohmann::json* layers = &j;
    // Accept either a bare array or an object wrapping it under "layers".
    if (j.is_object() && j.contains("layers")) layers = &j.at("layers");
    if (!layers->is_array()) throw std::invalid_argument("structure JSON must be an array of {material, thickness_nm}");
    Structure s;
    for (std::size_t i = 0; i < layers->size(); ++i) {
        const auto& item = (*layers)[i];
        if (!item.is_object() || !item.contains("material") || !item.contains("thickness_nm")) {
            throw std::invalid_argument("structure layer " + std::to_string(i) + " needs 'material' and 'thickness_nm'");
        }
        if (!item.at("material").is_string() || !item.at("thickness_nm").is_number()) {
            throw std::invalid_argument("structure layer " + std::to_string(i) + " has mistyped fields");
        }
        LayerSpec l{item.at("material").get<std::string>(), item.at("thickness_nm").get<double>()};
        if (l.material.empty()) throw std::invalid_argument("structure layer " + std::to_string(i) + " has empty material");
        if (!std::isfinite(l.thickness_nm) || l.thickness_nm <= 0.0) {
            throw std::invalid_argument("structure layer " + std::to_string(i) + " thickness must be > 0");
        }
        s.layers.push_back(std::move(l));
    }
    return s;
}

Structure read_structure(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open structure file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(path.string() + ": malformed structure JSON: " + e.what());
    }
    try {
        return structure_from_json(j);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

void write_structure(const std::filesystem::path& path, const Structure& s) {
    io::write_text_atomic(path, to_json(s).dump(2) + "\n");
}

}  // namespace filmgen
