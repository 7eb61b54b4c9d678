#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace filmgen {

struct LayerSpec {
    std::string material;
    double thickness_nm = 0.0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// A design: ordered layers from the illuminated side. Ambient and substrate
/// media are supplied separately by the evaluation context.
struct Structure {
    std::vector<LayerSpec> layers;

    [[nodiscard]] std::size_t size() const { return layers.size(); }
    [[nodiscard]] bool empty() const { return layers.empty(); }
    [[nodiscard]] double total_thickness_nm() const;
    [[nodiscard]] std::vector<double> thicknesses() const;
    [[nodiscard]] std::string describe() const;

    friend bool operator==(const Structure&, const Structure&) = default;
};

/// `[{"material": "SiO2", "thickness_nm": 115}, ...]`
nlohmann::json to_json(const Structure& s);
Structure structure_from_json(const nlohmann::json& j);

Structure read_structure(const std::filesystem::path& path);
void write_structure(const std::filesystem::path& path, const Structure& s);

}  // namespace filmgen
