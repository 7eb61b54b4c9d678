#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "filmgen/optics.hpp"

namespace filmgen::materials {

class MaterialError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Sample {
    double wavelength_nm = 0.0;
    double n = 1.0;
    double k = 0.0;
};

/// Emitted when a query falls outside a table's wavelength span and the
/// endpoint value is used instead.
struct RangeWarning {
    std::string material;
    double requested_nm = 0.0;
    double clamped_to_nm = 0.0;
};

/// Tabulated n, k against wavelength. Immutable after construction.
class MaterialTable {
public:
    /// Throws MaterialError when fewer than two samples, wavelengths not strictly
    /// increasing, n <= 0, k < 0 or any value is non-finite.
    MaterialTable(std::string name, std::vector<Sample> samples);

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const std::vector<Sample>& samples() const { return samples_; }
    [[nodiscard]] std::pair<double, double> span_nm() const {
        return {samples_.front().wavelength_nm, samples_.back().wavelength_nm};
    }

    /// Linear interpolation of n and k in wavelength; endpoint clamp outside the span.
    [[nodiscard]] optics::ComplexIndex index_at(double wavelength_nm, std::vector<RangeWarning>* warnings = nullptr) const;

private:
    std::string name_;
    std::vector<Sample> samples_;
};

class MaterialLibrary {
public:
    void add(MaterialTable table);

    [[nodiscard]] bool contains(const std::string& id) const { return tables_.contains(id); }
    [[nodiscard]] const MaterialTable& table(const std::string& id) const;
    [[nodiscard]] std::vector<std::string> ids() const;
    [[nodiscard]] std::size_t size() const { return tables_.size(); }
    [[nodiscard]] std::pair<double, double> coverage(const std::string& id) const { return table(id).span_nm(); }

    [[nodiscard]] optics::ComplexIndex index_at(const std::string& id, double wavelength_nm,
                                                std::vector<RangeWarning>* warnings = nullptr) const;

private:
    std::map<std::string, MaterialTable> tables_;
};

/// Parses one `wavelength_nm,n,k` CSV. Errors name the file and line.
MaterialTable load_table(const std::filesystem::path& csv, const std::string& name);

/// Reads a manifest (`material,file[,source]` CSV, paths relative to the manifest)
/// and loads every listed material, or only `only` when given.
MaterialLibrary load_library(const std::filesystem::path& manifest,
                             const std::optional<std::vector<std::string>>& only = std::nullopt);

void write_table(const MaterialTable& table, const std::filesystem::path& csv);

/// Writes one CSV per material plus `manifest.csv` into `directory`.
std::filesystem::path write_library(const MaterialLibrary& library, const std::filesystem::path& directory);

}  // namespace filmgen::materials
