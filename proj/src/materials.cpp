#include "filmgen/materials.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "filmgen/text_util.hpp"

namespace filmgen::materials {

namespace {

[[noreturn]] void fail_at(const std::filesystem::path& file, std::size_t line, const std::string& what) {
    throw MaterialError(file.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

MaterialTable::MaterialTable(std::string name, std::vector<Sample> samples)
    : name_(std::move(name)), samples_(std::move(samples)) {
    if (name_.empty()) throw MaterialError("material table has an empty name");
    if (samples_.size() < 2) throw MaterialError(name_ + ": at least two samples are required");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const auto& s = samples_[i];
        if (!std::isfinite(s.wavelength_nm) || !std::isfinite(s.n) || !std::isfinite(s.k)) {
            throw MaterialError(name_ + ": non-finite value in sample " + std::to_string(i));
        }
        if (s.wavelength_nm <= 0.0) throw MaterialError(name_ + ": wavelengths must be > 0");
        if (s.n <= 0.0) throw MaterialError(name_ + ": n must be > 0 (sample " + std::to_string(i) + ")");
        if (s.k < 0.0) throw MaterialError(name_ + ": k must be >= 0 (sample " + std::to_string(i) + ")");
        if (i > 0 && s.wavelength_nm <= samples_[i - 1].wavelength_nm) {
            throw MaterialError(name_ + ": wavelengths must be strictly increasing (sample " + std::to_string(i) + ")");
        }
    }
}

optics::ComplexIndex MaterialTable::index_at(double wavelength_nm, std::vector<RangeWarning>* warnings) const {
    if (!(wavelength_nm > 0.0)) throw MaterialError(name_ + ": query wavelength must be > 0");
    const auto& first = samples_.front();
    const auto& last = samples_.back();
    if (wavelength_nm <= first.wavelength_nm) {
        if (wavelength_nm < first.wavelength_nm && warnings) {
            warnings->push_back({name_, wavelength_nm, first.wavelength_nm});
        }
        return {first.n, first.k};
    }
    if (wavelength_nm >= last.wavelength_nm) {
        if (wavelength_nm > last.wavelength_nm && warnings) {
            warnings->push_back({name_, wavelength_nm, last.wavelength_nm});
        }
        return {last.n, last.k};
    }
    const auto hi = std::upper_bound(samples_.begin(), samples_.end(), wavelength_nm,
                                     [](double w, const Sample& s) { return w < s.wavelength_nm; });
    const auto lo = hi - 1;
    if (lo->wavelength_nm == wavelength_nm) return {lo->n, lo->k};
    const double t = (wavelength_nm - lo->wavelength_nm) / (hi->wavelength_nm - lo->wavelength_nm);
    return {lo->n + t * (hi->n - lo->n), std::max(0.0, lo->k + t * (hi->k - lo->k))};
}

void MaterialLibrary::add(MaterialTable table) {
    const std::string id = table.name();
    if (tables_.contains(id)) throw MaterialError("duplicate material id '" + id + "'");
    tables_.emplace(id, std::move(table));
}

const MaterialTable& MaterialLibrary::table(const std::string& id) const {
    const auto it = tables_.find(id);
    if (it == tables_.end()) throw MaterialError("unknown material '" + id + "'");
    return it->second;
}

std::vector<std::string> MaterialLibrary::ids() const {
    std::vector<std::string> out;
    out.reserve(tables_.size());
    for (const auto& [id, _] : tables_) out.push_back(id);
    return out;
}

optics::ComplexIndex MaterialLibrary::index_at(const std::string& id, double wavelength_nm,
                                               std::vector<RangeWarning>* warnings) const {
    return table(id).index_at(wavelength_nm, warnings);
}

MaterialTable load_table(const std::filesystem::path& csv, const std::string& name) {
    std::ifstream in(csv);
    if (!in) throw MaterialError(csv.string() + ": cannot open material file");
    std::string line;
    std::size_t lineno = 0;
    std::vector<Sample> samples;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto trimmed = text::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            if (trimmed != "wavelength_nm,n,k") fail_at(csv, lineno, "expected header 'wavelength_nm,n,k'");
            continue;
        }
        const auto fields = text::split(trimmed, ',');
        if (fields.size() != 3) fail_at(csv, lineno, "expected 3 comma-separated fields");
        Sample s;
        if (!text::parse_double(fields[0], s.wavelength_nm) || !text::parse_double(fields[1], s.n) ||
            !text::parse_double(fields[2], s.k)) {
            fail_at(csv, lineno, "malformed number");
        }
        if (s.k < 0.0) fail_at(csv, lineno, "negative extinction coefficient k");
        if (s.n <= 0.0) fail_at(csv, lineno, "refractive index n must be > 0");
        if (!samples.empty() && s.wavelength_nm <= samples.back().wavelength_nm) {
            fail_at(csv, lineno, "wavelengths must be strictly increasing");
        }
        samples.push_back(s);
    }
    if (!header_seen) throw MaterialError(csv.string() + ": empty material file");
    try {
        return MaterialTable(name, std::move(samples));
    } catch (const MaterialError& e) {
        throw MaterialError(csv.string() + ": " + e.what());
    }
}

MaterialLibrary load_library(const std::filesystem::path& manifest, const std::optional<std::vector<std::string>>& only) {
    std::ifstream in(manifest);
    if (!in) throw MaterialError(manifest.string() + ": cannot open material manifest");
    const auto base = manifest.parent_path();
    std::map<std::string, std::filesystem::path> listed;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto trimmed = text::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            if (!trimmed.starts_with("material,file")) fail_at(manifest, lineno, "expected header 'material,file[,source]'");
            continue;
        }
        const auto fields = text::split(trimmed, ',');
        if (fields.size() < 2) fail_at(manifest, lineno, "expected 'material,file'");
        const std::string id{text::trim(fields[0])};
        std::filesystem::path file{std::string(text::trim(fields[1]))};
        if (id.empty()) fail_at(manifest, lineno, "empty material id");
        if (listed.contains(id)) fail_at(manifest, lineno, "duplicate material id '" + id + "'");
        listed.emplace(id, file.is_absolute() ? file : base / file);
    }

    MaterialLibrary lib;
    if (only) {
        std::set<std::string> seen;
        for (const auto& id : *only) {
            if (!seen.insert(id).second) throw MaterialError("material '" + id + "' requested twice");
            const auto it = listed.find(id);
            if (it == listed.end()) throw MaterialError(manifest.string() + ": material '" + id + "' is not listed");
            lib.add(load_table(it->second, id));
        }
    } else {
        for (const auto& [id, path] : listed) lib.add(load_table(path, id));
    }
    return lib;
}

void write_table(const MaterialTable& table, const std::filesystem::path& csv) {
    std::ofstream out(csv);
    if (!out) throw MaterialError(csv.string() + ": cannot write material file");
    out << "wavelength_nm,n,k\n";
    for (const auto& s : table.samples()) {
        out << text::format_double(s.wavelength_nm) << ',' << text::format_double(s.n) << ','
            << text::format_double(s.k) << '\n';
    }
}

std::filesystem::path write_library(const MaterialLibrary& library, const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    const auto manifest = directory / "manifest.csv";
    std::ofstream out(manifest);
    if (!out) throw MaterialError(manifest.string() + ": cannot write manifest");
    out << "material,file\n";
    for (const auto& id : library.ids()) {
        const std::string file = id + ".csv";
        write_table(library.table(id), directory / file);
        out << id << ',' << file << '\n';
    }
    return manifest;
}

}  // namespace filmgen::materials
