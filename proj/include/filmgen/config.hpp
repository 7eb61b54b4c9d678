#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "filmgen/finetune.hpp"
#include "filmgen/photometry.hpp"
#include "filmgen/policy.hpp"
#include "filmgen/ppo.hpp"
#include "filmgen/reward.hpp"

namespace filmgen {

/// Collected validation failures; what() lists every one of them.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> problems);
    [[nodiscard]] const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct FinetuneSettings {
    double lower_nm = 15.0;
    double upper_nm = 200.0;
    finetune::FinetuneOptions options;
    bool after_train = true;
};

struct PhotometrySettings {
    bool enabled = false;
    std::filesystem::path luminosity;
    photometry::EmitterSpec emitter;
    std::vector<double> view_factors{1.0};
    photometry::PhotometryGrid grid;
};

struct TaskConfig {
    std::filesystem::path source;  // file the config was read from
    std::string name;
    std::filesystem::path manifest;
    std::filesystem::path output_dir;
    std::optional<std::uint64_t> seed;
    Media media;
    policy::DesignVocabulary vocabulary;
    RewardSpec reward;
    policy::PolicyConfig policy;
    ppo::TrainConfig train;
    std::size_t checkpoint_interval = 0;  // epochs; 0 writes only the final checkpoint
    FinetuneSettings finetune;
    PhotometrySettings photometry;
};

/// Reads an INI file with sections [task], [materials], [media], [vocabulary],
/// [reward], [policy], [train], [finetune], [photometry]. Relative paths are
/// resolved against the config file's directory. Unknown keys are errors.
TaskConfig load_task_config(const std::filesystem::path& path);
TaskConfig parse_task_config(const std::string& text, const std::filesystem::path& base_dir);

/// Cross-checks the config against the material manifest.
void validate_against_library(const TaskConfig& config, const materials::MaterialLibrary& library);

/// Comma-separated list helpers shared with the command line.
std::vector<double> parse_number_list(const std::string& text);
std::vector<std::string> parse_name_list(const std::string& text);

}  // namespace filmgen
