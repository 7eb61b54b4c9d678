#include "filmgen/config.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "filmgen/io_util.hpp"
#include "filmgen/text_util.hpp"

namespace filmgen {

namespace pt = boost::property_tree;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string out = "invalid configuration:";
    for (const auto& p : problems) out += "\n  - " + p;
    return out;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"task", {"name", "seed", "output_dir"}},
        {"materials", {"manifest"}},
        {"media", {"ambient_n", "ambient_k", "substrate_n", "substrate_k"}},
        {"vocabulary", {"materials", "thicknesses_nm", "thickness_min_nm", "thickness_max_nm", "thickness_step_nm"}},
        {"reward",
         {"quantity", "wavelength_min_nm", "wavelength_max_nm", "wavelength_step_nm", "angles_deg", "polarization",
          "target", "target_value", "band_min_nm", "band_max_nm", "band_value", "outside_value"}},
        {"policy",
         {"embedding_size", "hidden_size", "head_hidden", "critic_hidden", "gating", "autoregressive",
          "mask_eos_at_start"}},
        {"train",
         {"epochs", "batch_steps", "max_length", "learning_rate", "gamma", "gae_lambda", "clip_epsilon",
          "update_epochs", "value_coef", "entropy_coef", "target_kl", "max_grad_norm", "normalize_advantages",
          "workers", "checkpoint_interval"}},
        {"finetune",
         {"lower_nm", "upper_nm", "memory", "gradient_tolerance", "max_iterations", "fd_step_nm", "first_step_nm",
          "after_train"}},
        {"photometry",
         {"luminosity", "power_W", "area_mm2", "view_factors", "t0_K", "wavelength_min_nm", "wavelength_max_nm",
          "wavelength_step_nm", "angle_nodes"}},
    };
    return keys;
}

class Reader {
public:
    Reader(const pt::ptree& tree, std::vector<std::string>& problems) : tree_(tree), problems_(problems) {}

    [[nodiscard]] bool has(const std::string& section, const std::string& key) const {
        return static_cast<bool>(tree_.get_optional<std::string>(pt::ptree::path_type(section + "." + key)));
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        auto v = tree_.get_optional<std::string>(pt::ptree::path_type(section + "." + key));
        if (!v) return std::nullopt;
        return std::string(text::trim(*v));
    }

    std::string text(const std::string& section, const std::string& key, const std::string& fallback) const {
        return raw(section, key).value_or(fallback);
    }

    std::string required(const std::string& section, const std::string& key) {
        auto v = raw(section, key);
        if (!v || v->empty()) {
            problems_.push_back("[" + section + "] " + key + " is required");
            return {};
        }
        return *v;
    }

    double number(const std::string& section, const std::string& key, double fallback) {
        auto v = raw(section, key);
        if (!v) return fallback;
        double out = 0.0;
        if (!text::parse_double(*v, out) || !std::isfinite(out)) {
            problems_.push_back("[" + section + "] " + key + ": '" + *v + "' is not a number");
            return fallback;
        }
        return out;
    }

    std::size_t count(const std::string& section, const std::string& key, std::size_t fallback) {
        auto v = raw(section, key);
        if (!v) return fallback;
        std::size_t out = 0;
        std::istringstream in(*v);
        if (v->empty() || (*v)[0] == '-' || !(in >> out) || !in.eof()) {
            problems_.push_back("[" + section + "] " + key + ": '" + *v + "' is not a non-negative integer");
            return fallback;
        }
        return out;
    }

    bool flag(const std::string& section, const std::string& key, bool fallback) {
        auto v = raw(section, key);
        if (!v) return fallback;
        if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
        if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
        problems_.push_back("[" + section + "] " + key + ": '" + *v + "' is not a boolean");
        return fallback;
    }

    std::vector<double> numbers(const std::string& section, const std::string& key, std::vector<double> fallback) {
        auto v = raw(section, key);
        if (!v) return fallback;
        try {
            return parse_number_list(*v);
        } catch (const std::invalid_argument& e) {
            problems_.push_back("[" + section + "] " + key + ": " + e.what());
            return fallback;
        }
    }

    void problem(std::string p) { problems_.push_back(std::move(p)); }

private:
    const pt::ptree& tree_;
    std::vector<std::string>& problems_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> out;
    for (auto cell : text::split(text, ',')) {
        cell = text::trim(cell);
        if (cell.empty()) continue;
        double v = 0.0;
        if (!text::parse_double(cell, v) || !std::isfinite(v)) {
            throw std::invalid_argument("'" + std::string(cell) + "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::string> parse_name_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto cell : text::split(text, ',')) {
        cell = text::trim(cell);
        if (!cell.empty()) out.emplace_back(cell);
    }
    return out;
}

TaskConfig parse_task_config(const std::string& text, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError({"line " + std::to_string(e.line()) + ": " + e.message()});
    }

    std::vector<std::string> problems;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            problems.push_back("key '" + section + "' outside any section");
            continue;
        }
        const auto it = known_keys().find(section);
        if (it == known_keys().end()) {
            problems.push_back("unknown section [" + section + "]");
            continue;
        }
        for (const auto& [key, value] : body) {
            if (!it->second.contains(key)) problems.push_back("[" + section + "] unknown key '" + key + "'");
        }
    }

    Reader r(tree, problems);
    TaskConfig c;

    // [task]
    c.name = r.text("task", "name", "task");
    c.output_dir = resolve(base_dir, r.text("task", "output_dir", "runs"));
    if (auto seed = r.raw("task", "seed"); seed && !seed->empty()) {
        std::uint64_t v = 0;
        std::istringstream in(*seed);
        if ((*seed)[0] == '-' || !(in >> v) || !in.eof()) {
            r.problem("[task] seed: '" + *seed + "' is not a non-negative integer");
        } else {
            c.seed = v;
        }
    }

    // [materials]
    if (auto m = r.required("materials", "manifest"); !m.empty()) c.manifest = resolve(base_dir, m);

    // [media]
    c.media.ambient = {r.number("media", "ambient_n", 1.0), r.number("media", "ambient_k", 0.0)};
    c.media.substrate = {r.number("media", "substrate_n", 1.5), r.number("media", "substrate_k", 0.0)};
    try {
        optics::validate_index(c.media.ambient, "ambient");
        optics::validate_index(c.media.substrate, "substrate");
        if (c.media.ambient.k != 0.0) r.problem("[media] ambient must be lossless (ambient_k = 0)");
    } catch (const optics::OpticsError& e) {
        r.problem(std::string("[media] ") + e.what());
    }

    // [vocabulary]
    c.vocabulary.materials = parse_name_list(r.required("vocabulary", "materials"));
    if (r.has("vocabulary", "thicknesses_nm")) {
        c.vocabulary.thicknesses_nm = r.numbers("vocabulary", "thicknesses_nm", {});
    } else {
        const double lo = r.number("vocabulary", "thickness_min_nm", 15.0);
        const double hi = r.number("vocabulary", "thickness_max_nm", 200.0);
        const double step = r.number("vocabulary", "thickness_step_nm", 5.0);
        try {
            c.vocabulary.thicknesses_nm = policy::DesignVocabulary::thickness_lattice(lo, hi, step);
        } catch (const policy::PolicyError& e) {
            r.problem(std::string("[vocabulary] ") + e.what());
        }
    }
    try {
        c.vocabulary.validate();
    } catch (const policy::PolicyError& e) {
        r.problem(std::string("[vocabulary] ") + e.what());
    }

    // [reward]
    try {
        c.reward.quantity = optics::quantity_from_string(r.text("reward", "quantity", "A"));
        c.reward.grid.polarization = optics::polarization_from_string(r.text("reward", "polarization", "unpolarized"));
        c.reward.grid.wavelengths_nm = linear_grid(r.number("reward", "wavelength_min_nm", 400.0),
                                                   r.number("reward", "wavelength_max_nm", 2000.0),
                                                   r.number("reward", "wavelength_step_nm", 5.0));
        c.reward.grid.angles_rad.clear();
        for (double deg : r.numbers("reward", "angles_deg", {0.0})) {
            c.reward.grid.angles_rad.push_back(deg * std::numbers::pi / 180.0);
        }
        const std::string target = r.text("reward", "target", "constant");
        if (target == "constant") {
            c.reward = RewardSpec::constant(c.reward.grid, c.reward.quantity, r.number("reward", "target_value", 1.0));
        } else if (target == "band") {
            c.reward = RewardSpec::band(c.reward.grid, c.reward.quantity, r.number("reward", "band_min_nm", 0.0),
                                        r.number("reward", "band_max_nm", 0.0), r.number("reward", "band_value", 0.0),
                                        r.number("reward", "outside_value", 1.0));
        } else {
            r.problem("[reward] target must be 'constant' or 'band', got '" + target + "'");
        }
    } catch (const optics::OpticsError& e) {
        r.problem(std::string("[reward] ") + e.what());
    }

    // [policy]
    c.policy.embedding_size = r.count("policy", "embedding_size", c.policy.embedding_size);
    c.policy.hidden_size = r.count("policy", "hidden_size", c.policy.hidden_size);
    c.policy.head_hidden = r.count("policy", "head_hidden", c.policy.head_hidden);
    if (r.has("policy", "critic_hidden")) {
        c.policy.critic_hidden.clear();
        for (double v : r.numbers("policy", "critic_hidden", {})) {
            if (v < 1.0 || v != std::floor(v)) r.problem("[policy] critic_hidden entries must be positive integers");
            else c.policy.critic_hidden.push_back(static_cast<std::size_t>(v));
        }
    }
    c.policy.variant.gating = r.flag("policy", "gating", true);
    c.policy.variant.autoregressive = r.flag("policy", "autoregressive", true);
    c.policy.mask_eos_at_start = r.flag("policy", "mask_eos_at_start", true);
    if (c.policy.embedding_size == 0 || c.policy.hidden_size == 0 || c.policy.head_hidden == 0) {
        r.problem("[policy] sizes must be positive");
    }

    // [train]
    auto& t = c.train;
    t.epochs = r.count("train", "epochs", t.epochs);
    t.batch_steps = r.count("train", "batch_steps", t.batch_steps);
    t.max_length = r.count("train", "max_length", t.max_length);
    t.adam.learning_rate = r.number("train", "learning_rate", t.adam.learning_rate);
    t.gamma = r.number("train", "gamma", t.gamma);
    t.gae_lambda = r.number("train", "gae_lambda", t.gae_lambda);
    t.clip_epsilon = r.number("train", "clip_epsilon", t.clip_epsilon);
    t.update_epochs = r.count("train", "update_epochs", t.update_epochs);
    t.value_coef = r.number("train", "value_coef", t.value_coef);
    t.entropy_coef = r.number("train", "entropy_coef", t.entropy_coef);
    t.target_kl = r.number("train", "target_kl", t.target_kl);
    t.max_grad_norm = r.number("train", "max_grad_norm", t.max_grad_norm);
    t.normalize_advantages = r.flag("train", "normalize_advantages", t.normalize_advantages);
    t.workers = r.count("train", "workers", t.workers);
    c.checkpoint_interval = r.count("train", "checkpoint_interval", 0);
    try {
        t.validate();
    } catch (const ppo::TrainError& e) {
        r.problem(std::string("[train] ") + e.what());
    }

    // [finetune]
    auto& f = c.finetune;
    f.lower_nm = r.number("finetune", "lower_nm", f.lower_nm);
    f.upper_nm = r.number("finetune", "upper_nm", f.upper_nm);
    f.options.memory = r.count("finetune", "memory", f.options.memory);
    f.options.gradient_tolerance = r.number("finetune", "gradient_tolerance", f.options.gradient_tolerance);
    f.options.max_iterations = r.count("finetune", "max_iterations", f.options.max_iterations);
    f.options.fd_step_nm = r.number("finetune", "fd_step_nm", f.options.fd_step_nm);
    f.options.first_step_nm = r.number("finetune", "first_step_nm", f.options.first_step_nm);
    f.after_train = r.flag("finetune", "after_train", f.after_train);
    if (!(f.lower_nm > 0.0) || f.upper_nm < f.lower_nm) r.problem("[finetune] bounds must satisfy 0 < lower <= upper");
    if (f.options.memory == 0) r.problem("[finetune] memory must be >= 1");
    if (!(f.options.fd_step_nm > 0.0)) r.problem("[finetune] fd_step_nm must be > 0");

    // [photometry]
    auto& p = c.photometry;
    p.enabled = tree.get_child_optional("photometry").has_value();
    if (p.enabled) {
        if (auto lum = r.required("photometry", "luminosity"); !lum.empty()) p.luminosity = resolve(base_dir, lum);
        p.emitter.power_W = r.number("photometry", "power_W", p.emitter.power_W);
        p.emitter.area_mm2 = r.number("photometry", "area_mm2", p.emitter.area_mm2);
        p.emitter.t0_K = r.number("photometry", "t0_K", p.emitter.t0_K);
        p.view_factors = r.numbers("photometry", "view_factors", p.view_factors);
        p.grid.lo_nm = r.number("photometry", "wavelength_min_nm", p.grid.lo_nm);
        p.grid.hi_nm = r.number("photometry", "wavelength_max_nm", p.grid.hi_nm);
        p.grid.step_nm = r.number("photometry", "wavelength_step_nm", p.grid.step_nm);
        p.grid.angle_nodes = r.count("photometry", "angle_nodes", p.grid.angle_nodes);
        if (p.view_factors.empty()) r.problem("[photometry] view_factors is empty");
        for (double vf : p.view_factors) {
            auto spec = p.emitter;
            spec.view_factor = vf;
            try {
                spec.validate();
            } catch (const photometry::PhotometryError& e) {
                r.problem(std::string("[photometry] ") + e.what());
            }
        }
        if (p.grid.angle_nodes == 0) r.problem("[photometry] angle_nodes must be >= 1");
        if (!(p.grid.step_nm > 0.0) || !(p.grid.lo_nm > 0.0) || p.grid.hi_nm <= p.grid.lo_nm) {
            r.problem("[photometry] invalid wavelength grid");
        }
    }

    if (!problems.empty()) throw ConfigError(std::move(problems));
    return c;
}

TaskConfig load_task_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const std::exception& e) {
        throw ConfigError({e.what()});
    }
    auto c = parse_task_config(text, path.parent_path());
    c.source = path;
    return c;
}

void validate_against_library(const TaskConfig& config, const materials::MaterialLibrary& library) {
    std::vector<std::string> problems;
    for (const auto& m : config.vocabulary.materials) {
        if (!library.contains(m)) {
            problems.push_back("[vocabulary] material '" + m + "' is not listed in " + config.manifest.string());
        }
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
}

}  // namespace filmgen
