// filmgen: train, evaluate, finetune and score multilayer thin-film designs.
//
//   filmgen train      --config task.ini [--seed N] [--workers N] [--out DIR]
//   filmgen eval       --config task.ini --structure design.json [--angles 0,30,60] [--out DIR]
//   filmgen finetune   --config task.ini --structure design.json [--out DIR]
//   filmgen photometry --config task.ini --structure design.json [--out DIR]
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 failure while running.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "filmgen/config.hpp"
#include "filmgen/finetune.hpp"
#include "filmgen/io_util.hpp"
#include "filmgen/materials.hpp"
#include "filmgen/photometry.hpp"
#include "filmgen/ppo.hpp"
#include "filmgen/reward.hpp"
#include "filmgen/text_util.hpp"

namespace fs = std::filesystem;
using namespace filmgen;

namespace {

/// Anything thrown while reading inputs is reported as a validation failure.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    fs::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<fs::path> out;
    fs::path structure;
    std::string angles;
};

template <class F>
auto as_input(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const InputError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
}

struct Inputs {
    TaskConfig config;
    materials::MaterialLibrary library;
};

Inputs load_inputs(const Common& opts) {
    return as_input([&] {
        Inputs in{load_task_config(opts.config), {}};
        if (opts.workers) in.config.train.workers = *opts.workers;
        if (in.config.train.workers == 0) throw InputError("--workers must be >= 1");
        in.library = materials::load_library(in.config.manifest, in.config.vocabulary.materials);
        validate_against_library(in.config, in.library);
        return in;
    });
}

/// Loads a structure and the extra materials it needs beyond the vocabulary.
Structure load_structure(const Common& opts, Inputs& in) {
    return as_input([&] {
        if (opts.structure.empty()) throw InputError("--structure is required");
        auto s = read_structure(opts.structure);
        std::vector<std::string> missing;
        for (const auto& l : s.layers) {
            if (!in.library.contains(l.material) &&
                std::find(missing.begin(), missing.end(), l.material) == missing.end()) {
                missing.push_back(l.material);
            }
        }
        if (!missing.empty()) {
            auto extra = materials::load_library(in.config.manifest, missing);
            for (const auto& id : missing) in.library.add(extra.table(id));
        }
        return s;
    });
}

std::uint64_t resolve_seed(const Common& opts, const TaskConfig& config) {
    if (opts.seed) return *opts.seed;
    if (config.seed) return *config.seed;
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

fs::path make_run_dir(const Common& opts, const TaskConfig& config, const std::string& command) {
    return as_input([&] {
        fs::path dir;
        if (opts.out) {
            dir = *opts.out;
        } else {
            const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
            std::tm tm{};
            localtime_r(&now, &tm);
            std::ostringstream name;
            name << config.name << "-" << command << "-" << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-" << ::getpid();
            dir = config.output_dir / name.str();
        }
        if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
            throw InputError("output directory " + dir.string() + " exists and is not empty");
        }
        fs::create_directories(dir);
        io::write_text_atomic(dir / "config.ini", io::read_text(config.source));
        return dir;
    });
}

void write_json(const fs::path& path, const nlohmann::json& j) { io::write_text_atomic(path, j.dump(2) + "\n"); }

void report_warnings(const std::vector<materials::RangeWarning>& warnings) {
    for (const auto& w : warnings) {
        std::cerr << "warning: " << w.material << " has no data at " << w.requested_nm << " nm; using the value at "
                  << w.clamped_to_nm << " nm\n";
    }
}

nlohmann::json warnings_json(const std::vector<materials::RangeWarning>& warnings) {
    auto out = nlohmann::json::array();
    for (const auto& w : warnings) {
        out.push_back({{"material", w.material}, {"requested_nm", w.requested_nm}, {"clamped_to_nm", w.clamped_to_nm}});
    }
    return out;
}

finetune::FinetuneResult refine(const TaskConfig& config, const RewardModel& reward, const Structure& s) {
    finetune::FinetuneProblem problem;
    problem.structure = s;
    problem.lower_nm = config.finetune.lower_nm;
    problem.upper_nm = config.finetune.upper_nm;
    problem.reward = [&](const Structure& x) { return reward(x); };
    return finetune::finetune(problem, config.finetune.options);
}

nlohmann::json finetune_json(const finetune::FinetuneResult& r) {
    return {{"reward_before", r.reward_before}, {"reward_after", r.reward_after},
            {"delta", r.reward_after - r.reward_before}, {"improved", r.improved},
            {"iterations", r.iterations},         {"evaluations", r.evaluations},
            {"stop_reason", r.stop_reason},       {"structure", to_json(r.structure)}};
}

std::vector<std::string> structure_materials(const Structure& s) {
    std::vector<std::string> ids;
    for (const auto& l : s.layers) ids.push_back(l.material);
    return ids;
}

// ---------------------------------------------------------------------------

int cmd_train(const Common& opts) {
    auto in = load_inputs(opts);
    const auto& config = in.config;
    const std::uint64_t seed = resolve_seed(opts, config);
    auto train_config = config.train;
    train_config.seed = seed;
    as_input([&] { train_config.validate(); });
    const auto dir = make_run_dir(opts, config, "train");

    std::cout << "run directory: " << dir.string() << "\nseed: " << seed << "\n";
    write_json(dir / "run.json", {{"command", "train"},
                                  {"task", config.name},
                                  {"seed", seed},
                                  {"workers", train_config.workers},
                                  {"config", config.source.string()}});

    const RewardModel reward(in.library, config.vocabulary.materials, config.reward, config.media);
    report_warnings(reward.evaluator().warnings());
    ppo::Trainer trainer(config.vocabulary, config.policy, train_config,
                         [&](const Structure& s) { return reward(s); });

    auto save_state = [&] {
        io::write_text_atomic(dir / "trace.csv", ppo::trace_to_csv(trainer.trace()));
        io::write_text_atomic(dir / "checkpoint.json", trainer.checkpoint().dump() + "\n");
    };
    const auto start = std::chrono::steady_clock::now();
    while (!trainer.done()) {
        const auto& row = trainer.run_epoch();
        const std::size_t done = trainer.epoch();
        if (done % 10 == 0 || trainer.done()) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cerr << "epoch " << done << "/" << train_config.epochs << "  mean " << std::fixed
                      << std::setprecision(4) << row.mean_reward << "  best " << row.best_so_far << "  kl "
                      << std::setprecision(5) << row.approx_kl << "  " << std::setprecision(1) << secs << " s\n";
            std::cerr.unsetf(std::ios::floatfield);
        }
        if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0) save_state();
    }
    save_state();

    const auto& best = trainer.best();
    nlohmann::json summary = {{"seed", seed}, {"epochs", trainer.epoch()}};
    if (!best.empty()) {
        write_structure(dir / "best_structure.json", *best.structure);
        summary["best"] = {{"reward", best.reward}, {"epoch", best.epoch}, {"structure", to_json(*best.structure)}};
        std::cout << "best reward " << best.reward << " (epoch " << best.epoch << "): " << best.structure->describe()
                  << "\n";
        if (config.finetune.after_train) {
            const auto ft = refine(config, reward, *best.structure);
            write_structure(dir / "finetuned_structure.json", ft.structure);
            summary["finetune"] = finetune_json(ft);
            std::cout << "finetuned reward " << ft.reward_after << ": " << ft.structure.describe() << "\n";
        }
    }
    write_json(dir / "summary.json", summary);
    return 0;
}

int cmd_eval(const Common& opts) {
    auto in = load_inputs(opts);
    const auto structure = load_structure(opts, in);
    auto spec = in.config.reward;
    if (!opts.angles.empty()) {
        as_input([&] {
            const auto degs = parse_number_list(opts.angles);
            spec.grid.angles_rad.clear();
            for (double d : degs) spec.grid.angles_rad.push_back(d * std::numbers::pi / 180.0);
            spec = RewardSpec{spec.grid, spec.quantity, {}};
            // Targets are defined per wavelength; replicate them across the requested angles.
            const auto& base = in.config.reward;
            for (std::size_t i = 0; i < spec.grid.wavelengths_nm.size(); ++i) {
                spec.target.insert(spec.target.end(), spec.grid.angles_rad.size(), base.target[i * base.grid.angles_rad.size()]);
            }
            spec.validate();
        });
    }
    const auto dir = make_run_dir(opts, in.config, "eval");

    const RewardModel model(in.library, structure_materials(structure), spec, in.config.media);
    report_warnings(model.evaluator().warnings());
    const auto result = model.spectrum(structure);

    std::string csv = "wavelength_nm,angle_deg,R,T,A\n";
    for (std::size_t i = 0; i < result.n_wavelengths; ++i) {
        for (std::size_t j = 0; j < result.n_angles; ++j) {
            const std::size_t o = result.offset(i, j);
            csv += text::format_double(spec.grid.wavelengths_nm[i]) + "," +
                   text::format_double(spec.grid.angles_rad[j] * 180.0 / std::numbers::pi) + "," +
                   text::format_double(result.R[o]) + "," + text::format_double(result.T[o]) + "," +
                   text::format_double(result.A[o]) + "\n";
        }
    }
    io::write_text_atomic(dir / "spectrum.csv", csv);

    const nlohmann::json metrics = {
        {"layers", structure.size()},
        {"total_thickness_nm", structure.total_thickness_nm()},
        {"average_absorption", optics::average_quantity(result, optics::Quantity::A)},
        {"average_reflectance", optics::average_quantity(result, optics::Quantity::R)},
        {"average_transmittance", optics::average_quantity(result, optics::Quantity::T)},
        {"reward", spectral_reward(result, spec)},
        {"quantity", optics::to_string(spec.quantity)},
        {"n_wavelengths", result.n_wavelengths},
        {"n_angles", result.n_angles},
        {"range_warnings", warnings_json(model.evaluator().warnings())}};
    write_json(dir / "metrics.json", metrics);
    std::cout << metrics.dump(2) << "\n";
    return 0;
}

int cmd_finetune(const Common& opts) {
    auto in = load_inputs(opts);
    const auto structure = load_structure(opts, in);
    const RewardModel reward(in.library, structure_materials(structure), in.config.reward, in.config.media);
    report_warnings(reward.evaluator().warnings());
    // Reject out-of-bounds input before creating the run directory.
    as_input([&] {
        finetune::FinetuneProblem p{structure, in.config.finetune.lower_nm, in.config.finetune.upper_nm,
                                    [](const Structure&) { return 0.0; }};
        p.validate();
    });
    const auto dir = make_run_dir(opts, in.config, "finetune");

    const auto ft = refine(in.config, reward, structure);
    write_structure(dir / "finetuned_structure.json", ft.structure);
    auto report = finetune_json(ft);
    report["input"] = to_json(structure);
    write_json(dir / "finetune.json", report);
    std::cout << "reward " << ft.reward_before << " -> " << ft.reward_after << " (" << ft.stop_reason << ")\n"
              << ft.structure.describe() << "\n";
    return 0;
}

int cmd_photometry(const Common& opts) {
    auto in = load_inputs(opts);
    const auto structure = load_structure(opts, in);
    const auto& ph = in.config.photometry;
    if (!ph.enabled) throw InputError("config has no [photometry] section");
    const auto luminosity = as_input([&] { return photometry::load_luminosity(ph.luminosity); });
    const auto dir = make_run_dir(opts, in.config, "photometry");

    const auto results =
        photometry::evaluate_emitter(structure, in.library, in.config.media, ph.emitter, ph.view_factors, luminosity, ph.grid);
    if (!results.empty()) report_warnings(results.front().warnings);
    auto reports = nlohmann::json::array();
    for (const auto& r : results) {
        std::cout << "f = " << r.view_factor << ": t = " << r.t_solved_K << " K, chi = " << r.chi << "\n";
        reports.push_back(photometry::to_json(r));
    }
    write_json(dir / "photometry.json", reports);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilayer thin-film design by reinforcement learning"};
    app.require_subcommand(1);
    Common opts;

    auto add_common = [&](CLI::App* sub, bool needs_structure) {
        sub->add_option("--config", opts.config, "Task configuration (INI)")->required();
        sub->add_option("--out", opts.out, "Run directory (default: <output_dir>/<task>-<command>-<time>)");
        if (needs_structure) sub->add_option("--structure", opts.structure, "Design JSON")->required();
    };
    auto* train = app.add_subcommand("train", "Train the generator and record the best design");
    add_common(train, false);
    train->add_option("--seed", opts.seed, "Master seed (default: config value, else random)");
    train->add_option("--workers", opts.workers, "Rollout threads; 1 is bit-reproducible");
    auto* eval = app.add_subcommand("eval", "Spectrum and metrics of a design");
    add_common(eval, true);
    eval->add_option("--angles", opts.angles, "Incidence angles in degrees, comma-separated");
    auto* ft = app.add_subcommand("finetune", "Refine layer thicknesses of a design");
    add_common(ft, true);
    auto* photo = app.add_subcommand("photometry", "Emitter temperature and visible enhancement of a filter");
    add_common(photo, true);
    for (auto* sub : {eval, ft, photo}) {
        sub->add_option("--workers", opts.workers, "Accepted for symmetry; evaluation is single-threaded");
        sub->add_option("--seed", opts.seed, "Unused by this command");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(opts);
        if (eval->parsed()) return cmd_eval(opts);
        if (ft->parsed()) return cmd_finetune(opts);
        if (photo->parsed()) return cmd_photometry(opts);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
