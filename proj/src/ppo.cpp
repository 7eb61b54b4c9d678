#include "filmgen/ppo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "filmgen/text_util.hpp"

namespace filmgen::ppo {

void TrainConfig::validate() const {
    if (max_length == 0) throw TrainError("max_length must be >= 1");
    if (batch_steps < max_length) throw TrainError("batch_steps must be >= max_length");
    if (gamma != 1.0) throw TrainError("gamma must be 1 (terminal-only reward)");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw TrainError("gae_lambda must lie in [0, 1]");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw TrainError("clip_epsilon must lie in (0, 1)");
    if (update_epochs == 0) throw TrainError("update_epochs must be >= 1");
    if (!(adam.learning_rate > 0.0)) throw TrainError("learning rate must be > 0");
    if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0)) throw TrainError("loss coefficients must be >= 0");
    if (!(max_grad_norm > 0.0)) throw TrainError("max_grad_norm must be > 0");
    if (workers == 0) throw TrainError("workers must be >= 1");
}

// ---------------------------------------------------------------------------

EpisodeBatch collect_batch(const policy::Generator& generator, const TrainConfig& config, const RewardFn& reward,
                           nn::Rng& rng, std::span<nn::Rng> worker_rngs) {
    EpisodeBatch batch;
    if (worker_rngs.size() <= 1) {
        nn::Rng& r = worker_rngs.empty() ? rng : worker_rngs.front();
        while (batch.total_steps < config.batch_steps) {
            auto ep = policy::generate_episode(generator, config.max_length, r);
            ep.reward = reward(policy::structure_from_episode(ep, generator.vocabulary()));
            batch.total_steps += ep.steps.size();
            batch.episodes.push_back(std::move(ep));
        }
        return batch;
    }

    std::atomic<std::size_t> steps{0};
    std::mutex lock;
    std::exception_ptr failure;
    std::vector<std::jthread> threads;
    for (auto& wrng : worker_rngs) {
        threads.emplace_back([&, r = &wrng] {
            try {
                while (steps.load() < config.batch_steps) {
                    auto ep = policy::generate_episode(generator, config.max_length, *r);
                    steps += ep.steps.size();
                    ep.reward = reward(policy::structure_from_episode(ep, generator.vocabulary()));
                    std::lock_guard g(lock);
                    batch.episodes.push_back(std::move(ep));
                }
            } catch (...) {
                std::lock_guard g(lock);
                if (!failure) failure = std::current_exception();
                steps = config.batch_steps;
            }
        });
    }
    threads.clear();
    if (failure) std::rethrow_exception(failure);
    for (const auto& ep : batch.episodes) batch.total_steps += ep.steps.size();
    return batch;
}

Advantages gae_advantages(std::span<const double> values, double terminal_reward, double gamma, double lambda) {
    if (values.empty()) throw TrainError("GAE needs at least one step");
    const std::size_t n = values.size();
    Advantages out;
    out.advantages.resize(n);
    out.returns.resize(n);
    double running = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double r = (t + 1 == n) ? terminal_reward : 0.0;
        const double next_value = (t + 1 == n) ? 0.0 : values[t + 1];
        const double delta = r + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        out.advantages[t] = running;
        out.returns[t] = running + values[t];
    }
    return out;
}

BatchTargets prepare_targets(const EpisodeBatch& batch, const TrainConfig& config) {
    BatchTargets t;
    std::vector<double> values;
    for (const auto& ep : batch.episodes) {
        values.clear();
        for (const auto& s : ep.steps) {
            values.push_back(s.value);
            t.old_log_probs.push_back(s.log_prob());
        }
        auto adv = gae_advantages(values, ep.reward, config.gamma, config.gae_lambda);
        t.advantages.insert(t.advantages.end(), adv.advantages.begin(), adv.advantages.end());
        t.returns.insert(t.returns.end(), adv.returns.begin(), adv.returns.end());
    }
    if (config.normalize_advantages && !t.advantages.empty()) {
        const double n = static_cast<double>(t.advantages.size());
        const double mean = std::accumulate(t.advantages.begin(), t.advantages.end(), 0.0) / n;
        double var = 0.0;
        for (double a : t.advantages) var += (a - mean) * (a - mean);
        const double sd = std::sqrt(var / n);
        for (double& a : t.advantages) a = (a - mean) / (sd + 1e-8);
    }
    return t;
}

// ---------------------------------------------------------------------------

LossTerms ppo_loss(policy::Generator& generator, const EpisodeBatch& batch, const BatchTargets& targets,
                   const TrainConfig& config, bool accumulate) {
    std::size_t n = 0;
    for (const auto& ep : batch.episodes) n += ep.steps.size();
    if (n == 0) throw TrainError("empty batch");
    if (targets.advantages.size() != n || targets.returns.size() != n || targets.old_log_probs.size() != n) {
        throw TrainError("batch targets do not match the batch");
    }
    const double inv = 1.0 / static_cast<double>(n);
    const double eps = config.clip_epsilon;

    LossTerms terms;
    std::size_t clipped = 0;
    std::size_t k = 0;
    std::vector<policy::StepGradient> grads;
    for (const auto& ep : batch.episodes) {
        const policy::EpisodeTape tape(generator, ep);
        const auto& steps = tape.steps();
        grads.assign(steps.size(), {});
        for (std::size_t t = 0; t < steps.size(); ++t, ++k) {
            const auto& s = steps[t];
            const double adv = targets.advantages[k];
            const double log_ratio = s.log_prob() - targets.old_log_probs[k];
            const double ratio = std::exp(log_ratio);
            const double clipped_ratio = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
            const double unclipped_obj = ratio * adv;
            const double clipped_obj = clipped_ratio * adv;
            const double surrogate = std::min(unclipped_obj, clipped_obj);
            const double verr = s.value - targets.returns[k];

            terms.surrogate += surrogate * inv;
            terms.value_loss += verr * verr * inv;
            terms.entropy += s.entropy * inv;
            terms.approx_kl += ((ratio - 1.0) - log_ratio) * inv;
            if (std::abs(ratio - 1.0) > eps) ++clipped;

            // The clipped branch is flat in theta, so it passes no gradient when it is the minimum.
            const double dsurr_dlogp = (clipped_obj < unclipped_obj) ? 0.0 : unclipped_obj;
            grads[t].log_prob = -dsurr_dlogp * inv;
            grads[t].value = config.value_coef * 2.0 * verr * inv;
            grads[t].entropy = -config.entropy_coef * inv;
        }
        if (accumulate) tape.backward(generator, grads);
    }
    terms.clip_fraction = static_cast<double>(clipped) * inv;
    terms.total = -terms.surrogate + config.value_coef * terms.value_loss - config.entropy_coef * terms.entropy;
    return terms;
}

UpdateStats ppo_update(policy::Generator& generator, nn::Adam& optimizer, const EpisodeBatch& batch,
                       const TrainConfig& config) {
    const auto targets = prepare_targets(batch, config);
    auto params = generator.parameters();
    UpdateStats stats;
    for (std::size_t e = 0; e < config.update_epochs; ++e) {
        generator.zero_grad();
        const auto terms = ppo_loss(generator, batch, targets, config, true);
        if (!std::isfinite(terms.total)) {
            std::ostringstream msg;
            msg << "non-finite PPO loss at update epoch " << e << " (surrogate " << terms.surrogate << ", value "
                << terms.value_loss << ", entropy " << terms.entropy << ")";
            throw TrainError(msg.str());
        }
        if (e == 0) stats.first = terms;
        stats.last = terms;
        if (e > 0 && config.target_kl > 0.0 && terms.approx_kl > config.target_kl) {
            stats.early_stopped = true;
            break;
        }
        stats.grad_norm = nn::clip_grad_norm(params, config.max_grad_norm);
        optimizer.step(params);
        stats.epochs_run = e + 1;
    }
    generator.zero_grad();
    return stats;
}

// ---------------------------------------------------------------------------

bool BestBuffer::offer(const Structure& candidate, double candidate_reward, std::size_t candidate_epoch) {
    if (!empty() && !(candidate_reward > reward)) return false;
    structure = candidate;
    reward = candidate_reward;
    epoch = candidate_epoch;
    return true;
}

std::string trace_csv_header() {
    return "epoch,mean_reward,max_reward,best_so_far,clip_fraction,approx_kl,episodes,mean_layers";
}

std::string trace_csv_row(const TraceRow& r) {
    using text::format_double;
    return std::to_string(r.epoch) + "," + format_double(r.mean_reward) + "," + format_double(r.max_reward) + "," +
           format_double(r.best_so_far) + "," + format_double(r.clip_fraction) + "," + format_double(r.approx_kl) +
           "," + std::to_string(r.episodes) + "," + format_double(r.mean_layers);
}

std::string trace_to_csv(std::span<const TraceRow> rows) {
    std::string out = trace_csv_header() + "\n";
    for (const auto& r : rows) out += trace_csv_row(r) + "\n";
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<nn::Rng> make_worker_rngs(std::uint64_t seed, std::size_t workers) {
    std::vector<nn::Rng> out;
    if (workers <= 1) return out;
    for (std::size_t w = 0; w < workers; ++w) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(w + 1)};
        out.emplace_back(seq);
    }
    return out;
}

nlohmann::json row_to_json(const TraceRow& r) {
    return {{"epoch", r.epoch},
            {"mean_reward", r.mean_reward},
            {"max_reward", r.max_reward},
            {"best_so_far", r.best_so_far},
            {"clip_fraction", r.clip_fraction},
            {"approx_kl", r.approx_kl},
            {"episodes", r.episodes},
            {"mean_layers", r.mean_layers}};
}

TraceRow row_from_json(const nlohmann::json& j) {
    TraceRow r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.max_reward = j.at("max_reward").get<double>();
    r.best_so_far = j.at("best_so_far").get<double>();
    r.clip_fraction = j.at("clip_fraction").get<double>();
    r.approx_kl = j.at("approx_kl").get<double>();
    r.episodes = j.at("episodes").get<std::size_t>();
    r.mean_layers = j.at("mean_layers").get<double>();
    return r;
}

}  // namespace

Trainer::Trainer(policy::DesignVocabulary vocabulary, policy::PolicyConfig policy_config, TrainConfig config,
                 RewardFn reward)
    : config_((config.validate(), std::move(config))),
      reward_(std::move(reward)),
      rng_(config_.seed),
      worker_rngs_(make_worker_rngs(config_.seed, config_.workers)),
      generator_(std::move(vocabulary), std::move(policy_config), rng_) {
    if (!reward_) throw TrainError("no reward function");
    optimizer_ = nn::Adam(generator_.parameters(), config_.adam);
}

const TraceRow& Trainer::run_epoch() {
    if (done()) throw TrainError("training already finished");
    auto batch = collect_batch(generator_, config_, reward_, rng_, worker_rngs_);

    TraceRow row;
    row.epoch = epoch_;
    row.episodes = batch.episodes.size();
    row.max_reward = -1.0;
    const policy::Episode* top = nullptr;
    double reward_sum = 0.0;
    double layer_sum = 0.0;
    for (const auto& ep : batch.episodes) {
        if (!std::isfinite(ep.reward)) throw TrainError("non-finite reward in epoch " + std::to_string(epoch_));
        reward_sum += ep.reward;
        layer_sum += static_cast<double>(ep.layer_count());
        if (ep.reward > row.max_reward) {
            row.max_reward = ep.reward;
            top = &ep;
        }
    }
    row.mean_reward = reward_sum / static_cast<double>(row.episodes);
    row.mean_layers = layer_sum / static_cast<double>(row.episodes);
    best_.offer(policy::structure_from_episode(*top, generator_.vocabulary()), top->reward, epoch_);
    row.best_so_far = best_.reward;

    const auto stats = ppo_update(generator_, optimizer_, batch, config_);
    row.clip_fraction = stats.last.clip_fraction;
    row.approx_kl = stats.last.approx_kl;

    trace_.push_back(row);
    ++epoch_;
    return trace_.back();
}

nlohmann::json Trainer::checkpoint() const {
    nlohmann::json j;
    j["format"] = "filmgen-checkpoint/1";
    j["epoch"] = epoch_;
    j["parameters"] = nn::tensors_to_json(generator_.parameters());
    j["optimizer"] = optimizer_.to_json();
    j["rng"] = nn::rng_state(rng_);
    auto workers = nlohmann::json::array();
    for (const auto& r : worker_rngs_) workers.push_back(nn::rng_state(r));
    j["worker_rngs"] = workers;
    nlohmann::json best = {{"reward", best_.reward}, {"epoch", best_.epoch}};
    best["structure"] = best_.structure ? to_json(*best_.structure) : nlohmann::json(nullptr);
    j["best"] = best;
    auto rows = nlohmann::json::array();
    for (const auto& r : trace_) rows.push_back(row_to_json(r));
    j["trace"] = rows;
    return j;
}

void Trainer::restore(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "filmgen-checkpoint/1") throw TrainError("unknown checkpoint format");
        const auto workers = j.at("worker_rngs");
        if (workers.size() != worker_rngs_.size()) throw TrainError("checkpoint was written with a different worker count");
        nn::tensors_from_json(j.at("parameters"), generator_.parameters());
        optimizer_.from_json(j.at("optimizer"));
        nn::restore_rng(rng_, j.at("rng").get<std::string>());
        for (std::size_t w = 0; w < workers.size(); ++w) nn::restore_rng(worker_rngs_[w], workers[w].get<std::string>());
        const auto& best = j.at("best");
        best_ = {};
        if (!best.at("structure").is_null()) {
            best_.structure = structure_from_json(best.at("structure"));
            best_.reward = best.at("reward").get<double>();
            best_.epoch = best.at("epoch").get<std::size_t>();
        }
        trace_.clear();
        for (const auto& r : j.at("trace")) trace_.push_back(row_from_json(r));
        epoch_ = j.at("epoch").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw TrainError(std::string("malformed checkpoint: ") + e.what());
    }
}

TrainResult train(const policy::DesignVocabulary& vocabulary, const policy::PolicyConfig& policy_config,
                  const TrainConfig& config, const RewardFn& reward, const EpochCallback& on_epoch) {
    Trainer trainer(vocabulary, policy_config, config, reward);
    while (!trainer.done()) {
        trainer.run_epoch();
        if (on_epoch) on_epoch(trainer);
    }
    return {trainer.best(), trainer.trace()};
}

}  // namespace filmgen::ppo
