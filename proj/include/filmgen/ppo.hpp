#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "filmgen/nn.hpp"
#include "filmgen/policy.hpp"
#include "filmgen/structure.hpp"

namespace filmgen::ppo {

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::size_t epochs = 3000;
    std::size_t batch_steps = 1000;  // generation steps per batch, EOS steps included
    std::size_t max_length = 6;
    nn::AdamConfig adam;             // learning rate 5e-5
    double gamma = 1.0;
    double gae_lambda = 0.95;
    double clip_epsilon = 0.2;
    std::size_t update_epochs = 10;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    double target_kl = 0.02;         // <= 0 disables early stopping
    double max_grad_norm = 0.5;
    bool normalize_advantages = true;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void validate() const;
};

using RewardFn = std::function<double(const Structure&)>;

struct EpisodeBatch {
    std::vector<policy::Episode> episodes;
    std::size_t total_steps = 0;
};

/// Samples episodes until the step count reaches config.batch_steps and
/// scores each one. With one worker every draw comes from `rng`; with more,
/// worker w draws from worker_rngs[w] and episode order is nondeterministic.
EpisodeBatch collect_batch(const policy::Generator& generator, const TrainConfig& config, const RewardFn& reward,
                           nn::Rng& rng, std::span<nn::Rng> worker_rngs = {});

struct Advantages {
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// GAE over one episode whose only reward arrives on its last step; the value
/// after the last step is 0.
Advantages gae_advantages(std::span<const double> values, double terminal_reward, double gamma, double lambda);

/// Flattened per-step training targets for a batch.
struct BatchTargets {
    std::vector<double> advantages;  // normalized if requested
    std::vector<double> returns;
    std::vector<double> old_log_probs;
};

BatchTargets prepare_targets(const EpisodeBatch& batch, const TrainConfig& config);

struct LossTerms {
    double total = 0.0;
    double surrogate = 0.0;     // mean clipped surrogate (maximized)
    double value_loss = 0.0;    // mean squared error to returns
    double entropy = 0.0;       // mean step entropy
    double approx_kl = 0.0;     // mean of (r - 1) - log r
    double clip_fraction = 0.0;
};

/// Loss = -surrogate + value_coef * value_loss - entropy_coef * entropy, every
/// term averaged over batch steps. When `accumulate` is true the gradient is
/// added to the generator's accumulators.
LossTerms ppo_loss(policy::Generator& generator, const EpisodeBatch& batch, const BatchTargets& targets,
                   const TrainConfig& config, bool accumulate);

struct UpdateStats {
    std::size_t epochs_run = 0;
    bool early_stopped = false;
    LossTerms first;
    LossTerms last;
    double grad_norm = 0.0;  // pre-clip norm of the last step
};

UpdateStats ppo_update(policy::Generator& generator, nn::Adam& optimizer, const EpisodeBatch& batch,
                       const TrainConfig& config);

struct BestBuffer {
    std::optional<Structure> structure;
    double reward = 0.0;
    std::size_t epoch = 0;

    [[nodiscard]] bool empty() const { return !structure.has_value(); }
    /// Keeps the candidate only if it is strictly better.
    bool offer(const Structure& candidate, double candidate_reward, std::size_t candidate_epoch);
};

struct TraceRow {
    std::size_t epoch = 0;
    double mean_reward = 0.0;
    double max_reward = 0.0;
    double best_so_far = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
    std::size_t episodes = 0;
    double mean_layers = 0.0;
};

std::string trace_csv_header();
std::string trace_csv_row(const TraceRow& row);
std::string trace_to_csv(std::span<const TraceRow> rows);

/// Complete training state; round-trips through JSON bit-exactly.
class Trainer {
public:
    Trainer(policy::DesignVocabulary vocabulary, policy::PolicyConfig policy_config, TrainConfig config,
            RewardFn reward);

    /// One collect / select-best / update cycle.
    const TraceRow& run_epoch();
    [[nodiscard]] bool done() const { return epoch_ >= config_.epochs; }

    [[nodiscard]] std::size_t epoch() const { return epoch_; }
    [[nodiscard]] const BestBuffer& best() const { return best_; }
    [[nodiscard]] const std::vector<TraceRow>& trace() const { return trace_; }
    [[nodiscard]] const policy::Generator& generator() const { return generator_; }
    [[nodiscard]] policy::Generator& generator() { return generator_; }
    [[nodiscard]] const TrainConfig& config() const { return config_; }

    nlohmann::json checkpoint() const;
    void restore(const nlohmann::json& checkpoint);

private:
    TrainConfig config_;
    RewardFn reward_;
    nn::Rng rng_;
    std::vector<nn::Rng> worker_rngs_;
    policy::Generator generator_;
    nn::Adam optimizer_;
    BestBuffer best_;
    std::vector<TraceRow> trace_;
    std::size_t epoch_ = 0;
};

struct TrainResult {
    BestBuffer best;
    std::vector<TraceRow> trace;
};

using EpochCallback = std::function<void(const Trainer&)>;

TrainResult train(const policy::DesignVocabulary& vocabulary, const policy::PolicyConfig& policy_config,
                  const TrainConfig& config, const RewardFn& reward, const EpochCallback& on_epoch = {});

}  // namespace filmgen::ppo
