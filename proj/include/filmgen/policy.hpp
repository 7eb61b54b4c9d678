#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "filmgen/nn.hpp"
#include "filmgen/structure.hpp"

namespace filmgen::policy {

class PolicyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Material and thickness alphabets. The end-of-sequence action is appended
/// to the material alphabet at index materials.size().
struct DesignVocabulary {
    std::vector<std::string> materials;
    std::vector<double> thicknesses_nm;

    [[nodiscard]] std::size_t eos() const { return materials.size(); }
    [[nodiscard]] std::size_t material_count() const { return materials.size(); }
    [[nodiscard]] std::size_t thickness_count() const { return thicknesses_nm.size(); }
    void validate() const;

    /// {lo, lo + step, ..., hi}; hi is included when it lies on the lattice.
    static std::vector<double> thickness_lattice(double lo, double hi, double step);
};

/// Architecture switches used by the ablation variants.
struct PolicyVariant {
    bool gating = true;          // forbid repeating the previous material
    bool autoregressive = true;  // condition the thickness head on the sampled material

    friend bool operator==(const PolicyVariant&, const PolicyVariant&) = default;
};

struct PolicyConfig {
    std::size_t embedding_size = 5;
    std::size_t hidden_size = 128;
    std::size_t head_hidden = 64;
    std::vector<std::size_t> critic_hidden{64, 64};
    bool mask_eos_at_start = true;
    PolicyVariant variant;
};

/// Recurrent sequence generator with material head, thickness head and critic.
///
/// Step l consumes the encoding of the previous layer, [emb_m(m_{l-1}), emb_d(d_{l-1})]
/// (a learned start vector at l = 0), updates the GRU state h_l, and reads
///   material logits  = material_head(h_l)            (|M| + 1 entries, last is EOS)
///   thickness logits = thickness_head([emb_m(m_l), h_l])  or thickness_head(h_l)
///   value            = critic(h_l)
class Generator {
public:
    Generator(DesignVocabulary vocabulary, PolicyConfig config, nn::Rng& rng);

    [[nodiscard]] const DesignVocabulary& vocabulary() const { return vocab_; }
    [[nodiscard]] const PolicyConfig& config() const { return config_; }
    [[nodiscard]] std::size_t step_input_size() const { return 2 * config_.embedding_size; }

    std::vector<nn::ParamTensor*> parameters();
    std::vector<const nn::ParamTensor*> parameters() const;
    void zero_grad();
    [[nodiscard]] std::size_t parameter_count() const;

    /// Original material indices (EOS = |M|) that may be sampled at `step`.
    [[nodiscard]] std::vector<std::size_t> allowed_materials(std::size_t step,
                                                             std::optional<std::size_t> previous) const;

    nn::Embedding material_embedding;
    nn::Embedding thickness_embedding;
    nn::ParamTensor start_token;
    nn::GruCell gru;
    nn::Mlp material_head;
    nn::Mlp thickness_head;
    nn::Mlp critic;

private:
    DesignVocabulary vocab_;
    PolicyConfig config_;
};

struct StepRecord {
    std::vector<double> input;   // encoding consumed by the GRU at this step
    std::vector<double> hidden;  // h_l
    std::size_t material = 0;    // original index; == vocabulary.eos() for the stop action
    std::optional<std::size_t> thickness;
    double material_log_prob = 0.0;
    double thickness_log_prob = 0.0;
    double value = 0.0;

    [[nodiscard]] double log_prob() const { return material_log_prob + thickness_log_prob; }
};

struct Episode {
    std::vector<StepRecord> steps;
    double reward = 0.0;
    bool ended_by_eos = false;
    // Generator signature; evaluate_log_probs refuses episodes from another configuration.
    std::size_t material_count = 0;
    std::size_t thickness_count = 0;
    PolicyVariant variant;
    bool mask_eos_at_start = true;

    [[nodiscard]] std::size_t layer_count() const { return ended_by_eos ? steps.size() - 1 : steps.size(); }
    [[nodiscard]] double log_prob() const;
};

Episode generate_episode(const Generator& generator, std::size_t max_length, nn::Rng& rng);

/// Deletes element `last_material` from the |M| + 1 material logits.
std::vector<double> apply_gating(std::span<const double> logits, std::size_t last_material);

struct StepEvaluation {
    double material_log_prob = 0.0;
    double thickness_log_prob = 0.0;
    double value = 0.0;
    double entropy = 0.0;
    std::vector<double> material_probs;   // over allowed_materials order
    std::vector<double> thickness_probs;  // empty on the stop step

    [[nodiscard]] double log_prob() const { return material_log_prob + thickness_log_prob; }
};

/// Re-scores the recorded actions under the generator's current parameters.
std::vector<StepEvaluation> evaluate_log_probs(const Generator& generator, const Episode& episode);

Structure structure_from_episode(const Episode& episode, const DesignVocabulary& vocabulary);

/// Loss sensitivities for one step: dLoss/d(step log-prob), dLoss/d(step entropy), dLoss/d(value).
struct StepGradient {
    double log_prob = 0.0;
    double entropy = 0.0;
    double value = 0.0;
};

/// Forward pass over a recorded episode that keeps what backward needs.
class EpisodeTape {
public:
    EpisodeTape(const Generator& generator, const Episode& episode);

    [[nodiscard]] const std::vector<StepEvaluation>& steps() const { return evals_; }

    /// Back-propagates through every step (and through time) into the
    /// generator's gradient accumulators.
    void backward(Generator& generator, std::span<const StepGradient> grads) const;

private:
    struct StepCache {
        nn::GruCell::Cache gru;
        nn::Mlp::Cache material_head;
        nn::Mlp::Cache thickness_head;
        nn::Mlp::Cache critic;
        std::vector<std::size_t> allowed;
        std::size_t chosen = 0;  // position inside `allowed`
    };

    const Episode* episode_;
    std::vector<StepEvaluation> evals_;
    std::vector<StepCache> caches_;
};

}  // namespace filmgen::policy
