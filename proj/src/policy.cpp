#include "filmgen/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace filmgen::policy {

namespace {

std::vector<double> select(std::span<const double> logits, std::span<const std::size_t> allowed) {
    std::vector<double> out;
    out.reserve(allowed.size());
    for (std::size_t i : allowed) out.push_back(logits[i]);
    return out;
}

void check_finite(std::span<const double> logits, const char* head, std::size_t step) {
    for (double v : logits) {
        if (!std::isfinite(v)) {
            throw PolicyError(std::string("non-finite ") + head + " logits at step " + std::to_string(step));
        }
    }
}

std::vector<double> step_input(const Generator& g, std::size_t step, std::size_t prev_material,
                               std::size_t prev_thickness) {
    if (step == 0) return g.start_token.value;
    std::vector<double> x;
    x.reserve(g.step_input_size());
    const auto m = g.material_embedding.row(prev_material);
    const auto d = g.thickness_embedding.row(prev_thickness);
    x.insert(x.end(), m.begin(), m.end());
    x.insert(x.end(), d.begin(), d.end());
    return x;
}

std::vector<double> thickness_input(const Generator& g, std::size_t material, std::span<const double> h) {
    std::vector<double> x;
    if (g.config().variant.autoregressive) {
        const auto m = g.material_embedding.row(material);
        x.insert(x.end(), m.begin(), m.end());
    }
    x.insert(x.end(), h.begin(), h.end());
    return x;
}

void check_signature(const Generator& g, const Episode& e) {
    if (e.material_count != g.vocabulary().material_count() || e.thickness_count != g.vocabulary().thickness_count()) {
        throw PolicyError("episode was generated with a different vocabulary");
    }
    if (!(e.variant == g.config().variant) || e.mask_eos_at_start != g.config().mask_eos_at_start) {
        throw PolicyError("episode was generated with different policy variant flags");
    }
    if (e.steps.empty()) throw PolicyError("episode has no steps");
}

std::size_t position_of(std::span<const std::size_t> allowed, std::size_t material, std::size_t step) {
    const auto it = std::find(allowed.begin(), allowed.end(), material);
    if (it == allowed.end()) {
        throw PolicyError("recorded material " + std::to_string(material) + " is not allowed at step " +
                          std::to_string(step));
    }
    return static_cast<std::size_t>(it - allowed.begin());
}

}  // namespace

// ---------------------------------------------------------------------------

void DesignVocabulary::validate() const {
    if (materials.size() < 2) throw PolicyError("vocabulary needs at least two materials");
    for (std::size_t i = 0; i < materials.size(); ++i) {
        if (materials[i].empty()) throw PolicyError("vocabulary has an empty material id");
        for (std::size_t j = 0; j < i; ++j) {
            if (materials[i] == materials[j]) throw PolicyError("vocabulary lists '" + materials[i] + "' twice");
        }
    }
    if (thicknesses_nm.empty()) throw PolicyError("vocabulary needs at least one thickness");
    for (std::size_t i = 0; i < thicknesses_nm.size(); ++i) {
        if (!(thicknesses_nm[i] > 0.0)) throw PolicyError("thicknesses must be > 0");
        if (i > 0 && thicknesses_nm[i] <= thicknesses_nm[i - 1]) {
            throw PolicyError("thicknesses must be strictly increasing");
        }
    }
}

std::vector<double> DesignVocabulary::thickness_lattice(double lo, double hi, double step) {
    if (!(step > 0.0) || !(lo > 0.0) || hi < lo) throw PolicyError("invalid thickness lattice");
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

// ---------------------------------------------------------------------------

Generator::Generator(DesignVocabulary vocabulary, PolicyConfig config, nn::Rng& rng)
    : vocab_(std::move(vocabulary)), config_(std::move(config)) {
    vocab_.validate();
    if (config_.embedding_size == 0 || config_.hidden_size == 0 || config_.head_hidden == 0) {
        throw PolicyError("policy sizes must be positive");
    }
    const std::size_t d = config_.embedding_size;
    const std::size_t H = config_.hidden_size;
    const std::size_t M = vocab_.material_count();
    const std::size_t D = vocab_.thickness_count();

    material_embedding = nn::Embedding("material_embedding", M, d, rng);
    thickness_embedding = nn::Embedding("thickness_embedding", D, d, rng);
    start_token = nn::ParamTensor("start_token", {2 * d});
    nn::init_uniform(start_token, 1.0, rng);
    gru = nn::GruCell("gru", 2 * d, H, rng);
    material_head = nn::Mlp("material_head", {H, config_.head_hidden, M + 1}, rng);
    const std::size_t thickness_in = config_.variant.autoregressive ? d + H : H;
    thickness_head = nn::Mlp("thickness_head", {thickness_in, config_.head_hidden, D}, rng);
    std::vector<std::size_t> critic_sizes{H};
    critic_sizes.insert(critic_sizes.end(), config_.critic_hidden.begin(), config_.critic_hidden.end());
    critic_sizes.push_back(1);
    critic = nn::Mlp("critic", critic_sizes, rng);
}

std::vector<nn::ParamTensor*> Generator::parameters() {
    std::vector<nn::ParamTensor*> out;
    material_embedding.collect(out);
    thickness_embedding.collect(out);
    out.push_back(&start_token);
    gru.collect(out);
    material_head.collect(out);
    thickness_head.collect(out);
    critic.collect(out);
    return out;
}

std::vector<const nn::ParamTensor*> Generator::parameters() const {
    std::vector<const nn::ParamTensor*> out;
    material_embedding.collect(out);
    thickness_embedding.collect(out);
    out.push_back(&start_token);
    gru.collect(out);
    material_head.collect(out);
    thickness_head.collect(out);
    critic.collect(out);
    return out;
}

void Generator::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

std::size_t Generator::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
}

std::vector<std::size_t> Generator::allowed_materials(std::size_t step, std::optional<std::size_t> previous) const {
    const std::size_t M = vocab_.material_count();
    std::vector<std::size_t> allowed;
    allowed.reserve(M + 1);
    for (std::size_t i = 0; i <= M; ++i) {
        if (i == M && step == 0 && config_.mask_eos_at_start) continue;
        if (step > 0 && config_.variant.gating && previous && i == *previous) continue;
        allowed.push_back(i);
    }
    return allowed;
}

// ---------------------------------------------------------------------------

double Episode::log_prob() const {
    return std::accumulate(steps.begin(), steps.end(), 0.0,
                           [](double acc, const StepRecord& s) { return acc + s.log_prob(); });
}

std::vector<double> apply_gating(std::span<const double> logits, std::size_t last_material) {
    if (logits.size() < 2 || last_material + 1 >= logits.size()) {
        throw PolicyError("gating index " + std::to_string(last_material) + " is not a material");
    }
    std::vector<double> out;
    out.reserve(logits.size() - 1);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (i != last_material) out.push_back(logits[i]);
    }
    return out;
}

Episode generate_episode(const Generator& g, std::size_t max_length, nn::Rng& rng) {
    if (max_length == 0) throw PolicyError("maximum length must be >= 1");
    const auto& vocab = g.vocabulary();
    Episode ep;
    ep.material_count = vocab.material_count();
    ep.thickness_count = vocab.thickness_count();
    ep.variant = g.config().variant;
    ep.mask_eos_at_start = g.config().mask_eos_at_start;

    std::vector<double> h(g.config().hidden_size, 0.0);
    std::size_t prev_m = 0;
    std::size_t prev_d = 0;
    for (std::size_t step = 0; step < max_length; ++step) {
        StepRecord rec;
        rec.input = step_input(g, step, prev_m, prev_d);
        h = g.gru.step(rec.input, h);
        rec.hidden = h;
        rec.value = g.critic.forward(h)[0];

        const auto logits = g.material_head.forward(h);
        check_finite(logits, "material", step);
        std::vector<double> probs;
        std::vector<std::size_t> allowed;
        if (step > 0 && g.config().variant.gating) {
            // Gated path goes through the row-deleted identity explicitly.
            probs = nn::softmax(apply_gating(logits, prev_m));
            allowed = g.allowed_materials(step, prev_m);
        } else {
            allowed = g.allowed_materials(step, step > 0 ? std::optional<std::size_t>(prev_m) : std::nullopt);
            probs = nn::softmax(select(logits, allowed));
        }
        const std::size_t pick = nn::categorical_sample(probs, rng);
        rec.material = allowed[pick];
        rec.material_log_prob = nn::log_prob(probs, pick);

        if (rec.material == vocab.eos()) {
            ep.steps.push_back(std::move(rec));
            ep.ended_by_eos = true;
            return ep;
        }

        const auto tlogits = g.thickness_head.forward(thickness_input(g, rec.material, h));
        check_finite(tlogits, "thickness", step);
        const auto tprobs = nn::softmax(tlogits);
        const std::size_t t = nn::categorical_sample(tprobs, rng);
        rec.thickness = t;
        rec.thickness_log_prob = nn::log_prob(tprobs, t);

        prev_m = rec.material;
        prev_d = t;
        ep.steps.push_back(std::move(rec));
    }
    return ep;
}

std::vector<StepEvaluation> evaluate_log_probs(const Generator& generator, const Episode& episode) {
    return EpisodeTape(generator, episode).steps();
}

Structure structure_from_episode(const Episode& episode, const DesignVocabulary& vocabulary) {
    Structure s;
    for (const auto& step : episode.steps) {
        if (step.material == vocabulary.eos()) break;
        if (step.material >= vocabulary.material_count() || !step.thickness ||
            *step.thickness >= vocabulary.thickness_count()) {
            throw PolicyError("episode action outside the vocabulary");
        }
        s.layers.push_back({vocabulary.materials[step.material], vocabulary.thicknesses_nm[*step.thickness]});
    }
    return s;
}

// ---------------------------------------------------------------------------

EpisodeTape::EpisodeTape(const Generator& g, const Episode& episode) : episode_(&episode) {
    check_signature(g, episode);
    const auto& vocab = g.vocabulary();
    const std::size_t n = episode.steps.size();
    evals_.resize(n);
    caches_.resize(n);

    std::vector<double> h(g.config().hidden_size, 0.0);
    std::size_t prev_m = 0;
    std::size_t prev_d = 0;
    for (std::size_t step = 0; step < n; ++step) {
        const auto& rec = episode.steps[step];
        auto& cache = caches_[step];
        auto& ev = evals_[step];
        const auto x = step_input(g, step, prev_m, prev_d);
        h = g.gru.step(x, h, &cache.gru);
        ev.value = g.critic.forward(h, &cache.critic)[0];

        const auto logits = g.material_head.forward(h, &cache.material_head);
        check_finite(logits, "material", step);
        cache.allowed = g.allowed_materials(step, step > 0 ? std::optional<std::size_t>(prev_m) : std::nullopt);
        cache.chosen = position_of(cache.allowed, rec.material, step);
        ev.material_probs = nn::softmax(select(logits, cache.allowed));
        ev.material_log_prob = nn::log_prob(ev.material_probs, cache.chosen);
        ev.entropy = nn::entropy(ev.material_probs);

        if (rec.material == vocab.eos()) {
            if (step + 1 != n) throw PolicyError("stop action recorded before the last step");
            break;
        }
        if (!rec.thickness || *rec.thickness >= vocab.thickness_count()) {
            throw PolicyError("layer step without a valid thickness action");
        }
        const auto tlogits = g.thickness_head.forward(thickness_input(g, rec.material, h), &cache.thickness_head);
        check_finite(tlogits, "thickness", step);
        ev.thickness_probs = nn::softmax(tlogits);
        ev.thickness_log_prob = nn::log_prob(ev.thickness_probs, *rec.thickness);
        ev.entropy += nn::entropy(ev.thickness_probs);

        prev_m = rec.material;
        prev_d = *rec.thickness;
    }
}

namespace {

// d/dlogits of (a * log p_chosen + b * H(p)) for p = softmax(logits).
std::vector<double> categorical_backward(std::span<const double> probs, std::size_t chosen, double d_logp,
                                         double d_entropy) {
    const double H = nn::entropy(probs);
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        double g = d_logp * ((i == chosen ? 1.0 : 0.0) - p);
        if (p > 0.0) g += d_entropy * (-p * (std::log(p) + H));
        out[i] = g;
    }
    return out;
}

}  // namespace

void EpisodeTape::backward(Generator& g, std::span<const StepGradient> grads) const {
    const auto& episode = *episode_;
    const std::size_t n = evals_.size();
    if (grads.size() != n) throw PolicyError("step gradient count does not match the episode");
    const std::size_t d = g.config().embedding_size;
    const std::size_t H = g.config().hidden_size;
    const std::size_t M = g.vocabulary().material_count();

    std::vector<double> dh_carry(H, 0.0);
    std::vector<double> dx(g.step_input_size());
    std::vector<double> dh_prev(H);
    for (std::size_t step = n; step-- > 0;) {
        const auto& cache = caches_[step];
        const auto& ev = evals_[step];
        const auto& rec = episode.steps[step];
        const auto& gs = grads[step];
        std::vector<double> dh = dh_carry;

        // Material head; masked logits receive no gradient.
        const auto dsel = categorical_backward(ev.material_probs, cache.chosen, gs.log_prob, gs.entropy);
        std::vector<double> dlogits(M + 1, 0.0);
        for (std::size_t i = 0; i < cache.allowed.size(); ++i) dlogits[cache.allowed[i]] = dsel[i];
        const auto dh_mat = g.material_head.backward(cache.material_head, dlogits);
        for (std::size_t i = 0; i < H; ++i) dh[i] += dh_mat[i];

        const double dv[1] = {gs.value};
        const auto dh_crit = g.critic.backward(cache.critic, dv);
        for (std::size_t i = 0; i < H; ++i) dh[i] += dh_crit[i];

        if (rec.thickness) {
            const auto dt = categorical_backward(ev.thickness_probs, *rec.thickness, gs.log_prob, gs.entropy);
            const auto din = g.thickness_head.backward(cache.thickness_head, dt);
            std::size_t off = 0;
            if (g.config().variant.autoregressive) {
                g.material_embedding.accumulate_grad(rec.material, std::span<const double>(din.data(), d));
                off = d;
            }
            for (std::size_t i = 0; i < H; ++i) dh[i] += din[off + i];
        }

        g.gru.backward(cache.gru, dh, dx, dh_prev);
        if (step == 0) {
            for (std::size_t i = 0; i < dx.size(); ++i) g.start_token.grad[i] += dx[i];
        } else {
            const auto& prev = episode.steps[step - 1];
            g.material_embedding.accumulate_grad(prev.material, std::span<const double>(dx.data(), d));
            g.thickness_embedding.accumulate_grad(*prev.thickness, std::span<const double>(dx.data() + d, d));
        }
        dh_carry = dh_prev;
    }
}

}  // namespace filmgen::policy
