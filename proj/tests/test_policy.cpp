#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "filmgen/policy.hpp"
#include "filmgen/structure.hpp"
#include "test_support.hpp"

using namespace filmgen;
using namespace filmgen::policy;

namespace {

DesignVocabulary vocab(std::size_t materials, std::size_t thicknesses) {
    DesignVocabulary v;
    for (std::size_t i = 0; i < materials; ++i) v.materials.push_back("M" + std::to_string(i));
    for (std::size_t i = 0; i < thicknesses; ++i) v.thicknesses_nm.push_back(15.0 + 5.0 * i);
    return v;
}

PolicyConfig small_config(PolicyVariant variant = {}) {
    PolicyConfig c;
    c.embedding_size = 3;
    c.hidden_size = 6;
    c.head_hidden = 5;
    c.critic_hidden = {4};
    c.variant = variant;
    return c;
}

}  // namespace

TEST_CASE("vocabulary validation and lattice") {
    CHECK(DesignVocabulary::thickness_lattice(15, 200, 5).size() == 38);
    CHECK(DesignVocabulary::thickness_lattice(15, 400, 5).back() == 400.0);
    CHECK_THROWS_AS(vocab(0, 3).validate(), PolicyError);
    CHECK_THROWS_AS(vocab(2, 0).validate(), PolicyError);
    auto dup = vocab(2, 3);
    dup.materials[1] = dup.materials[0];
    CHECK_THROWS_AS(dup.validate(), PolicyError);
    CHECK_NOTHROW(vocab(2, 3).validate());
}

TEST_CASE("forced length with a one-layer budget") {
    nn::Rng rng(3);
    Generator g(vocab(2, 4), small_config(), rng);
    for (int i = 0; i < 200; ++i) {
        const auto e = generate_episode(g, 1, rng);
        REQUIRE(e.steps.size() == 1);
        CHECK(e.steps[0].material < 2);
        CHECK(e.layer_count() == 1);
        CHECK_FALSE(e.ended_by_eos);
    }
    CHECK_THROWS_AS(generate_episode(g, 0, rng), PolicyError);
}

TEST_CASE("apply_gating removes exactly one logit") {
    const std::vector<double> logits = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    const auto g = apply_gating(logits, 2);
    CHECK(g == std::vector<double>{0.1, 0.2, 0.4, 0.5, 0.6});
    CHECK(apply_gating(logits, 0).front() == 0.2);
    CHECK_THROWS_AS(apply_gating(logits, 5), PolicyError);  // EOS is never gated
    CHECK_THROWS_AS(apply_gating(std::vector<double>{1.0}, 0), PolicyError);
}

TEST_CASE("gating gives the previous material zero probability") {
    nn::Rng rng(11);
    Generator g(vocab(5, 6), small_config(), rng);
    const auto allowed = g.allowed_materials(3, 2);
    CHECK(allowed == std::vector<std::size_t>{0, 1, 3, 4, 5});
    CHECK(g.allowed_materials(0, std::nullopt) == std::vector<std::size_t>{0, 1, 2, 3, 4});

    Generator ungated(vocab(5, 6), small_config({false, true}), rng);
    CHECK(ungated.allowed_materials(3, 2).size() == 6);
}

TEST_CASE("sampled episodes respect gating, length and normalization") {
    nn::Rng rng(21);
    Generator g(vocab(5, 8), small_config(), rng);
    const std::size_t L = 6;
    for (int i = 0; i < 3000; ++i) {
        const auto e = generate_episode(g, L, rng);
        CHECK(e.steps.size() <= L);
        CHECK(e.steps.front().material != g.vocabulary().eos());
        for (std::size_t t = 1; t < e.steps.size(); ++t) {
            CHECK(e.steps[t].material != e.steps[t - 1].material);
        }
        if (i % 100 == 0) {
            for (const auto& s : evaluate_log_probs(g, e)) {
                double a = 0.0;
                for (double p : s.material_probs) a += p;
                CHECK(std::abs(a - 1.0) < 1e-12);
                double b = 0.0;
                for (double p : s.thickness_probs) b += p;
                if (!s.thickness_probs.empty()) CHECK(std::abs(b - 1.0) < 1e-12);
            }
        }
    }
}

TEST_CASE("same seed gives the same episodes") {
    nn::Rng ra(5), rb(5);
    Generator a(vocab(4, 5), small_config(), ra);
    Generator b(vocab(4, 5), small_config(), rb);
    for (int i = 0; i < 50; ++i) {
        const auto ea = generate_episode(a, 5, ra);
        const auto eb = generate_episode(b, 5, rb);
        REQUIRE(ea.steps.size() == eb.steps.size());
        for (std::size_t t = 0; t < ea.steps.size(); ++t) {
            CHECK(ea.steps[t].material == eb.steps[t].material);
            CHECK(ea.steps[t].thickness == eb.steps[t].thickness);
            CHECK(ea.steps[t].log_prob() == eb.steps[t].log_prob());
        }
    }
}

TEST_CASE("uniform heads give a uniform first step") {
    nn::Rng rng(8);
    Generator g(vocab(4, 5), small_config(), rng);
    for (auto& layer : g.material_head.layers) {
        std::fill(layer.weight.value.begin(), layer.weight.value.end(), 0.0);
        std::fill(layer.bias.value.begin(), layer.bias.value.end(), 0.0);
    }
    std::vector<int> counts(4, 0);
    const int n = 40000;
    for (int i = 0; i < n; ++i) ++counts[generate_episode(g, 1, rng).steps[0].material];
    for (int c : counts) {
        const double sigma = std::sqrt(n * 0.25 * 0.75);
        CHECK(std::abs(c - n * 0.25) < 3.0 * sigma);
    }
    const auto e = generate_episode(g, 1, rng);
    CHECK(e.steps[0].material_log_prob == doctest::Approx(std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("recorded log-probs agree with re-evaluation") {
    for (PolicyVariant v : {PolicyVariant{true, true}, PolicyVariant{false, false}, PolicyVariant{true, false},
                            PolicyVariant{false, true}}) {
        nn::Rng rng(31);
        Generator g(vocab(3, 4), small_config(v), rng);
        for (int i = 0; i < 200; ++i) {
            const auto e = generate_episode(g, 4, rng);
            const auto ev = evaluate_log_probs(g, e);
            REQUIRE(ev.size() == e.steps.size());
            for (std::size_t t = 0; t < ev.size(); ++t) {
                CHECK(std::abs(ev[t].log_prob() - e.steps[t].log_prob()) < 1e-10);
                CHECK(std::abs(ev[t].value - e.steps[t].value) < 1e-12);
            }
        }
    }
}

TEST_CASE("episode probability is the product of step probabilities") {
    // With |M| = 2, |D| = 1, L = 2, gating and EOS masked at the start, every
    // two-layer episode alternates and the probabilities over all outcomes sum to 1.
    nn::Rng rng(13);
    Generator g(vocab(2, 1), small_config(), rng);
    std::map<std::vector<std::size_t>, double> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto e = generate_episode(g, 2, rng);
        std::vector<std::size_t> key;
        for (const auto& s : e.steps) key.push_back(s.material);
        seen[key] = std::exp(e.log_prob());
    }
    double total = 0.0;
    for (const auto& [key, p] : seen) total += p;
    CHECK(seen.size() == 4);  // {0,1}, {1,0}, {0,EOS}, {1,EOS}
    CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("variant widths") {
    nn::Rng rng(1);
    Generator full(vocab(5, 10), small_config(), rng);
    Generator plain(vocab(5, 10), small_config({false, false}), rng);
    CHECK(full.material_head.out_size() == 6);
    CHECK(full.thickness_head.out_size() == 10);
    CHECK(full.thickness_head.in_size() == 3 + 6);
    CHECK(plain.thickness_head.in_size() == 6);
    CHECK(full.gru.input_size() == 6);
    CHECK(full.parameter_count() > plain.parameter_count());
}

TEST_CASE("structure_from_episode maps indices to layers") {
    auto v = vocab(3, 4);
    Episode e;
    e.steps.resize(3);
    e.steps[0].material = 1;
    e.steps[0].thickness = 0;
    e.steps[1].material = 2;
    e.steps[1].thickness = 3;
    e.steps[2].material = v.eos();
    e.ended_by_eos = true;
    const auto s = structure_from_episode(e, v);
    REQUIRE(s.size() == 2);
    CHECK(s.layers[0] == LayerSpec{"M1", 15.0});
    CHECK(s.layers[1] == LayerSpec{"M2", 30.0});
    CHECK(e.layer_count() == 2);

    e.steps[1].thickness = 9;
    CHECK_THROWS_AS(structure_from_episode(e, v), PolicyError);
}

TEST_CASE("published 14-layer material sequence is expressible under gating") {
    const auto design = read_structure(testing::data_dir() / "structures" / "absorber_14layer.json");
    DesignVocabulary v;
    v.materials = {"Ag", "Al", "Al2O3", "Cr", "Fe2O3", "Ge", "HfO2", "MgF2",
                   "Ni", "Si", "SiO2", "Ti", "TiO2", "ZnO", "ZnS", "ZnSe"};
    v.thicknesses_nm = DesignVocabulary::thickness_lattice(15, 200, 1);
    Episode e;
    for (const auto& layer : design.layers) {
        StepRecord r;
        r.material = static_cast<std::size_t>(
            std::find(v.materials.begin(), v.materials.end(), layer.material) - v.materials.begin());
        r.thickness = static_cast<std::size_t>(std::lround(layer.thickness_nm - 15.0));
        if (!e.steps.empty()) CHECK(r.material != e.steps.back().material);
        e.steps.push_back(r);
    }
    CHECK(structure_from_episode(e, v) == design);
}

TEST_CASE("episode backward matches finite differences") {
    for (PolicyVariant variant : {PolicyVariant{true, true}, PolicyVariant{false, false}}) {
        nn::Rng rng(17);
        Generator g(vocab(3, 4), small_config(variant), rng);
        Episode e;
        do {
            e = generate_episode(g, 4, rng);
        } while (e.steps.size() < 3);
        std::vector<StepGradient> grads;
        for (std::size_t t = 0; t < e.steps.size(); ++t) {
            grads.push_back({0.7 - 0.3 * t, 0.2 + 0.1 * t, -0.4 + 0.25 * t});
        }
        auto loss = [&] {
            const auto ev = evaluate_log_probs(g, e);
            double l = 0.0;
            for (std::size_t t = 0; t < ev.size(); ++t) {
                l += grads[t].log_prob * ev[t].log_prob() + grads[t].entropy * ev[t].entropy +
                     grads[t].value * ev[t].value;
            }
            return l;
        };
        g.zero_grad();
        EpisodeTape(g, e).backward(g, grads);
        CHECK(testing::fd_check(g.parameters(), loss) < 1e-4);
    }
}
