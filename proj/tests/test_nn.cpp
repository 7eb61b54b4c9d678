#include <doctest.h>

#include <cmath>
#include <functional>

#include "filmgen/nn.hpp"
#include "test_support.hpp"

using namespace filmgen::nn;
using testing::fd_check;

namespace {

void fill(ParamTensor& t, const std::function<double(std::size_t)>& f) {
    for (std::size_t i = 0; i < t.size(); ++i) t.value[i] = f(i);
}

}  // namespace

TEST_CASE("zero GRU maps a zero state to zero") {
    Rng rng(1);
    GruCell cell("g", 3, 4, rng);
    for (auto* p : std::vector<ParamTensor*>{&cell.w_input, &cell.w_hidden, &cell.b_input, &cell.b_hidden}) {
        std::fill(p->value.begin(), p->value.end(), 0.0);
    }
    const auto h = cell.step(std::vector<double>{0.3, -2.0, 5.0}, std::vector<double>(4, 0.0));
    for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("GRU step matches a reference two-unit cell") {
    // Reference from torch.nn.GRUCell with the same weights.
    Rng rng(1);
    GruCell cell("g", 3, 2, rng);
    fill(cell.w_input, [](std::size_t i) { return 0.3 * std::sin(1.7 * i + 0.2); });
    fill(cell.w_hidden, [](std::size_t i) { return 0.25 * std::cos(1.3 * i + 0.5); });
    fill(cell.b_input, [](std::size_t i) { return 0.1 * std::sin(0.9 * i); });
    fill(cell.b_hidden, [](std::size_t i) { return 0.05 * std::cos(2.1 * i); });
    const auto h = cell.step(std::vector<double>{0.5, -1.0, 0.25}, std::vector<double>{0.3, -0.6});
    CHECK(h[0] == doctest::Approx(0.17955648478351044).epsilon(1e-14));
    CHECK(h[1] == doctest::Approx(-0.4703947846694659).epsilon(1e-14));
}

TEST_CASE("GRU state stays inside (-1, 1)") {
    Rng rng(5);
    GruCell cell("g", 4, 6, rng);
    std::vector<double> h(6, 0.0);
    for (int t = 0; t < 200; ++t) {
        h = cell.step(std::vector<double>{10.0, -10.0, 3.0, t * 0.1}, h);
        for (double v : h) CHECK(std::abs(v) < 1.0);
    }
}

TEST_CASE("GRU gradients match finite differences through time") {
    Rng rng(3);
    GruCell cell("g", 3, 4, rng);
    std::vector<ParamTensor*> params;
    cell.collect(params);
    const std::vector<std::vector<double>> xs = {{0.5, -0.2, 0.9}, {-1.0, 0.4, 0.1}, {0.3, 0.3, -0.7}};
    const std::vector<double> target = {0.2, -0.4, 0.1, 0.6};
    auto loss = [&] {
        std::vector<double> h(4, 0.1);
        for (const auto& x : xs) h = cell.step(x, h);
        double l = 0.0;
        for (std::size_t i = 0; i < 4; ++i) l += (h[i] - target[i]) * (h[i] - target[i]);
        return l;
    };
    for (auto* p : params) p->zero_grad();
    std::vector<GruCell::Cache> caches(xs.size());
    std::vector<double> h(4, 0.1);
    for (std::size_t t = 0; t < xs.size(); ++t) h = cell.step(xs[t], h, &caches[t]);
    std::vector<double> dh(4);
    for (std::size_t i = 0; i < 4; ++i) dh[i] = 2.0 * (h[i] - target[i]);
    std::vector<double> dx(3);
    std::vector<double> dh_prev(4);
    for (std::size_t t = xs.size(); t-- > 0;) {
        cell.backward(caches[t], dh, dx, dh_prev);
        dh = dh_prev;
    }
    CHECK(fd_check(params, loss) < 1e-4);
}

TEST_CASE("MLP gradients match finite differences") {
    Rng rng(9);
    Mlp mlp("m", {4, 5, 3, 2}, rng);
    std::vector<ParamTensor*> params;
    mlp.collect(params);
    const std::vector<double> x = {0.3, -0.8, 0.5, 1.2};
    const std::vector<double> w = {0.7, -1.3};
    auto loss = [&] {
        const auto y = mlp.forward(x);
        return w[0] * y[0] + w[1] * y[1] + 0.5 * y[0] * y[1];
    };
    for (auto* p : params) p->zero_grad();
    Mlp::Cache cache;
    const auto y = mlp.forward(x, &cache);
    const std::vector<double> dy = {w[0] + 0.5 * y[1], w[1] + 0.5 * y[0]};
    (void)mlp.backward(cache, dy);
    CHECK(fd_check(params, loss) < 1e-4);
}

TEST_CASE("MLP trivial weights") {
    Rng rng(2);
    Mlp zero("z", {3, 2}, rng);
    std::fill(zero.layers[0].weight.value.begin(), zero.layers[0].weight.value.end(), 0.0);
    zero.layers[0].bias.value = {0.25, -4.0};
    const auto y = zero.forward(std::vector<double>{9.0, 8.0, 7.0});
    CHECK(y[0] == 0.25);
    CHECK(y[1] == -4.0);

    Mlp ident("i", {3, 3}, rng);
    ident.layers[0].weight.value = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    ident.layers[0].bias.value = {0, 0, 0};
    const std::vector<double> x = {0.1, -2.0, 3.5};
    CHECK(ident.forward(x) == x);
}

TEST_CASE("initialization bounds") {
    Rng rng(4);
    Linear lin("l", 16, 8, rng);
    for (double v : lin.weight.value) CHECK(std::abs(v) <= 0.25);
    for (double v : lin.bias.value) CHECK(v == 0.0);
    GruCell cell("g", 10, 25, rng);
    for (double v : cell.w_hidden.value) CHECK(std::abs(v) <= 0.2);
    for (double v : cell.b_input.value) CHECK(v == 0.0);
}

TEST_CASE("softmax") {
    const auto p = softmax(std::vector<double>{0.7, 0.7, 0.7, 0.7});
    for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    const auto q = softmax(std::vector<double>{std::log(1.0), std::log(3.0)});
    CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-14));

    const std::vector<double> logits = {1.5, -3.0, 0.2, 7.0};
    const auto base = softmax(logits);
    for (double c : {-1000.0, -3.5, 2.0, 800.0}) {
        std::vector<double> shifted = logits;
        for (double& v : shifted) v += c;
        const auto s = softmax(shifted);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - base[i]) < 1e-12);
    }
    double sum = 0.0;
    for (double v : base) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK_THROWS_AS(softmax(std::vector<double>{}), NnError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), NnError);
}

TEST_CASE("log_prob and entropy") {
    const std::vector<double> p = {0.25, 0.75};
    CHECK(log_prob(p, 1) == doctest::Approx(std::log(0.75)));
    CHECK(entropy(p) == doctest::Approx(-(0.25 * std::log(0.25) + 0.75 * std::log(0.75))));
    const auto lp = log_softmax(std::vector<double>{0.0, std::log(3.0)});
    CHECK(lp[0] == doctest::Approx(std::log(0.25)));
}

TEST_CASE("categorical sampling frequencies match probabilities") {
    Rng rng(12345);
    const std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
    const int draws = 100000;
    std::vector<int> counts(p.size(), 0);
    for (int i = 0; i < draws; ++i) ++counts[categorical_sample(p, rng)];
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double sigma = std::sqrt(draws * p[k] * (1.0 - p[k]));
        CHECK(std::abs(counts[k] - draws * p[k]) < 3.0 * sigma);
    }
}

TEST_CASE("sampling is reproducible under a seed") {
    const std::vector<double> p = {0.3, 0.3, 0.4};
    Rng a(77);
    Rng b(77);
    for (int i = 0; i < 1000; ++i) CHECK(categorical_sample(p, a) == categorical_sample(p, b));
}

TEST_CASE("Adam matches a reference trace") {
    // Reference from torch.optim.Adam(lr=0.1) on f = x^2 + 3 y^2 from (1, -2).
    ParamTensor p("p", {2});
    p.value = {1.0, -2.0};
    std::vector<ParamTensor*> params{&p};
    Adam adam(params, {0.1, 0.9, 0.999, 1e-8});
    const double expected[3][2] = {{0.9000000005, -1.9000000000833333},
                                   {0.8004122286917927, -1.8001664857787731},
                                   {0.7015862729460302, -1.7006233915360325}};
    for (int k = 0; k < 3; ++k) {
        p.grad = {2.0 * p.value[0], 6.0 * p.value[1]};
        adam.step(params);
        CHECK(p.value[0] == doctest::Approx(expected[k][0]).epsilon(1e-13));
        CHECK(p.value[1] == doctest::Approx(expected[k][1]).epsilon(1e-13));
    }
}

TEST_CASE("Adam edge cases") {
    ParamTensor p("p", {1});
    p.value = {1.0};
    std::vector<ParamTensor*> params{&p};
    Adam adam(params, {0.1, 0.9, 0.999, 1e-8});
    p.grad = {0.0};
    adam.step(params);
    CHECK(p.value[0] == 1.0);
    p.grad = {2.0 * p.value[0]};
    adam.step(params);
    CHECK(p.value[0] < 1.0);
    const double before = p.value[0];
    p.grad = {std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(adam.step(params), NnError);
    CHECK(p.value[0] == before);
}

TEST_CASE("gradient clipping rescales to the global norm") {
    ParamTensor a("a", {2});
    ParamTensor b("b", {1});
    a.grad = {3.0, 0.0};
    b.grad = {4.0};
    std::vector<ParamTensor*> params{&a, &b};
    CHECK(clip_grad_norm(params, 0.5) == doctest::Approx(5.0));
    CHECK(a.grad[0] == doctest::Approx(0.3));
    CHECK(b.grad[0] == doctest::Approx(0.4));
    CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(0.5));
    CHECK(a.grad[0] == doctest::Approx(0.3));
}

TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(99);
    Mlp net("net", {3, 4, 2}, rng);
    std::vector<ParamTensor*> params;
    net.collect(params);
    std::vector<const ParamTensor*> cparams(params.begin(), params.end());
    for (auto* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.1);
    Adam adam(params, {});
    adam.step(params);
    const std::string text = nlohmann::json{{"t", tensors_to_json(cparams)}, {"a", adam.to_json()}, {"r", rng_state(rng)}}.dump();

    const auto j = nlohmann::json::parse(text);
    Rng other_rng(1);
    Mlp other("net", {3, 4, 2}, other_rng);
    std::vector<ParamTensor*> oparams;
    other.collect(oparams);
    tensors_from_json(j.at("t"), oparams);
    Adam other_adam(oparams, {});
    other_adam.from_json(j.at("a"));
    restore_rng(other_rng, j.at("r").get<std::string>());
    for (std::size_t k = 0; k < params.size(); ++k) CHECK(params[k]->value == oparams[k]->value);
    CHECK(other_adam.steps() == adam.steps());
    CHECK(other_rng() == rng());

    Mlp wrong("net", {3, 5, 2}, other_rng);
    std::vector<ParamTensor*> wparams;
    wrong.collect(wparams);
    CHECK_THROWS_AS(tensors_from_json(j.at("t"), wparams), NnError);
}

TEST_CASE("Embedding gradients land on the looked-up row") {
    Rng rng(8);
    Embedding emb("e", 4, 3, rng);
    for (double v : emb.table.value) CHECK(std::abs(v) <= 1.0);
    std::vector<ParamTensor*> params;
    emb.collect(params);
    const std::vector<double> c = {0.5, -1.5, 2.0};
    auto loss = [&] {
        const auto r = emb.row(2);
        double l = 0.0;
        for (std::size_t i = 0; i < 3; ++i) l += c[i] * r[i] * r[i];
        return l;
    };
    emb.table.zero_grad();
    const auto r = emb.row(2);
    std::vector<double> d(3);
    for (std::size_t i = 0; i < 3; ++i) d[i] = 2.0 * c[i] * r[i];
    emb.accumulate_grad(2, d);
    CHECK(fd_check(params, loss) < 1e-4);
    CHECK_THROWS_AS((void)emb.row(4), NnError);
}
