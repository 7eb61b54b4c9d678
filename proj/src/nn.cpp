#include "filmgen/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace filmgen::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void require(bool ok, const std::string& what) {
    if (!ok) throw NnError(what);
}

}  // namespace

ParamTensor::ParamTensor(std::string name, std::vector<std::size_t> shape)
    : value(product(shape), 0.0), grad(product(shape), 0.0), name_(std::move(name)), shape_(std::move(shape)) {}

void ParamTensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void init_uniform(ParamTensor& t, double bound, Rng& rng) {
    for (auto& v : t.value) v = (2.0 * uniform01(rng) - 1.0) * bound;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {
    init_uniform(weight, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

void Linear::forward(std::span<const double> x, std::span<double> y) const {
    require(x.size() == in_ && y.size() == out_, weight.name() + ": dimension mismatch");
    const double* w = weight.value.data();
    for (std::size_t o = 0; o < out_; ++o) {
        const double* row = w + o * in_;
        double acc = bias.value[o];
        for (std::size_t i = 0; i < in_; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

void Linear::backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
    require(x.size() == in_ && dy.size() == out_, weight.name() + ": dimension mismatch");
    double* gw = weight.grad.data();
    const double* w = weight.value.data();
    if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t o = 0; o < out_; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        bias.grad[o] += g;
        double* grow = gw + o * in_;
        for (std::size_t i = 0; i < in_; ++i) grow[i] += g * x[i];
        if (!dx.empty()) {
            const double* row = w + o * in_;
            for (std::size_t i = 0; i < in_; ++i) dx[i] += g * row[i];
        }
    }
}

void Linear::collect(std::vector<ParamTensor*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

void Linear::collect(std::vector<const ParamTensor*>& out) const {
    out.push_back(&weight);
    out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::string name, std::vector<std::size_t> sizes, Rng& rng) : sizes_(std::move(sizes)) {
    require(sizes_.size() >= 2, name + ": an MLP needs at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
        require(sizes_[i] > 0 && sizes_[i + 1] > 0, name + ": layer sizes must be positive");
        layers.emplace_back(name + "." + std::to_string(i), sizes_[i], sizes_[i + 1], rng);
    }
}

Vector Mlp::forward(std::span<const double> x, Cache* cache) const {
    require(x.size() == in_size(), "mlp: input dimension mismatch");
    Vector cur(x.begin(), x.end());
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(cur);
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Vector next(layers[l].out_size());
        layers[l].forward(cur, next);
        if (l + 1 < layers.size()) {
            for (auto& v : next) v = std::tanh(v);
        }
        if (cache) cache->activations.push_back(next);
        cur = std::move(next);
    }
    return cur;
}

Vector Mlp::backward(const Cache& cache, std::span<const double> dy) {
    require(cache.activations.size() == layers.size() + 1, "mlp: cache does not match network");
    Vector grad(dy.begin(), dy.end());
    for (std::size_t l = layers.size(); l-- > 0;) {
        if (l + 1 < layers.size()) {
            const auto& act = cache.activations[l + 1];
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - act[i] * act[i];
        }
        Vector dx(layers[l].in_size());
        layers[l].backward(cache.activations[l], grad, dx);
        grad = std::move(dx);
    }
    return grad;
}

void Mlp::collect(std::vector<ParamTensor*>& out) {
    for (auto& l : layers) l.collect(out);
}

void Mlp::collect(std::vector<const ParamTensor*>& out) const {
    for (const auto& l : layers) l.collect(out);
}

// ---------------------------------------------------------------------------
// GruCell

GruCell::GruCell(std::string name, std::size_t input, std::size_t hidden, Rng& rng)
    : w_input(name + ".w_input", {3 * hidden, input}),
      w_hidden(name + ".w_hidden", {3 * hidden, hidden}),
      b_input(name + ".b_input", {3 * hidden}),
      b_hidden(name + ".b_hidden", {3 * hidden}),
      input_(input),
      hidden_(hidden) {
    require(input > 0 && hidden > 0, name + ": sizes must be positive");
    init_uniform(w_input, 1.0 / std::sqrt(static_cast<double>(input)), rng);
    init_uniform(w_hidden, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
}

Vector GruCell::step(std::span<const double> x, std::span<const double> h_prev, Cache* cache) const {
    require(x.size() == input_ && h_prev.size() == hidden_, "gru: dimension mismatch");
    const std::size_t H = hidden_;
    Vector gi(3 * H), gh(3 * H);
    for (std::size_t o = 0; o < 3 * H; ++o) {
        const double* wi = w_input.value.data() + o * input_;
        double a = b_input.value[o];
        for (std::size_t i = 0; i < input_; ++i) a += wi[i] * x[i];
        gi[o] = a;
        const double* wh = w_hidden.value.data() + o * H;
        double b = b_hidden.value[o];
        for (std::size_t i = 0; i < H; ++i) b += wh[i] * h_prev[i];
        gh[o] = b;
    }
    Vector r(H), z(H), n(H), hn(H), h(H);
    for (std::size_t j = 0; j < H; ++j) {
        r[j] = sigmoid(gi[j] + gh[j]);
        z[j] = sigmoid(gi[H + j] + gh[H + j]);
        hn[j] = gh[2 * H + j];
        n[j] = std::tanh(gi[2 * H + j] + r[j] * hn[j]);
        h[j] = (1.0 - z[j]) * n[j] + z[j] * h_prev[j];
    }
    if (cache) {
        cache->x.assign(x.begin(), x.end());
        cache->h_prev.assign(h_prev.begin(), h_prev.end());
        cache->r = std::move(r);
        cache->z = std::move(z);
        cache->n = std::move(n);
        cache->hn = std::move(hn);
    }
    return h;
}

void GruCell::backward(const Cache& c, std::span<const double> dh_next, std::span<double> dx,
                       std::span<double> dh_prev) {
    const std::size_t H = hidden_;
    require(dh_next.size() == H && dx.size() == input_ && dh_prev.size() == H, "gru: backward dimension mismatch");
    // Pre-activation gradients for the input-side (dgi) and hidden-side (dgh) affine maps.
    Vector dgi(3 * H), dgh(3 * H);
    for (std::size_t j = 0; j < H; ++j) {
        const double dh = dh_next[j];
        const double dn = dh * (1.0 - c.z[j]);
        const double dz = dh * (c.h_prev[j] - c.n[j]);
        const double dn_pre = dn * (1.0 - c.n[j] * c.n[j]);
        const double dr = dn_pre * c.hn[j];
        const double dr_pre = dr * c.r[j] * (1.0 - c.r[j]);
        const double dz_pre = dz * c.z[j] * (1.0 - c.z[j]);
        dgi[j] = dr_pre;
        dgh[j] = dr_pre;
        dgi[H + j] = dz_pre;
        dgh[H + j] = dz_pre;
        dgi[2 * H + j] = dn_pre;
        dgh[2 * H + j] = dn_pre * c.r[j];
        dh_prev[j] = dh * c.z[j];
    }
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t o = 0; o < 3 * H; ++o) {
        const double gi = dgi[o];
        const double gh = dgh[o];
        b_input.grad[o] += gi;
        b_hidden.grad[o] += gh;
        double* gwi = w_input.grad.data() + o * input_;
        const double* wi = w_input.value.data() + o * input_;
        for (std::size_t i = 0; i < input_; ++i) {
            gwi[i] += gi * c.x[i];
            dx[i] += gi * wi[i];
        }
        double* gwh = w_hidden.grad.data() + o * H;
        const double* wh = w_hidden.value.data() + o * H;
        for (std::size_t i = 0; i < H; ++i) {
            gwh[i] += gh * c.h_prev[i];
            dh_prev[i] += gh * wh[i];
        }
    }
}

void GruCell::collect(std::vector<ParamTensor*>& out) {
    out.insert(out.end(), {&w_input, &w_hidden, &b_input, &b_hidden});
}

void GruCell::collect(std::vector<const ParamTensor*>& out) const {
    out.insert(out.end(), {&w_input, &w_hidden, &b_input, &b_hidden});
}

// ---------------------------------------------------------------------------
// Embedding

Embedding::Embedding(std::string name, std::size_t rows, std::size_t dim, Rng& rng)
    : table(std::move(name), {rows, dim}), rows_(rows), dim_(dim) {
    // A lookup is a one-hot product with a single active input.
    init_uniform(table, 1.0, rng);
}

std::span<const double> Embedding::row(std::size_t i) const {
    require(i < rows_, table.name() + ": row index out of range");
    return {table.value.data() + i * dim_, dim_};
}

void Embedding::accumulate_grad(std::size_t i, std::span<const double> d) {
    require(i < rows_ && d.size() == dim_, table.name() + ": gradient shape mismatch");
    double* g = table.grad.data() + i * dim_;
    for (std::size_t j = 0; j < dim_; ++j) g[j] += d[j];
}

void Embedding::collect(std::vector<ParamTensor*>& out) { out.push_back(&table); }
void Embedding::collect(std::vector<const ParamTensor*>& out) const { out.push_back(&table); }

// ---------------------------------------------------------------------------
// Distributions

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vector log_softmax(std::span<const double> logits) {
    require(!logits.empty(), "softmax of empty logits");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        require(std::isfinite(v), "non-finite logit");
        mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    Vector out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

Vector softmax(std::span<const double> logits) {
    Vector out = log_softmax(logits);
    for (auto& v : out) v = std::exp(v);
    return out;
}

std::size_t categorical_sample(std::span<const double> probabilities, Rng& rng) {
    require(!probabilities.empty(), "cannot sample from an empty distribution");
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (probabilities[i] <= 0.0) continue;
        last_positive = i;
        acc += probabilities[i];
        if (u < acc) return i;
    }
    return last_positive;
}

double log_prob(std::span<const double> probabilities, std::size_t index) {
    require(index < probabilities.size(), "log_prob index out of range");
    return std::log(probabilities[index]);
}

double entropy(std::span<const double> probabilities) {
    double h = 0.0;
    for (double p : probabilities) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Optimisation

double grad_norm(std::span<ParamTensor* const> params) {
    double sq = 0.0;
    for (const auto* p : params) {
        for (double g : p->grad) sq += g * g;
    }
    return std::sqrt(sq);
}

double clip_grad_norm(std::span<ParamTensor* const> params, double max_norm) {
    const double norm = grad_norm(params);
    if (std::isfinite(norm) && norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto* p : params) {
            for (auto& g : p->grad) g *= scale;
        }
    }
    return norm;
}

Adam::Adam(std::span<ParamTensor* const> params, AdamConfig config) : config_(config) {
    require(config_.learning_rate > 0.0, "adam: learning rate must be > 0");
    for (const auto* p : params) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step(std::span<ParamTensor* const> params) {
    require(params.size() == m_.size(), "adam: parameter list does not match optimizer state");
    for (std::size_t k = 0; k < params.size(); ++k) {
        require(params[k]->size() == m_[k].size(), "adam: tensor shape changed");
        for (double g : params[k]->grad) {
            if (!std::isfinite(g)) throw NnError("adam: non-finite gradient in " + params[k]->name());
        }
    }
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = p.grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.value[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

nlohmann::json Adam::to_json() const {
    return {{"learning_rate", config_.learning_rate},
            {"beta1", config_.beta1},
            {"beta2", config_.beta2},
            {"epsilon", config_.epsilon},
            {"steps", t_},
            {"m", m_},
            {"v", v_}};
}

void Adam::from_json(const nlohmann::json& j) {
    config_.learning_rate = j.at("learning_rate").get<double>();
    config_.beta1 = j.at("beta1").get<double>();
    config_.beta2 = j.at("beta2").get<double>();
    config_.epsilon = j.at("epsilon").get<double>();
    t_ = j.at("steps").get<std::uint64_t>();
    auto m = j.at("m").get<std::vector<Vector>>();
    auto v = j.at("v").get<std::vector<Vector>>();
    require(m.size() == m_.size() && v.size() == v_.size(), "adam checkpoint does not match parameter list");
    for (std::size_t k = 0; k < m.size(); ++k) {
        require(m[k].size() == m_[k].size() && v[k].size() == v_[k].size(), "adam checkpoint shape mismatch");
    }
    m_ = std::move(m);
    v_ = std::move(v);
}

nlohmann::json tensors_to_json(std::span<const ParamTensor* const> params) {
    auto arr = nlohmann::json::array();
    for (const auto* p : params) {
        arr.push_back({{"name", p->name()}, {"shape", p->shape()}, {"values", p->value}});
    }
    return arr;
}

void tensors_from_json(const nlohmann::json& j, std::span<ParamTensor* const> params) {
    require(j.is_array() && j.size() == params.size(), "checkpoint tensor count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& item = j[k];
        auto& p = *params[k];
        require(item.at("name").get<std::string>() == p.name(), "checkpoint tensor name mismatch at " + p.name());
        require(item.at("shape").get<std::vector<std::size_t>>() == p.shape(), "checkpoint shape mismatch at " + p.name());
        auto values = item.at("values").get<Vector>();
        require(values.size() == p.size(), "checkpoint value count mismatch at " + p.name());
        p.value = std::move(values);
    }
}

std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void restore_rng(Rng& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
    if (!is) throw NnError("malformed generator state in checkpoint");
}

}  // namespace filmgen::nn
