#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace filmgen::nn {

using Rng = std::mt19937_64;
using Vector = std::vector<double>;

class NnError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Learnable tensor with its gradient accumulator. Shape is fixed at creation.
class ParamTensor {
public:
    ParamTensor() = default;
    ParamTensor(std::string name, std::vector<std::size_t> shape);

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return value.size(); }
    void zero_grad();

    std::vector<double> value;
    std::vector<double> grad;

private:
    std::string name_;
    std::vector<std::size_t> shape_;
};

/// Uniform in [-bound, bound].
void init_uniform(ParamTensor& t, double bound, Rng& rng);

/// y = W x + b, W stored row-major as [out x in].
class Linear {
public:
    Linear() = default;
    Linear(std::string name, std::size_t in, std::size_t out, Rng& rng);

    [[nodiscard]] std::size_t in_size() const { return in_; }
    [[nodiscard]] std::size_t out_size() const { return out_; }

    void forward(std::span<const double> x, std::span<double> y) const;
    /// Accumulates dW, db; writes dx when non-empty.
    void backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

    void collect(std::vector<ParamTensor*>& out);
    void collect(std::vector<const ParamTensor*>& out) const;

    ParamTensor weight;
    ParamTensor bias;

private:
    std::size_t in_ = 0;
    std::size_t out_ = 0;
};

/// Affine chain with tanh between layers and a linear output.
class Mlp {
public:
    struct Cache {
        std::vector<Vector> activations;  // input, then the output of every layer (post-tanh for hidden)
    };

    Mlp() = default;
    Mlp(std::string name, std::vector<std::size_t> sizes, Rng& rng);

    [[nodiscard]] std::size_t in_size() const { return sizes_.front(); }
    [[nodiscard]] std::size_t out_size() const { return sizes_.back(); }
    [[nodiscard]] const std::vector<std::size_t>& sizes() const { return sizes_; }

    Vector forward(std::span<const double> x, Cache* cache = nullptr) const;
    /// Returns dL/dx.
    Vector backward(const Cache& cache, std::span<const double> dy);

    void collect(std::vector<ParamTensor*>& out);
    void collect(std::vector<const ParamTensor*>& out) const;

    std::vector<Linear> layers;

private:
    std::vector<std::size_t> sizes_;
};

/// Gated recurrent unit cell:
///   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
/// Gate blocks are stacked as [r; z; n] in the weight rows.
class GruCell {
public:
    struct Cache {
        Vector x, h_prev, r, z, n, hn;  // hn = W_hn h + b_hn
    };

    GruCell() = default;
    GruCell(std::string name, std::size_t input, std::size_t hidden, Rng& rng);

    [[nodiscard]] std::size_t input_size() const { return input_; }
    [[nodiscard]] std::size_t hidden_size() const { return hidden_; }

    Vector step(std::span<const double> x, std::span<const double> h_prev, Cache* cache = nullptr) const;
    /// Accumulates parameter gradients; writes dL/dx and dL/dh_prev.
    void backward(const Cache& cache, std::span<const double> dh_next, std::span<double> dx, std::span<double> dh_prev);

    void collect(std::vector<ParamTensor*>& out);
    void collect(std::vector<const ParamTensor*>& out) const;

    ParamTensor w_input;   // [3H x I]
    ParamTensor w_hidden;  // [3H x H]
    ParamTensor b_input;   // [3H]
    ParamTensor b_hidden;  // [3H]

private:
    std::size_t input_ = 0;
    std::size_t hidden_ = 0;
};

/// Row lookup table.
class Embedding {
public:
    Embedding() = default;
    Embedding(std::string name, std::size_t rows, std::size_t dim, Rng& rng);

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t dim() const { return dim_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const;
    void accumulate_grad(std::size_t i, std::span<const double> d);

    void collect(std::vector<ParamTensor*>& out);
    void collect(std::vector<const ParamTensor*>& out) const;

    ParamTensor table;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
};

double sigmoid(double x);

/// Max-subtracted softmax. Throws on empty or non-finite input.
Vector softmax(std::span<const double> logits);
Vector log_softmax(std::span<const double> logits);
/// Index drawn by inverse CDF from one uniform draw of `rng`.
std::size_t categorical_sample(std::span<const double> probabilities, Rng& rng);
double log_prob(std::span<const double> probabilities, std::size_t index);
double entropy(std::span<const double> probabilities);

/// Sum of squared gradients over all tensors.
double grad_norm(std::span<ParamTensor* const> params);
/// Scales gradients in place so the global norm is at most max_norm. Returns the pre-clip norm.
double clip_grad_norm(std::span<ParamTensor* const> params, double max_norm);

struct AdamConfig {
    double learning_rate = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers follow the order of the tensor
/// list given at construction.
class Adam {
public:
    Adam() = default;
    Adam(std::span<ParamTensor* const> params, AdamConfig config);

    /// Throws NnError on any non-finite gradient, leaving parameters untouched.
    void step(std::span<ParamTensor* const> params);

    [[nodiscard]] const AdamConfig& config() const { return config_; }
    [[nodiscard]] std::uint64_t steps() const { return t_; }

    nlohmann::json to_json() const;
    void from_json(const nlohmann::json& j);

private:
    AdamConfig config_;
    std::uint64_t t_ = 0;
    std::vector<Vector> m_;
    std::vector<Vector> v_;
};

/// Self-describing text checkpoint: tensor names, shapes and values, optimizer
/// moments and the generator state. Doubles are written in shortest
/// round-trip form, so save/load is bit-exact.
nlohmann::json tensors_to_json(std::span<const ParamTensor* const> params);
void tensors_from_json(const nlohmann::json& j, std::span<ParamTensor* const> params);
std::string rng_state(const Rng& rng);
void restore_rng(Rng& rng, const std::string& state);

}  // namespace filmgen::nn
