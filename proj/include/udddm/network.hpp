#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "udddm/schedules.hpp"

namespace udddm {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;  // row-major

    static Matrix zeros(int r, int c) { return Matrix{r, c, std::vector<double>(static_cast<std::size_t>(r) * c, 0.0)}; }
    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

enum class Activation { silu, tanh };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a);

struct NetworkConfig {
    int data_dim = 2;
    std::vector<int> hidden_dims = {64, 64};
    int time_embed_dim = 16;  // must be even
    Activation activation = Activation::silu;
    std::uint64_t seed = 42;
};

// Weight matrices and bias vectors in layer order. Gradients, Adam moments
// and EMA shadows reuse the same shape.
struct NetworkParams {
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;

    static NetworkParams zeros_like(const NetworkParams& p);
    std::size_t scalar_count() const;
    bool all_finite() const;

    std::vector<double*> scalar_view();              // fixed order: w0,b0,w1,b1,...
    std::vector<const double*> scalar_view() const;

    std::vector<double> to_flat() const;
    void from_flat(std::span<const double> flat);
};

// Sinusoidal embedding of t/T at dim/2 geometrically spaced frequencies
// between 1 and 1000; layout [sin..., cos...]. Entries lie in [-1, 1].
std::vector<double> time_embedding(int t, int T, int dim);

// Cached intermediate activations of one forward pass, consumed by the
// trace-reusing backward overload.
struct ForwardTrace {
    std::vector<double> input;                 // concatenated (x0_est, x_t, emb)
    std::vector<std::vector<double>> pre;      // pre-activations per layer
    std::vector<std::vector<double>> post;     // activations per hidden layer
};

// F_theta(x0_est, x_t, t): an MLP over the concatenation of both vectors and
// the time embedding. The final layer is linear; hidden layers use a smooth
// activation so the map stays twice continuously differentiable.
class Network {
public:
    explicit Network(NetworkConfig cfg);

    const NetworkConfig& config() const { return cfg_; }

    // Fan-in scaled normal init from the config seed; the output layer is
    // zeroed so f_theta starts as the pure a(sigma)*x_t branch.
    NetworkParams init_params() const;

    std::size_t param_count() const;

    std::vector<double> forward(const NetworkParams& p, std::span<const double> x0_est,
                                std::span<const double> x_t, int t, const Schedule& schedule,
                                ForwardTrace* trace = nullptr) const;

    // a(sigma_t) * x_t + b(sigma_t) * F_theta(x0_est, x_t, t)
    std::vector<double> f_theta(const NetworkParams& p, std::span<const double> x0_est,
                                std::span<const double> x_t, int t, const Schedule& schedule,
                                ForwardTrace* trace = nullptr) const;

    // Parameter gradient of upstream . f_theta, i.e. the chain through the
    // b(sigma_t) blend into F. Inputs receive no gradient.
    NetworkParams backward(const NetworkParams& p, std::span<const double> x0_est,
                           std::span<const double> x_t, int t, const Schedule& schedule,
                           std::span<const double> upstream) const;

    // Accumulating variant reusing a recorded trace; used by the training
    // loop to avoid a second forward pass.
    void backward_accumulate(const NetworkParams& p, const ForwardTrace& trace,
                             std::span<const double> upstream, int t,
                             const Schedule& schedule, NetworkParams& grad) const;

    int input_dim() const { return 2 * cfg_.data_dim + cfg_.time_embed_dim; }

private:
    NetworkConfig cfg_;
    std::vector<int> dims_;  // input_dim, hidden..., data_dim
};

}  // namespace udddm
