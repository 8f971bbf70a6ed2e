#include "udddm/network.hpp"

#include <cmath>
#include <stdexcept>

#include "udddm/rng.hpp"

namespace udddm {

Activation activation_from_name(const std::string& name) {
    if (name == "silu") return Activation::silu;
    if (name == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + name + "' (expected silu or tanh)");
}

const char* activation_name(Activation a) {
    return a == Activation::silu ? "silu" : "tanh";
}

NetworkParams NetworkParams::zeros_like(const NetworkParams& p) {
    NetworkParams z;
    z.w.reserve(p.w.size());
    z.b.reserve(p.b.size());
    for (const auto& m : p.w) z.w.push_back(Matrix::zeros(m.rows, m.cols));
    for (const auto& v : p.b) z.b.emplace_back(v.size(), 0.0);
    return z;
}

std::size_t NetworkParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& m : w) n += m.a.size();
    for (const auto& v : b) n += v.size();
    return n;
}

bool NetworkParams::all_finite() const {
    for (const auto& m : w)
        for (double x : m.a)
            if (!std::isfinite(x)) return false;
    for (const auto& v : b)
        for (double x : v)
            if (!std::isfinite(x)) return false;
    return true;
}

std::vector<double*> NetworkParams::scalar_view() {
    std::vector<double*> out;
    out.reserve(scalar_count());
    for (std::size_t l = 0; l < w.size(); ++l) {
        for (auto& x : w[l].a) out.push_back(&x);
        for (auto& x : b[l]) out.push_back(&x);
    }
    return out;
}

std::vector<const double*> NetworkParams::scalar_view() const {
    std::vector<const double*> out;
    out.reserve(scalar_count());
    for (std::size_t l = 0; l < w.size(); ++l) {
        for (const auto& x : w[l].a) out.push_back(&x);
        for (const auto& x : b[l]) out.push_back(&x);
    }
    return out;
}

std::vector<double> NetworkParams::to_flat() const {
    std::vector<double> flat;
    flat.reserve(scalar_count());
    for (std::size_t l = 0; l < w.size(); ++l) {
        flat.insert(flat.end(), w[l].a.begin(), w[l].a.end());
        flat.insert(flat.end(), b[l].begin(), b[l].end());
    }
    return flat;
}

void NetworkParams::from_flat(std::span<const double> flat) {
    if (flat.size() != scalar_count())
        throw std::invalid_argument("NetworkParams::from_flat: size mismatch");
    std::size_t i = 0;
    for (std::size_t l = 0; l < w.size(); ++l) {
        for (auto& x : w[l].a) x = flat[i++];
        for (auto& x : b[l]) x = flat[i++];
    }
}

std::vector<double> time_embedding(int t, int T, int dim) {
    if (dim < 2 || dim % 2 != 0)
        throw std::invalid_argument("time_embedding: dim must be even and >= 2");
    if (t < 1 || t > T) throw std::out_of_range("time_embedding: t outside 1..T");
    const int half = dim / 2;
    const double u = static_cast<double>(t) / static_cast<double>(T);
    std::vector<double> emb(static_cast<std::size_t>(dim));
    const double log_max_freq = std::log(1000.0);
    for (int k = 0; k < half; ++k) {
        const double freq =
            half == 1 ? 1.0 : std::exp(log_max_freq * static_cast<double>(k) / static_cast<double>(half - 1));
        emb[static_cast<std::size_t>(k)] = std::sin(freq * u);
        emb[static_cast<std::size_t>(half + k)] = std::cos(freq * u);
    }
    return emb;
}

namespace {

inline double act_forward(Activation a, double x) {
    if (a == Activation::silu) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return x * s;
    }
    return std::tanh(x);
}

inline double act_backward(Activation a, double x) {
    if (a == Activation::silu) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
    }
    const double th = std::tanh(x);
    return 1.0 - th * th;
}

}  // namespace

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.data_dim < 1) throw std::invalid_argument("network: data_dim must be >= 1");
    if (cfg_.time_embed_dim < 2 || cfg_.time_embed_dim % 2 != 0)
        throw std::invalid_argument("network: time_embed_dim must be even and >= 2");
    for (int h : cfg_.hidden_dims)
        if (h < 1) throw std::invalid_argument("network: hidden dims must be >= 1");
    dims_.push_back(input_dim());
    for (int h : cfg_.hidden_dims) dims_.push_back(h);
    dims_.push_back(cfg_.data_dim);
}

NetworkParams Network::init_params() const {
    NetworkParams p;
    const std::size_t layers = dims_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const int fan_in = dims_[l];
        const int fan_out = dims_[l + 1];
        Matrix m = Matrix::zeros(fan_out, fan_in);
        if (l + 1 < layers) {
            auto eng = make_engine(derive_seed(cfg_.seed, l, "layer"));
            const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& x : m.a) x = scale * normal(eng);
        }
        // last layer stays zero: f_theta starts at a(sigma) * x_t
        p.w.push_back(std::move(m));
        p.b.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
    }
    return p;
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
        n += static_cast<std::size_t>(dims_[l + 1]) * dims_[l] + static_cast<std::size_t>(dims_[l + 1]);
    return n;
}

std::vector<double> Network::forward(const NetworkParams& p, std::span<const double> x0_est,
                                     std::span<const double> x_t, int t, const Schedule& schedule,
                                     ForwardTrace* trace) const {
    const auto d = static_cast<std::size_t>(cfg_.data_dim);
    if (x0_est.size() != d || x_t.size() != d)
        throw std::invalid_argument("network forward: input dimension mismatch");
    if (p.w.size() != dims_.size() - 1)
        throw std::invalid_argument("network forward: params do not match config");

    std::vector<double> z;
    z.reserve(static_cast<std::size_t>(input_dim()));
    z.insert(z.end(), x0_est.begin(), x0_est.end());
    z.insert(z.end(), x_t.begin(), x_t.end());
    const auto emb = time_embedding(t, schedule_steps(schedule), cfg_.time_embed_dim);
    z.insert(z.end(), emb.begin(), emb.end());

    if (trace) {
        trace->input = z;
        trace->pre.clear();
        trace->post.clear();
    }

    const std::size_t layers = p.w.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& m = p.w[l];
        if (m.cols != static_cast<int>(z.size()))
            throw std::invalid_argument("network forward: layer shape mismatch");
        std::vector<double> h(static_cast<std::size_t>(m.rows));
        for (int r = 0; r < m.rows; ++r) {
            double acc = p.b[l][static_cast<std::size_t>(r)];
            const double* row = &m.a[static_cast<std::size_t>(r) * m.cols];
            for (int c = 0; c < m.cols; ++c) acc += row[c] * z[static_cast<std::size_t>(c)];
            h[static_cast<std::size_t>(r)] = acc;
        }
        if (trace) trace->pre.push_back(h);
        if (l + 1 < layers) {
            for (auto& x : h) x = act_forward(cfg_.activation, x);
            if (trace) trace->post.push_back(h);
        }
        z = std::move(h);
    }
    return z;
}

std::vector<double> Network::f_theta(const NetworkParams& p, std::span<const double> x0_est,
                                     std::span<const double> x_t, int t, const Schedule& schedule,
                                     ForwardTrace* trace) const {
    const auto c = unified_coeffs(schedule, t);
    auto out = forward(p, x0_est, x_t, t, schedule, trace);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.a * x_t[i] + c.b * out[i];
    return out;
}

NetworkParams Network::backward(const NetworkParams& p, std::span<const double> x0_est,
                                std::span<const double> x_t, int t, const Schedule& schedule,
                                std::span<const double> upstream) const {
    ForwardTrace trace;
    forward(p, x0_est, x_t, t, schedule, &trace);
    NetworkParams grad = NetworkParams::zeros_like(p);
    backward_accumulate(p, trace, upstream, t, schedule, grad);
    return grad;
}

void Network::backward_accumulate(const NetworkParams& p, const ForwardTrace& trace,
                                  std::span<const double> upstream, int t,
                                  const Schedule& schedule, NetworkParams& grad) const {
    if (upstream.size() != static_cast<std::size_t>(cfg_.data_dim))
        throw std::invalid_argument("network backward: upstream dimension mismatch");
    const auto coeff = unified_coeffs(schedule, t);
    const std::size_t layers = p.w.size();

    // dL/dF = b(sigma_t) * upstream
    std::vector<double> g(upstream.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = coeff.b * upstream[i];

    for (std::size_t l = layers; l-- > 0;) {
        const std::vector<double>& in =
            l == 0 ? trace.input : trace.post[l - 1];
        Matrix& gw = grad.w[l];
        auto& gb = grad.b[l];
        const Matrix& m = p.w[l];
        for (int r = 0; r < m.rows; ++r) {
            const double gr = g[static_cast<std::size_t>(r)];
            gb[static_cast<std::size_t>(r)] += gr;
            double* gw_row = &gw.a[static_cast<std::size_t>(r) * gw.cols];
            for (int c = 0; c < m.cols; ++c) gw_row[c] += gr * in[static_cast<std::size_t>(c)];
        }
        if (l == 0) break;
        std::vector<double> gprev(static_cast<std::size_t>(m.cols), 0.0);
        for (int r = 0; r < m.rows; ++r) {
            const double gr = g[static_cast<std::size_t>(r)];
            const double* row = &m.a[static_cast<std::size_t>(r) * m.cols];
            for (int c = 0; c < m.cols; ++c) gprev[static_cast<std::size_t>(c)] += gr * row[c];
        }
        const auto& pre = trace.pre[l - 1];
        for (std::size_t c = 0; c < gprev.size(); ++c)
            gprev[c] *= act_backward(cfg_.activation, pre[c]);
        g = std::move(gprev);
    }
}

}  // namespace udddm
