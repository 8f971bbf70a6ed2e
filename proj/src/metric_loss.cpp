#include "udddm/metric_loss.hpp"

#include <cmath>
#include <stdexcept>

namespace udddm {

static void check_inputs(std::span<const double> x, std::span<const double> y, double c) {
    if (x.size() != y.size())
        throw std::invalid_argument("pseudo_huber: dimension mismatch");
    if (!(c > 0.0)) throw std::invalid_argument("pseudo_huber: c must be > 0");
}

double pseudo_huber(std::span<const double> x, std::span<const double> y, double c) {
    check_inputs(x, y, c);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sq += d * d;
    }
    // sqrt(sq + c^2) - c computed as sq / (sqrt(sq + c^2) + c) to avoid
    // cancellation when sq << c^2.
    return sq / (std::sqrt(sq + c * c) + c);
}

std::vector<double> pseudo_huber_grad(std::span<const double> x,
                                      std::span<const double> y, double c) {
    check_inputs(x, y, c);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sq += d * d;
    }
    const double denom = std::sqrt(sq + c * c);
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = (x[i] - y[i]) / denom;
    return g;
}

AdaptiveWeights adaptive_weights(long long epoch) {
    if (epoch < 0) throw std::invalid_argument("adaptive_weights: epoch must be >= 0");
    AdaptiveWeights w;
    w.w_guide = 1.0 / static_cast<double>(epoch + 1);
    w.w_iter = 1.0 - w.w_guide;
    return w;
}

AdaptiveLossResult adaptive_loss(std::span<const double> pred,
                                 std::span<const double> x0_true,
                                 std::span<const double> x0_est,
                                 long long epoch, double c) {
    if (pred.size() != x0_true.size() || pred.size() != x0_est.size())
        throw std::invalid_argument("adaptive_loss: dimension mismatch");
    const auto w = adaptive_weights(epoch);

    AdaptiveLossResult r;
    r.guide = pseudo_huber(pred, x0_true, c);
    r.iter = pseudo_huber(pred, x0_est, c);
    r.value = w.w_guide * r.guide + w.w_iter * r.iter;

    const auto gg = pseudo_huber_grad(pred, x0_true, c);
    const auto gi = pseudo_huber_grad(pred, x0_est, c);
    r.grad.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        r.grad[i] = w.w_guide * gg[i] + w.w_iter * gi[i];
    return r;
}

}  // namespace udddm
