#pragma once

#include <span>
#include <vector>

namespace udddm {

// Pseudo-Huber metric d(x,y) = sqrt(||x-y||^2 + c^2) - c. Quadratic for
// errors below c, asymptotically the L2 norm above it, and smooth
// everywhere including x == y.
double pseudo_huber(std::span<const double> x, std::span<const double> y, double c);

// d d(x,y) / dx = (x - y) / sqrt(||x-y||^2 + c^2). Finite for all inputs.
std::vector<double> pseudo_huber_grad(std::span<const double> x,
                                      std::span<const double> y, double c);

struct AdaptiveWeights {
    double w_guide = 1.0;
    double w_iter = 0.0;
};

// Epoch-indexed blend: w_guide = 1/(n+1), w_iter = 1 - 1/(n+1). Epoch 0 is
// all guiding loss.
AdaptiveWeights adaptive_weights(long long epoch);

struct AdaptiveLossResult {
    double value = 0.0;
    double guide = 0.0;  // d(pred, x0_true)
    double iter = 0.0;   // d(pred, x0_est)
    std::vector<double> grad;  // d value / d pred
};

// value = w_guide * d(pred, x0_true) + w_iter * d(pred, x0_est). Both
// targets are constants; the gradient is with respect to pred only.
AdaptiveLossResult adaptive_loss(std::span<const double> pred,
                                 std::span<const double> x0_true,
                                 std::span<const double> x0_est,
                                 long long epoch, double c);

}  // namespace udddm
