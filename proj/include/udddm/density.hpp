#pragma once

#include <random>
#include <span>
#include <vector>

namespace udddm {

enum class DensityKind { isotropic_gaussian, gmm };

struct GaussianComponent {
    double weight = 1.0;
    std::vector<double> mu;
    double s = 1.0;  // isotropic standard deviation
};

// Data densities with closed-form marginals at every noise level: a single
// isotropic Gaussian or a mixture of them. Weights must sum to one.
struct AnalyticDensity {
    DensityKind kind = DensityKind::isotropic_gaussian;
    int dim = 1;
    std::vector<double> mu;  // isotropic_gaussian
    double s = 1.0;
    std::vector<GaussianComponent> components;  // gmm

    static AnalyticDensity isotropic(std::vector<double> mu, double s);
    static AnalyticDensity mixture(std::vector<GaussianComponent> components);

    std::vector<double> mean() const;
    // Row-major dim x dim covariance.
    std::vector<double> covariance() const;

    void draw(std::mt19937_64& eng, std::span<double> out) const;
};

}  // namespace udddm
