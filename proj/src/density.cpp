#include "udddm/density.hpp"

#include <cmath>
#include <stdexcept>

#include "udddm/rng.hpp"

namespace udddm {

AnalyticDensity AnalyticDensity::isotropic(std::vector<double> mu, double s) {
    if (mu.empty()) throw std::invalid_argument("density: mu must be non-empty");
    if (!(s > 0.0)) throw std::invalid_argument("density: s must be > 0");
    AnalyticDensity d;
    d.kind = DensityKind::isotropic_gaussian;
    d.dim = static_cast<int>(mu.size());
    d.mu = std::move(mu);
    d.s = s;
    return d;
}

AnalyticDensity AnalyticDensity::mixture(std::vector<GaussianComponent> components) {
    if (components.empty()) throw std::invalid_argument("density: mixture needs components");
    if (components.size() > 16)
        throw std::invalid_argument("density: at most 16 mixture components supported");
    const auto dim = components.front().mu.size();
    double wsum = 0.0;
    for (const auto& c : components) {
        if (c.mu.size() != dim) throw std::invalid_argument("density: component dim mismatch");
        if (!(c.weight > 0.0)) throw std::invalid_argument("density: weights must be positive");
        if (!(c.s > 0.0)) throw std::invalid_argument("density: component s must be > 0");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw std::invalid_argument("density: weights must sum to 1 within 1e-12");
    AnalyticDensity d;
    d.kind = DensityKind::gmm;
    d.dim = static_cast<int>(dim);
    d.components = std::move(components);
    return d;
}

std::vector<double> AnalyticDensity::mean() const {
    if (kind == DensityKind::isotropic_gaussian) return mu;
    std::vector<double> m(static_cast<std::size_t>(dim), 0.0);
    for (const auto& c : components)
        for (int i = 0; i < dim; ++i) m[static_cast<std::size_t>(i)] += c.weight * c.mu[static_cast<std::size_t>(i)];
    return m;
}

std::vector<double> AnalyticDensity::covariance() const {
    const auto n = static_cast<std::size_t>(dim);
    std::vector<double> cov(n * n, 0.0);
    if (kind == DensityKind::isotropic_gaussian) {
        for (std::size_t i = 0; i < n; ++i) cov[i * n + i] = s * s;
        return cov;
    }
    // E[x x^T] - m m^T with component contributions w (s^2 I + mu mu^T)
    const auto m = mean();
    for (const auto& c : components) {
        for (std::size_t i = 0; i < n; ++i) {
            cov[i * n + i] += c.weight * c.s * c.s;
            for (std::size_t j = 0; j < n; ++j) cov[i * n + j] += c.weight * c.mu[i] * c.mu[j];
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cov[i * n + j] -= m[i] * m[j];
    return cov;
}

void AnalyticDensity::draw(std::mt19937_64& eng, std::span<double> out) const {
    if (out.size() != static_cast<std::size_t>(dim))
        throw std::invalid_argument("density draw: output dimension mismatch");
    if (kind == DensityKind::isotropic_gaussian) {
        fill_normal(eng, out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu[i] + s * out[i];
        return;
    }
    const double u = uniform01(eng);
    double acc = 0.0;
    const GaussianComponent* pick = &components.back();
    for (const auto& c : components) {
        acc += c.weight;
        if (u < acc) {
            pick = &c;
            break;
        }
    }
    fill_normal(eng, out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pick->mu[i] + pick->s * out[i];
}

}  // namespace udddm
