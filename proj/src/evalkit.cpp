#include "udddm/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "udddm/density.hpp"
#include "udddm/rng.hpp"

namespace udddm {

DatasetKind dataset_kind_from_name(const std::string& name) {
    if (name == "eight-gaussians") return DatasetKind::eight_gaussians;
    if (name == "two-moons") return DatasetKind::two_moons;
    if (name == "isotropic-gaussian") return DatasetKind::isotropic_gaussian;
    if (name == "gmm") return DatasetKind::gmm;
    throw std::invalid_argument("unknown dataset kind '" + name + "'");
}

const char* dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::eight_gaussians: return "eight-gaussians";
        case DatasetKind::two_moons: return "two-moons";
        case DatasetKind::isotropic_gaussian: return "isotropic-gaussian";
        case DatasetKind::gmm: return "gmm";
    }
    return "?";
}

static constexpr double kTwoPi = 6.283185307179586476925286766559;

SampleSet generate_dataset(const DatasetSpec& spec) {
    if (spec.n_data < 1) throw std::invalid_argument("dataset: n_data must be >= 1");
    auto eng = make_engine(derive_seed(spec.seed, 0, "dataset"));
    SampleSet out;
    out.n = spec.n_data;

    switch (spec.kind) {
        case DatasetKind::eight_gaussians: {
            if (spec.dim != 2) throw std::invalid_argument("eight-gaussians: dim must be 2");
            out.dim = 2;
            out.data.resize(static_cast<std::size_t>(out.n) * 2);
            for (std::int64_t i = 0; i < out.n; ++i) {
                const auto comp = uniform_int(eng, 0, 7);
                const double ang = kTwoPi * static_cast<double>(comp) / 8.0;
                double g[2];
                fill_normal(eng, g);
                out.data[static_cast<std::size_t>(i) * 2] =
                    spec.radius * std::cos(ang) + spec.component_std * g[0];
                out.data[static_cast<std::size_t>(i) * 2 + 1] =
                    spec.radius * std::sin(ang) + spec.component_std * g[1];
            }
            return out;
        }
        case DatasetKind::two_moons: {
            if (spec.dim != 2) throw std::invalid_argument("two-moons: dim must be 2");
            out.dim = 2;
            out.data.resize(static_cast<std::size_t>(out.n) * 2);
            for (std::int64_t i = 0; i < out.n; ++i) {
                const bool upper = uniform01(eng) < 0.5;
                const double ang = uniform01(eng) * (kTwoPi / 2.0);  // [0, pi)
                double g[2];
                fill_normal(eng, g);
                double x = upper ? std::cos(ang) : 1.0 - std::cos(ang);
                double y = upper ? std::sin(ang) : 0.5 - std::sin(ang);
                out.data[static_cast<std::size_t>(i) * 2] = x + spec.noise_std * g[0];
                out.data[static_cast<std::size_t>(i) * 2 + 1] = y + spec.noise_std * g[1];
            }
            return out;
        }
        case DatasetKind::isotropic_gaussian: {
            auto mu = spec.mu;
            if (mu.empty()) mu.assign(static_cast<std::size_t>(spec.dim), 0.0);
            const auto d = AnalyticDensity::isotropic(mu, spec.s);
            out.dim = d.dim;
            out.data.resize(static_cast<std::size_t>(out.n) * d.dim);
            for (std::int64_t i = 0; i < out.n; ++i)
                d.draw(eng, std::span<double>(&out.data[static_cast<std::size_t>(i) * d.dim],
                                              static_cast<std::size_t>(d.dim)));
            return out;
        }
        case DatasetKind::gmm: {
            std::vector<GaussianComponent> comps;
            comps.reserve(spec.components.size());
            for (const auto& c : spec.components) comps.push_back({c.weight, c.mu, c.s});
            const auto d = AnalyticDensity::mixture(std::move(comps));
            out.dim = d.dim;
            out.data.resize(static_cast<std::size_t>(out.n) * d.dim);
            for (std::int64_t i = 0; i < out.n; ++i)
                d.draw(eng, std::span<double>(&out.data[static_cast<std::size_t>(i) * d.dim],
                                              static_cast<std::size_t>(d.dim)));
            return out;
        }
    }
    throw std::logic_error("unreachable dataset kind");
}

double wasserstein2_sq_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein2_sq_1d: empty sample set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    // Integral over u in (0,1) of (Fa^-1(u) - Fb^-1(u))^2 with piecewise
    // constant empirical quantile functions: sweep the merged breakpoints
    // i/na and j/nb.
    const std::size_t na = a.size(), nb = b.size();
    std::size_t ia = 0, ib = 0;
    double prev = 0.0, acc = 0.0;
    while (ia < na && ib < nb) {
        const double next_a = static_cast<double>(ia + 1) / static_cast<double>(na);
        const double next_b = static_cast<double>(ib + 1) / static_cast<double>(nb);
        const double next = std::min(next_a, next_b);
        const double diff = a[ia] - b[ib];
        acc += diff * diff * (next - prev);
        prev = next;
        if (next_a <= next) ++ia;
        if (next_b <= next) ++ib;
    }
    return acc;
}

double sliced_wasserstein(const SampleSet& a, const SampleSet& b, int projections,
                          std::uint64_t seed) {
    if (a.n == 0 || b.n == 0) throw std::invalid_argument("sliced_wasserstein: empty sample set");
    if (a.dim != b.dim) throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
    if (projections < 1) throw std::invalid_argument("sliced_wasserstein: projections must be >= 1");

    auto eng = make_engine(derive_seed(seed, 0, "sw-projections"));
    const int d = a.dim;
    std::vector<double> dir(static_cast<std::size_t>(d));
    std::vector<double> pa(static_cast<std::size_t>(a.n)), pb(static_cast<std::size_t>(b.n));
    double total = 0.0;
    for (int p = 0; p < projections; ++p) {
        double norm = 0.0;
        do {
            fill_normal(eng, dir);
            norm = 0.0;
            for (double v : dir) norm += v * v;
        } while (norm < 1e-24);
        norm = std::sqrt(norm);
        for (double& v : dir) v /= norm;

        for (std::int64_t i = 0; i < a.n; ++i) {
            const double* r = a.row(i);
            double acc = 0.0;
            for (int k = 0; k < d; ++k) acc += r[k] * dir[static_cast<std::size_t>(k)];
            pa[static_cast<std::size_t>(i)] = acc;
        }
        for (std::int64_t i = 0; i < b.n; ++i) {
            const double* r = b.row(i);
            double acc = 0.0;
            for (int k = 0; k < d; ++k) acc += r[k] * dir[static_cast<std::size_t>(k)];
            pb[static_cast<std::size_t>(i)] = acc;
        }
        total += wasserstein2_sq_1d(pa, pb);
    }
    return std::sqrt(total / projections);
}

MomentReport moment_report(const SampleSet& samples, const AnalyticDensity& density) {
    if (samples.dim != density.dim)
        throw std::invalid_argument("moment_report: dimension mismatch");
    const auto d = static_cast<std::size_t>(samples.dim);
    const auto n = static_cast<double>(samples.n);

    std::vector<double> emp_mean(d, 0.0);
    for (std::int64_t i = 0; i < samples.n; ++i)
        for (std::size_t k = 0; k < d; ++k) emp_mean[k] += samples.row(i)[k];
    for (auto& m : emp_mean) m /= n;

    std::vector<double> emp_cov(d * d, 0.0);
    for (std::int64_t i = 0; i < samples.n; ++i) {
        const double* r = samples.row(i);
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = 0; q < d; ++q)
                emp_cov[p * d + q] += (r[p] - emp_mean[p]) * (r[q] - emp_mean[q]);
    }
    for (auto& c : emp_cov) c /= n;

    // standard error of each covariance entry from the empirical fourth
    // moments, so the z-scales stay valid for mixtures too
    std::vector<double> cov_var(d * d, 0.0);
    for (std::int64_t i = 0; i < samples.n; ++i) {
        const double* r = samples.row(i);
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = 0; q < d; ++q) {
                const double prod = (r[p] - emp_mean[p]) * (r[q] - emp_mean[q]) - emp_cov[p * d + q];
                cov_var[p * d + q] += prod * prod;
            }
    }
    for (auto& v : cov_var) v /= n;

    const auto true_mean = density.mean();
    const auto true_cov = density.covariance();

    // a zero standard error with a nonzero deviation is an unambiguous
    // mismatch (degenerate samples), flagged as an infinite z
    const auto zscore = [](double dev, double se) {
        if (se > 0.0) return dev / se;
        return dev == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), dev);
    };
    MomentReport rep;
    rep.mean_z.resize(d);
    rep.cov_z.resize(d * d);
    for (std::size_t k = 0; k < d; ++k) {
        rep.mean_z[k] = zscore(emp_mean[k] - true_mean[k], std::sqrt(emp_cov[k * d + k] / n));
        rep.max_abs_z = std::max(rep.max_abs_z, std::abs(rep.mean_z[k]));
    }
    for (std::size_t k = 0; k < d * d; ++k) {
        rep.cov_z[k] = zscore(emp_cov[k] - true_cov[k], std::sqrt(cov_var[k] / n));
        rep.max_abs_z = std::max(rep.max_abs_z, std::abs(rep.cov_z[k]));
    }
    return rep;
}

void export_plot_text(const SampleSet& s, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write plot export: " + path);
    os.precision(17);
    for (std::int64_t i = 0; i < s.n; ++i) {
        const double* r = s.row(i);
        for (int k = 0; k < s.dim; ++k) os << r[k] << (k + 1 == s.dim ? '\n' : ' ');
    }
}

}  // namespace udddm
