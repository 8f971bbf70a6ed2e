#include "udddm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "udddm/rng.hpp"

namespace udddm {

Integrator integrator_from_name(const std::string& name) {
    if (name == "euler") return Integrator::euler;
    if (name == "heun") return Integrator::heun;
    if (name == "rk4") return Integrator::rk4;
    throw std::invalid_argument("unknown integrator '" + name + "'");
}

namespace {

// Marginal of the noised density at one noise level: component k has mean
// m_coef * mu_k and variance sig_mult * s_k^2 + add_var.
struct NoiseLevel {
    double m_coef = 1.0;
    double sig_mult = 1.0;
    double add_var = 0.0;
};

NoiseLevel level_at_integer(const Schedule& schedule, int t) {
    NoiseLevel lv;
    if (const auto* vp = std::get_if<VpSchedule>(&schedule)) {
        const double ab = vp->alpha_bar_at(t);
        lv.m_coef = std::sqrt(ab);
        lv.sig_mult = ab;
        lv.add_var = 1.0 - ab;
        return lv;
    }
    const auto& ve = std::get<VeSchedule>(schedule);
    const double s = ve.sigma_at(t);
    lv.add_var = s * s;
    return lv;
}

// One unit schedule interval [klo, klo+1] with its interpolation context.
// VE: sigma linear on the segment. VP: ln(alpha_bar) linear, so the
// effective beta is constant on the segment and the tabled alpha_bar values
// are met exactly at both ends.
struct Segment {
    bool vp = false;
    int klo = 1;
    double sig_lo = 0.0, sig_slope = 0.0;   // VE
    double labar_lo = 0.0, labar_slope = 0.0;  // VP
};

Segment make_segment(const Schedule& schedule, int klo) {
    const int T = schedule_steps(schedule);
    if (klo < 1 || klo + 1 > T) throw std::out_of_range("schedule segment out of range");
    Segment seg;
    seg.klo = klo;
    if (const auto* vp = std::get_if<VpSchedule>(&schedule)) {
        seg.vp = true;
        seg.labar_lo = std::log(vp->alpha_bar_at(klo));
        seg.labar_slope = std::log(vp->alpha_bar_at(klo + 1)) - seg.labar_lo;
        return seg;
    }
    const auto& ve = std::get<VeSchedule>(schedule);
    seg.sig_lo = ve.sigma_at(klo);
    seg.sig_slope = ve.sigma_at(klo + 1) - seg.sig_lo;
    return seg;
}

int clamp_segment_index(const Schedule& schedule, double t) {
    const int T = schedule_steps(schedule);
    if (t < 1.0 || t > static_cast<double>(T))
        throw std::out_of_range("continuous time outside [1, T]");
    int klo = static_cast<int>(std::floor(t));
    return std::min(std::max(klo, 1), T - 1);
}

NoiseLevel level_on_segment(const Segment& seg, double t) {
    NoiseLevel lv;
    const double u = t - static_cast<double>(seg.klo);
    if (seg.vp) {
        const double ab = std::exp(seg.labar_lo + u * seg.labar_slope);
        lv.m_coef = std::sqrt(ab);
        lv.sig_mult = ab;
        lv.add_var = 1.0 - ab;
        return lv;
    }
    const double s = seg.sig_lo + u * seg.sig_slope;
    lv.add_var = s * s;
    return lv;
}

// Exact score of the mixture marginal, log-sum-exp stabilised.
void score_at_level(const AnalyticDensity& density, std::span<const double> x,
                    const NoiseLevel& lv, std::span<double> out) {
    const auto d = static_cast<std::size_t>(density.dim);
    if (x.size() != d || out.size() != d)
        throw std::invalid_argument("score: dimension mismatch");

    if (density.kind == DensityKind::isotropic_gaussian) {
        const double v = lv.sig_mult * density.s * density.s + lv.add_var;
        for (std::size_t i = 0; i < d; ++i) out[i] = -(x[i] - lv.m_coef * density.mu[i]) / v;
        return;
    }

    const std::size_t K = density.components.size();
    std::vector<double> logits(K);
    double max_logit = -1e300;
    for (std::size_t k = 0; k < K; ++k) {
        const auto& c = density.components[k];
        const double v = lv.sig_mult * c.s * c.s + lv.add_var;
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = x[i] - lv.m_coef * c.mu[i];
            sq += diff * diff;
        }
        logits[k] = std::log(c.weight) - 0.5 * static_cast<double>(d) * std::log(v) - 0.5 * sq / v;
        max_logit = std::max(max_logit, logits[k]);
    }
    double z = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - max_logit);
        z += l;
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        const auto& c = density.components[k];
        const double v = lv.sig_mult * c.s * c.s + lv.add_var;
        const double r = logits[k] / z;
        for (std::size_t i = 0; i < d; ++i) out[i] += r * (-(x[i] - lv.m_coef * c.mu[i]) / v);
    }
}

// dx/dt on one segment at continuous time t.
void drift_on_segment(const AnalyticDensity& density, const Segment& seg,
                      std::span<const double> x, double t, const DriftOptions& opts,
                      std::span<double> out) {
    const auto lv = level_on_segment(seg, t);
    score_at_level(density, x, lv, out);
    if (opts.score_scale != 1.0)
        for (auto& v : out) v *= opts.score_scale;

    if (seg.vp) {
        const double beta_eff = -seg.labar_slope;
        if (opts.form == DriftForm::standard_half) {
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = -0.5 * beta_eff * (x[i] + out[i]);
        } else {
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = -0.5 * beta_eff * (x[i] - out[i]);
        }
        return;
    }
    const double u = t - static_cast<double>(seg.klo);
    const double sig = seg.sig_lo + u * seg.sig_slope;
    const double dsig2 = 2.0 * sig * seg.sig_slope;
    const double factor = opts.form == DriftForm::standard_half ? -0.5 * dsig2 : -dsig2;
    for (auto& v : out) v *= factor;
}

// Integrates one segment from t = klo+1 down to klo with n uniform steps.
void integrate_segment(const AnalyticDensity& density, const Segment& seg,
                       std::vector<double>& x, std::int64_t n, Integrator integ,
                       const DriftOptions& opts, OdeSolution* record) {
    const double t_hi = static_cast<double>(seg.klo + 1);
    const double h = -1.0 / static_cast<double>(n);
    const auto d = x.size();
    std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);

    for (std::int64_t i = 0; i < n; ++i) {
        const double t = t_hi + static_cast<double>(i) * h;
        switch (integ) {
            case Integrator::euler: {
                drift_on_segment(density, seg, x, t, opts, k1);
                for (std::size_t j = 0; j < d; ++j) x[j] += h * k1[j];
                break;
            }
            case Integrator::heun: {
                drift_on_segment(density, seg, x, t, opts, k1);
                for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + h * k1[j];
                drift_on_segment(density, seg, tmp, t + h, opts, k2);
                for (std::size_t j = 0; j < d; ++j) x[j] += 0.5 * h * (k1[j] + k2[j]);
                break;
            }
            case Integrator::rk4: {
                drift_on_segment(density, seg, x, t, opts, k1);
                for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + 0.5 * h * k1[j];
                drift_on_segment(density, seg, tmp, t + 0.5 * h, opts, k2);
                for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + 0.5 * h * k2[j];
                drift_on_segment(density, seg, tmp, t + 0.5 * h, opts, k3);
                for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + h * k3[j];
                drift_on_segment(density, seg, tmp, t + h, opts, k4);
                for (std::size_t j = 0; j < d; ++j)
                    x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                break;
            }
        }
        for (double v : x)
            if (!std::isfinite(v))
                throw std::runtime_error("pf ode integration produced a non-finite state");
        if (record) {
            record->path_times.push_back(t + h);
            record->path.push_back(x);
        }
    }
}

}  // namespace

std::vector<double> marginal_score(const AnalyticDensity& density, std::span<const double> x,
                                   int t, const Schedule& schedule) {
    std::vector<double> out(x.size());
    score_at_level(density, x, level_at_integer(schedule, t), out);
    return out;
}

AnalyticDensity noised_marginal(const AnalyticDensity& density, const Schedule& schedule, int t) {
    const auto lv = level_at_integer(schedule, t);
    const auto widen = [&](const std::vector<double>& mu, double s) {
        std::vector<double> m(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) m[i] = lv.m_coef * mu[i];
        return std::make_pair(std::move(m), std::sqrt(lv.sig_mult * s * s + lv.add_var));
    };
    if (density.kind == DensityKind::isotropic_gaussian) {
        auto [m, s] = widen(density.mu, density.s);
        return AnalyticDensity::isotropic(std::move(m), s);
    }
    std::vector<GaussianComponent> comps;
    comps.reserve(density.components.size());
    for (const auto& c : density.components) {
        auto [m, s] = widen(c.mu, c.s);
        comps.push_back({c.weight, std::move(m), s});
    }
    return AnalyticDensity::mixture(std::move(comps));
}

std::vector<double> pf_drift(const AnalyticDensity& density, std::span<const double> x,
                             double t, const Schedule& schedule, const DriftOptions& opts) {
    const auto seg = make_segment(schedule, clamp_segment_index(schedule, t));
    std::vector<double> out(x.size());
    drift_on_segment(density, seg, x, t, opts, out);
    return out;
}

OdeSolution integrate_pf_ode(const AnalyticDensity& density, const Schedule& schedule,
                             std::span<const double> x_start, int t_start, int t_end,
                             std::int64_t steps, Integrator integrator,
                             const DriftOptions& opts, bool record_path) {
    const int T = schedule_steps(schedule);
    if (t_end < 1 || t_start > T || t_start < t_end)
        throw std::invalid_argument("integrate_pf_ode: need 1 <= t_end <= t_start <= T");
    if (steps < 1) throw std::invalid_argument("integrate_pf_ode: steps must be >= 1");
    if (x_start.size() != static_cast<std::size_t>(density.dim))
        throw std::invalid_argument("integrate_pf_ode: state dimension mismatch");

    OdeSolution sol;
    sol.integrator = integrator;
    sol.endpoint.assign(x_start.begin(), x_start.end());
    if (record_path) {
        sol.path_times.push_back(static_cast<double>(t_start));
        sol.path.push_back(sol.endpoint);
    }
    if (t_start == t_end) return sol;

    const std::int64_t nseg = t_start - t_end;
    const std::int64_t base = steps / nseg;
    const std::int64_t rem = steps % nseg;
    std::int64_t seg_i = 0;
    for (int klo = t_start - 1; klo >= t_end; --klo, ++seg_i) {
        const std::int64_t n = std::max<std::int64_t>(base + (seg_i < rem ? 1 : 0), 1);
        const auto seg = make_segment(schedule, klo);
        integrate_segment(density, seg, sol.endpoint, n, integrator, opts,
                          record_path ? &sol : nullptr);
        sol.step_count += n;
    }
    return sol;
}

namespace {

struct GaussianMarginal {
    std::vector<double> mean;
    double var = 1.0;
};

GaussianMarginal gaussian_marginal_at(const AnalyticDensity& density, const Schedule& schedule,
                                      double t) {
    if (density.kind != DensityKind::isotropic_gaussian)
        throw std::invalid_argument("closed-form map requires an isotropic Gaussian density");
    const auto seg = make_segment(schedule, clamp_segment_index(schedule, t));
    const auto lv = level_on_segment(seg, t);
    GaussianMarginal g;
    g.mean.resize(density.mu.size());
    for (std::size_t i = 0; i < g.mean.size(); ++i) g.mean[i] = lv.m_coef * density.mu[i];
    g.var = lv.sig_mult * density.s * density.s + lv.add_var;
    return g;
}

}  // namespace

std::vector<double> gaussian_transport_map(const AnalyticDensity& density,
                                           const Schedule& schedule, std::span<const double> x,
                                           double t_start, double t_end) {
    const auto from = gaussian_marginal_at(density, schedule, t_start);
    const auto to = gaussian_marginal_at(density, schedule, t_end);
    const double contraction = std::sqrt(to.var / from.var);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = to.mean[i] + contraction * (x[i] - from.mean[i]);
    return out;
}

std::vector<double> true_solution_map(const AnalyticDensity& density, const Schedule& schedule,
                                      std::span<const double> x_t, int t, bool fallback_to_ode,
                                      std::int64_t fallback_steps) {
    if (density.kind == DensityKind::isotropic_gaussian)
        return gaussian_transport_map(density, schedule, x_t, static_cast<double>(t), 1.0);
    if (!fallback_to_ode)
        throw std::invalid_argument(
            "true_solution_map: no closed form for this density kind (enable the ODE fallback)");
    if (t == 1) return std::vector<double>(x_t.begin(), x_t.end());
    return integrate_pf_ode(density, schedule, x_t, t, 1, fallback_steps, Integrator::rk4)
        .endpoint;
}

bool VerificationReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

void VerificationReport::add(std::string name, bool pass, double value, double bound) {
    checks.push_back({std::move(name), pass, value, bound});
}

void VerificationReport::print(std::ostream& os) const {
    for (const auto& c : checks)
        os << "CHECK " << c.name << ' ' << (c.pass ? "PASS" : "FAIL") << " value=" << c.value
           << " bound=" << c.bound << "\n";
}

double estimate_drift_lipschitz(const AnalyticDensity& density, const Schedule& schedule,
                                int pairs, std::uint64_t seed, const DriftOptions& opts) {
    if (pairs < 1) throw std::invalid_argument("estimate_drift_lipschitz: pairs must be >= 1");
    const int T = schedule_steps(schedule);
    auto eng = make_engine(derive_seed(seed, 0, "lipschitz"));
    const auto d = static_cast<std::size_t>(density.dim);
    std::vector<double> x(d), y(d), dir(d), hx(d), hy(d);

    double max_ratio = 0.0;
    for (int p = 0; p < pairs; ++p) {
        const double t = 1.0 + uniform01(eng) * static_cast<double>(T - 1);
        const auto seg = make_segment(schedule, clamp_segment_index(schedule, t));
        const auto lv = level_on_segment(seg, t);

        // sample x from an inflated copy of the time-t marginal
        const GaussianComponent* c = nullptr;
        if (density.kind == DensityKind::gmm) {
            const double u = uniform01(eng);
            double acc = 0.0;
            for (const auto& comp : density.components) {
                acc += comp.weight;
                c = &comp;
                if (u < acc) break;
            }
        }
        const double comp_s = c ? c->s : density.s;
        const double sd = 1.5 * std::sqrt(lv.sig_mult * comp_s * comp_s + lv.add_var);
        fill_normal(eng, x);
        for (std::size_t i = 0; i < d; ++i) {
            const double m = lv.m_coef * (c ? c->mu[i] : density.mu[i]);
            x[i] = m + sd * x[i];
        }
        fill_normal(eng, dir);
        double norm = 0.0;
        for (double v : dir) norm += v * v;
        norm = std::sqrt(std::max(norm, 1e-300));
        const double delta = 1e-3 * sd;
        for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + delta * dir[i] / norm;

        drift_on_segment(density, seg, x, t, opts, hx);
        drift_on_segment(density, seg, y, t, opts, hy);
        double dh = 0.0, dx = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            dh += (hx[i] - hy[i]) * (hx[i] - hy[i]);
            dx += (x[i] - y[i]) * (x[i] - y[i]);
        }
        max_ratio = std::max(max_ratio, std::sqrt(dh / dx));
    }
    return 1.5 * max_ratio;
}

namespace {

std::vector<double> draw_from_marginal(const AnalyticDensity& density, const Schedule& schedule,
                                       int t, std::mt19937_64& eng) {
    const auto lv = level_at_integer(schedule, t);
    const auto d = static_cast<std::size_t>(density.dim);
    std::vector<double> x(d);
    const GaussianComponent* c = nullptr;
    if (density.kind == DensityKind::gmm) {
        const double u = uniform01(eng);
        double acc = 0.0;
        for (const auto& comp : density.components) {
            acc += comp.weight;
            c = &comp;
            if (u < acc) break;
        }
    }
    const double comp_s = c ? c->s : density.s;
    const double sd = std::sqrt(lv.sig_mult * comp_s * comp_s + lv.add_var);
    fill_normal(eng, x);
    for (std::size_t i = 0; i < d; ++i)
        x[i] = lv.m_coef * (c ? c->mu[i] : density.mu[i]) + sd * x[i];
    return x;
}

double l2_dist(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

}  // namespace

VerificationReport verify_uniqueness(const AnalyticDensity& density, const Schedule& schedule,
                                     int trials, double eps, std::uint64_t seed,
                                     const DriftOptions& opts) {
    if (trials < 1) throw std::invalid_argument("verify_uniqueness: trials must be >= 1");
    if (!(eps > 0.0)) throw std::invalid_argument("verify_uniqueness: eps must be > 0");
    const int T = schedule_steps(schedule);
    const int span = T - 1;
    VerificationReport rep;
    auto eng = make_engine(derive_seed(seed, 0, "uniqueness"));

    // identical IVPs under step refinement: disagreement with a fine
    // reference must shrink monotonically and end small
    {
        const auto x0 = draw_from_marginal(density, schedule, T, eng);
        const auto ref =
            integrate_pf_ode(density, schedule, x0, T, 1, 16LL * span, Integrator::rk4, opts);
        double prev = -1.0;
        bool monotone = true;
        double last = 0.0;
        for (std::int64_t mult : {2, 4, 8}) {
            const auto sol =
                integrate_pf_ode(density, schedule, x0, T, 1, mult * span, Integrator::rk4, opts);
            last = l2_dist(sol.endpoint, ref.endpoint);
            if (prev >= 0.0 && last >= prev) monotone = false;
            prev = last;
        }
        rep.add("uniqueness_step_refinement_monotone", monotone, monotone ? 1.0 : 0.0, 1.0);
        rep.add("uniqueness_step_refinement_small", last <= 1e-8, last, 1e-8);
    }

    // clean-drift Lipschitz estimate; the envelope must hold for the drift
    // actually integrated (opts may carry a fault hook)
    const double lhat =
        estimate_drift_lipschitz(density, schedule, 10000, derive_seed(seed, 1, "lhat"), {});
    const double upper = std::exp(lhat * span) * 1.01;
    const double lower = std::exp(-lhat * span) / 1.01;

    double max_ratio = 0.0, min_ratio = 1e300;
    const auto d = static_cast<std::size_t>(density.dim);
    std::vector<double> dir(d);
    for (int trial = 0; trial < trials; ++trial) {
        auto x0 = draw_from_marginal(density, schedule, T, eng);
        fill_normal(eng, dir);
        double norm = 0.0;
        for (double v : dir) norm += v * v;
        norm = std::sqrt(std::max(norm, 1e-300));
        auto y0 = x0;
        for (std::size_t i = 0; i < d; ++i) y0[i] += eps * dir[i] / norm;

        const std::int64_t steps = 4LL * span;
        const auto xe = integrate_pf_ode(density, schedule, x0, T, 1, steps, Integrator::rk4, opts);
        const auto ye = integrate_pf_ode(density, schedule, y0, T, 1, steps, Integrator::rk4, opts);
        const double ratio = l2_dist(xe.endpoint, ye.endpoint) / eps;
        max_ratio = std::max(max_ratio, ratio);
        min_ratio = std::min(min_ratio, ratio);
    }
    rep.add("gronwall_upper_envelope", max_ratio <= upper, max_ratio, upper);
    rep.add("gronwall_lower_envelope", min_ratio >= lower, min_ratio, lower);
    return rep;
}

VerificationReport verify_bilipschitz_oracle(const AnalyticDensity& density,
                                             const Schedule& schedule, int t, int pairs,
                                             std::uint64_t seed) {
    if (pairs < 1) throw std::invalid_argument("verify_bilipschitz: pairs must be >= 1");
    VerificationReport rep;
    auto eng = make_engine(derive_seed(seed, 0, "bilip-oracle"));

    double min_r = 1e300, max_r = 0.0;
    for (int p = 0; p < pairs; ++p) {
        std::vector<double> x, y;
        double dist = 0.0;
        do {
            x = draw_from_marginal(density, schedule, t, eng);
            y = draw_from_marginal(density, schedule, t, eng);
            dist = l2_dist(x, y);
        } while (dist < 1e-12);
        const auto fx = true_solution_map(density, schedule, x, t);
        const auto fy = true_solution_map(density, schedule, y, t);
        const double r = l2_dist(fx, fy) / dist;
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
    }
    rep.add("bilipschitz_oracle_ratio_constant", max_r - min_r <= 1e-10, max_r - min_r, 1e-10);

    const double lhat =
        estimate_drift_lipschitz(density, schedule, 10000, derive_seed(seed, 1, "lhat"), {});
    const double tspan = static_cast<double>(t - 1);
    rep.add("bilipschitz_oracle_upper", max_r <= std::exp(lhat * tspan) * 1.01, max_r,
            std::exp(lhat * tspan) * 1.01);
    rep.add("bilipschitz_oracle_lower", min_r >= std::exp(-lhat * tspan) / 1.01, min_r,
            std::exp(-lhat * tspan) / 1.01);
    return rep;
}

VerificationReport verify_bilipschitz_model(const Network& net, const NetworkParams& params,
                                            const Schedule& schedule, int t, int pairs,
                                            std::uint64_t seed) {
    if (pairs < 1) throw std::invalid_argument("verify_bilipschitz: pairs must be >= 1");
    VerificationReport rep;
    auto eng = make_engine(derive_seed(seed, 0, "bilip-model"));
    const auto d = static_cast<std::size_t>(net.config().data_dim);

    // sampling-time input scale: unit normals, sigma_max-scaled for VE
    double scale = 1.0;
    if (const auto* ve = std::get_if<VeSchedule>(&schedule))
        if (t == ve->T) scale = ve->sigma_max;

    double min_r = 1e300, max_r = 0.0;
    std::vector<double> x(d), y(d), est(d);
    for (int p = 0; p < pairs; ++p) {
        fill_normal(eng, est);
        double dist = 0.0;
        do {
            fill_normal(eng, x);
            fill_normal(eng, y);
            for (auto& v : x) v *= scale;
            for (auto& v : y) v *= scale;
            dist = l2_dist(x, y);
        } while (dist < 1e-12);
        const auto fx = net.f_theta(params, est, x, t, schedule);
        const auto fy = net.f_theta(params, est, y, t, schedule);
        const double r = l2_dist(fx, fy) / dist;
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
    }
    rep.add("bilipschitz_model_injective", min_r > 0.0, min_r, 0.0);
    rep.add("bilipschitz_model_ratio_finite", std::isfinite(max_r), max_r, 0.0);
    return rep;
}

ConvergenceReport verify_convergence(const Network& net,
                                     const std::vector<ConvergenceSnapshot>& snapshots,
                                     const SampleSet& data, const AnalyticDensity& density,
                                     const Schedule& schedule, int probes, std::uint64_t seed) {
    if (snapshots.size() < 2)
        throw std::invalid_argument("verify_convergence: need at least two snapshots");
    if (probes < 8) throw std::invalid_argument("verify_convergence: need at least 8 probes");
    if (data.dim != density.dim)
        throw std::invalid_argument("verify_convergence: data/density dimension mismatch");
    for (const auto& s : snapshots)
        if (s.estimates.size() != static_cast<std::size_t>(data.n) * data.dim)
            throw std::invalid_argument("verify_convergence: snapshot buffer size mismatch");

    auto sorted = snapshots;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.epoch < b.epoch; });

    const int T = schedule_steps(schedule);
    const auto d = static_cast<std::size_t>(density.dim);
    auto eng = make_engine(derive_seed(seed, 0, "convergence-probes"));

    // probe samples from the dataset, each with one fresh (t, eps) draw
    std::vector<std::int64_t> idx;
    std::vector<std::vector<double>> xts, targets;
    std::vector<int> ts;
    std::vector<double> eps(d);
    for (int p = 0; p < probes; ++p) {
        const auto i = uniform_int(eng, 0, data.n - 1);
        const int t = static_cast<int>(uniform_int(eng, 1, T));
        fill_normal(eng, eps);
        auto xt = forward_noise(schedule, t, std::span<const double>(data.row(i), d), eps);
        targets.push_back(true_solution_map(density, schedule, xt, t));
        idx.push_back(i);
        xts.push_back(std::move(xt));
        ts.push_back(t);
    }

    auto median = [](std::vector<double> v) {
        const auto mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
        return v[mid];
    };

    ConvergenceReport out;
    for (const auto& snap : sorted) {
        std::vector<double> err_x0(static_cast<std::size_t>(probes));
        std::vector<double> err_or(static_cast<std::size_t>(probes));
        for (int p = 0; p < probes; ++p) {
            const std::size_t pp = static_cast<std::size_t>(p);
            const std::span<const double> est(
                &snap.estimates[static_cast<std::size_t>(idx[pp]) * d], d);
            const auto pred = net.f_theta(snap.params, est, xts[pp], ts[pp], schedule);
            err_x0[pp] = l2_dist(pred, std::vector<double>(data.row(idx[pp]), data.row(idx[pp]) + d));
            err_or[pp] = l2_dist(pred, targets[pp]);
        }
        out.epochs.push_back(snap.epoch);
        out.median_err_x0.push_back(median(err_x0));
        out.median_err_oracle.push_back(median(err_or));
    }

    std::size_t ref = 0;
    while (ref + 1 < sorted.size() && sorted[ref].epoch < 1) ++ref;
    const double ref_median = out.median_err_x0[ref];
    const double final_median = out.median_err_x0.back();
    out.report.add("convergence_final_halved", final_median < 0.5 * ref_median, final_median,
                   0.5 * ref_median);

    double worst_step_ratio = 0.0;
    for (std::size_t i = ref; i + 1 < out.median_err_x0.size(); ++i) {
        const double prev = out.median_err_x0[i];
        const double next = out.median_err_x0[i + 1];
        if (prev > 0.0) worst_step_ratio = std::max(worst_step_ratio, next / prev);
    }
    out.report.add("convergence_medians_decreasing", worst_step_ratio <= 1.10, worst_step_ratio,
                   1.10);
    return out;
}

}  // namespace udddm
