#include "udddm/schedules.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace udddm {

static void check_index(int t, int T) {
    if (t < 1 || t > T) throw std::out_of_range("schedule step t=" + std::to_string(t) +
                                                " outside 1.." + std::to_string(T));
}

double VpSchedule::beta_at(int t) const {
    check_index(t, T);
    return beta[static_cast<std::size_t>(t - 1)];
}

double VpSchedule::alpha_bar_at(int t) const {
    check_index(t, T);
    return alpha_bar[static_cast<std::size_t>(t - 1)];
}

double VeSchedule::sigma_at(int t) const {
    check_index(t, T);
    return sigma[static_cast<std::size_t>(t - 1)];
}

VpSchedule make_vp_linear(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("vp schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("vp schedule: need 0 < beta_start <= beta_end < 1");
    VpSchedule s;
    s.T = T;
    s.beta.resize(static_cast<std::size_t>(T));
    s.alpha_bar.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const double b = beta_start + frac * (beta_end - beta_start);
        prod *= 1.0 - b;
        s.beta[static_cast<std::size_t>(t - 1)] = b;
        s.alpha_bar[static_cast<std::size_t>(t - 1)] = prod;
    }
    return s;
}

VeSchedule make_ve_geometric(int T, double sigma_min, double sigma_max) {
    if (T < 1) throw std::invalid_argument("ve schedule: T must be >= 1");
    if (!(sigma_min > 0.0 && sigma_min < sigma_max))
        throw std::invalid_argument("ve schedule: need 0 < sigma_min < sigma_max");
    VeSchedule s;
    s.T = T;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.kind = VeKind::geometric;
    s.sigma.resize(static_cast<std::size_t>(T));
    const double log_ratio = std::log(sigma_max / sigma_min);
    for (int t = 1; t <= T; ++t)
        s.sigma[static_cast<std::size_t>(t - 1)] =
            sigma_min * std::exp(log_ratio * static_cast<double>(t) / static_cast<double>(T));
    s.sigma.back() = sigma_max;  // exponent is exactly 1 at t = T
    return s;
}

VeSchedule make_ve_karras(int T, double sigma_min, double sigma_max, double rho) {
    if (T < 2) throw std::invalid_argument("karras schedule: T must be >= 2");
    if (!(rho > 0.0)) throw std::invalid_argument("karras schedule: rho must be > 0");
    if (!(sigma_min > 0.0 && sigma_min < sigma_max))
        throw std::invalid_argument("karras schedule: need 0 < sigma_min < sigma_max");
    VeSchedule s;
    s.T = T;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.kind = VeKind::karras;
    s.rho = rho;
    s.sigma.resize(static_cast<std::size_t>(T));
    const double lo = std::pow(sigma_min, 1.0 / rho);
    const double hi = std::pow(sigma_max, 1.0 / rho);
    for (int t = 1; t <= T; ++t) {
        const double frac = static_cast<double>(t - 1) / static_cast<double>(T - 1);
        s.sigma[static_cast<std::size_t>(t - 1)] = std::pow(lo + frac * (hi - lo), rho);
    }
    // the interpolation weights are exactly 0 and 1 at the ends; pin the
    // endpoints so the pow round trip cannot smear them
    s.sigma.front() = sigma_min;
    s.sigma.back() = sigma_max;
    return s;
}

double kappa_value(const VeSchedule& s, double sigma_t) {
    switch (s.kappa) {
        case KappaKind::sigma_min_over_sigma:
            return s.sigma_min / sigma_t;
        case KappaKind::sigma_data_over_sum:
            return s.sigma_data / (sigma_t + s.sigma_data);
        case KappaKind::sigma_data_sq_over_sum_sq:
            return s.sigma_data * s.sigma_data / (sigma_t * sigma_t + s.sigma_data * s.sigma_data);
    }
    throw std::logic_error("unreachable kappa kind");
}

UnifiedCoefficients unified_coeffs(const Schedule& schedule, int t) {
    UnifiedCoefficients c;
    if (const auto* vp = std::get_if<VpSchedule>(&schedule)) {
        check_index(t, vp->T);
        c.a = 1.0;
        c.b = -1.0;
        c.sigma_t = std::sqrt(1.0 - vp->alpha_bar_at(t));
        return c;
    }
    const auto& ve = std::get<VeSchedule>(schedule);
    check_index(t, ve.T);
    c.sigma_t = ve.sigma_at(t);
    c.a = kappa_value(ve, c.sigma_t);
    c.b = 1.0 - c.a;
    return c;
}

int schedule_steps(const Schedule& schedule) {
    return std::visit([](const auto& s) { return s.T; }, schedule);
}

std::vector<double> forward_noise(const Schedule& schedule, int t,
                                  std::span<const double> x0,
                                  std::span<const double> eps) {
    if (x0.size() != eps.size())
        throw std::invalid_argument("forward_noise: x0 and eps dimension mismatch");
    std::vector<double> xt(x0.size());
    if (const auto* vp = std::get_if<VpSchedule>(&schedule)) {
        const double ab = vp->alpha_bar_at(t);
        const double ca = std::sqrt(ab);
        const double cb = std::sqrt(1.0 - ab);
        for (std::size_t i = 0; i < xt.size(); ++i) xt[i] = ca * x0[i] + cb * eps[i];
        return xt;
    }
    const auto& ve = std::get<VeSchedule>(schedule);
    const double s = ve.sigma_at(t);
    for (std::size_t i = 0; i < xt.size(); ++i) xt[i] = x0[i] + s * eps[i];
    return xt;
}

void dump_schedule(const Schedule& schedule, std::ostream& os) {
    const int T = schedule_steps(schedule);
    os.precision(17);
    os << "# t sigma_t alpha_bar_t a b\n";
    for (int t = 1; t <= T; ++t) {
        const auto c = unified_coeffs(schedule, t);
        double abar = 1.0;
        if (const auto* vp = std::get_if<VpSchedule>(&schedule)) abar = vp->alpha_bar_at(t);
        os << t << ' ' << c.sigma_t << ' ' << abar << ' ' << c.a << ' ' << c.b << '\n';
    }
}

}  // namespace udddm
