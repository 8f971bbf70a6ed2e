#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

namespace udddm {

// Discrete noise schedules. Indices run t = 1..T; array slot t-1 holds the
// value for step t. All tables are precomputed at construction and immutable
// afterwards, so schedules can be shared across threads freely.

struct VpSchedule {
    int T = 0;
    std::vector<double> beta;       // per-step variances, in (0,1)
    std::vector<double> alpha_bar;  // cumulative products of (1 - beta)

    double beta_at(int t) const;       // t in 1..T
    double alpha_bar_at(int t) const;  // t in 1..T
};

enum class VeKind { geometric, karras };

// Which x_t blending coefficient kappa(sigma) the solution map uses.
// sigma_min_over_sigma is the working default; the sigma_data forms are
// selectable alternatives.
enum class KappaKind { sigma_min_over_sigma, sigma_data_over_sum, sigma_data_sq_over_sum_sq };

struct VeSchedule {
    int T = 0;
    std::vector<double> sigma;  // strictly increasing noise levels
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    VeKind kind = VeKind::geometric;
    double rho = 0.0;  // karras exponent, unused for geometric

    KappaKind kappa = KappaKind::sigma_min_over_sigma;
    double sigma_data = 0.5;  // used by the sigma_data kappa variants

    double sigma_at(int t) const;  // t in 1..T
};

using Schedule = std::variant<VpSchedule, VeSchedule>;

struct UnifiedCoefficients {
    double a = 0.0;
    double b = 0.0;
    double sigma_t = 0.0;  // VE: sigma_t; VP: sqrt(1 - alpha_bar_t), informational
};

// beta_t = beta_start + (t-1)/(T-1) * (beta_end - beta_start); single-step
// schedules pin beta_1 = beta_start.
VpSchedule make_vp_linear(int T, double beta_start, double beta_end);

// sigma_t = sigma_min * (sigma_max/sigma_min)^(t/T). Note sigma_1 is
// sigma_min * r^(1/T), not sigma_min; only the top endpoint hits sigma_max.
VeSchedule make_ve_geometric(int T, double sigma_min, double sigma_max);

// sigma_t = (sigma_min^(1/rho) + (t-1)/(T-1) * (sigma_max^(1/rho) -
// sigma_min^(1/rho)))^rho, pinned to sigma_min and sigma_max at the ends.
VeSchedule make_ve_karras(int T, double sigma_min, double sigma_max, double rho);

double kappa_value(const VeSchedule& s, double sigma_t);

// Solution-map blend f = a * x_t + b * F. VP: (1, -1). VE: (kappa, 1 - kappa),
// so a + b = 1.
UnifiedCoefficients unified_coeffs(const Schedule& schedule, int t);

int schedule_steps(const Schedule& schedule);

// x_t from x_0 and a standard-normal draw. VE: x0 + sigma_t * eps;
// VP: sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
std::vector<double> forward_noise(const Schedule& schedule, int t,
                                  std::span<const double> x0,
                                  std::span<const double> eps);

// Plain-text table, one "t sigma_t alpha_bar_t a b" row per step. VE rows
// print alpha_bar as 1 (the VE marginal keeps x0's coefficient at one).
void dump_schedule(const Schedule& schedule, std::ostream& os);

}  // namespace udddm
