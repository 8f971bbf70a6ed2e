#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "udddm/density.hpp"
#include "udddm/evalkit.hpp"
#include "udddm/network.hpp"
#include "udddm/schedules.hpp"

namespace udddm {

// Closed-form ground truth for the probability-flow ODE of the analytic
// densities above, plus numerical checks of its uniqueness, contraction and
// convergence properties.
//
// Continuous time runs over t in [1, T]. VE interpolates sigma linearly
// between integer indices. VP interpolates ln(alpha_bar) linearly, i.e. a
// piecewise-constant effective beta of -ln(1 - beta_{k+1}) per unit
// interval; this keeps the tabled alpha_bar values exact at integer t and
// makes the drift transport the Gaussian marginal family exactly, which the
// closed-form map and the pushforward checks rely on.

enum class Integrator { euler, heun, rk4 };
Integrator integrator_from_name(const std::string& name);

// standard_half is the usual probability-flow drift (with the 1/2 factor
// and the VP score entering as -beta/2 * (x + score)). printed_variant is
// the alternative bookkeeping selectable for side-by-side diagnostics: VE
// without the 1/2 factor, VP with the score sign flipped.
enum class DriftForm { standard_half, printed_variant };

struct DriftOptions {
    DriftForm form = DriftForm::standard_half;
    double score_scale = 1.0;  // fault-injection hook for envelope checks
};

struct OdeSolution {
    std::vector<double> endpoint;
    std::vector<double> path_times;           // recorded only on request
    std::vector<std::vector<double>> path;    // states matching path_times
    std::int64_t step_count = 0;
    Integrator integrator = Integrator::rk4;
};

// Exact score of the noised marginal at integer step t. Isotropic Gaussian
// VE: -(x - mu) / (s^2 + sigma_t^2); VP: -(x - sqrt(ab_t) mu) /
// (ab_t s^2 + 1 - ab_t); mixtures combine component scores with
// log-sum-exp-stabilised responsibilities.
std::vector<double> marginal_score(const AnalyticDensity& density, std::span<const double> x,
                                   int t, const Schedule& schedule);

// The noised marginal p_t itself, as an analytic density: component means
// scaled by the signal coefficient, variances widened by the noise level.
AnalyticDensity noised_marginal(const AnalyticDensity& density, const Schedule& schedule, int t);

// Probability-flow drift dx/dt at continuous time, used by the integrators
// and the Lipschitz sampling below.
std::vector<double> pf_drift(const AnalyticDensity& density, std::span<const double> x,
                             double t, const Schedule& schedule,
                             const DriftOptions& opts = {});

// Integrates the PF ODE from t_start down to t_end (integers, t_start >=
// t_end >= 1). Steps are distributed over the unit schedule intervals so no
// integrator step straddles an interpolation breakpoint; the realised step
// count is reported in the solution.
OdeSolution integrate_pf_ode(const AnalyticDensity& density, const Schedule& schedule,
                             std::span<const double> x_start, int t_start, int t_end,
                             std::int64_t steps, Integrator integrator,
                             const DriftOptions& opts = {}, bool record_path = false);

// Affine transport map of the isotropic-Gaussian marginal family from time
// t_start to t_end: mu_end + sqrt(v_end / v_start) * (x - mu_start).
std::vector<double> gaussian_transport_map(const AnalyticDensity& density,
                                           const Schedule& schedule,
                                           std::span<const double> x, double t_start,
                                           double t_end);

// Solution map down to the lowest schedule level t = 1. Closed form for the
// isotropic Gaussian; mixtures fall back to ODE integration when permitted.
std::vector<double> true_solution_map(const AnalyticDensity& density, const Schedule& schedule,
                                      std::span<const double> x_t, int t,
                                      bool fallback_to_ode = true,
                                      std::int64_t fallback_steps = 1000);

struct CheckLine {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double bound = 0.0;
};

struct VerificationReport {
    std::vector<CheckLine> checks;

    bool all_pass() const;
    void add(std::string name, bool pass, double value, double bound);
    // One "CHECK <name> PASS|FAIL value=<v> bound=<b>" line per check.
    void print(std::ostream& os) const;
};

// Empirical drift Lipschitz estimate: max over sampled (t, x, y) of
// ||h(x,t) - h(y,t)|| / ||x - y|| in the region the IVPs visit, inflated by
// a 1.5x margin.
double estimate_drift_lipschitz(const AnalyticDensity& density, const Schedule& schedule,
                                int pairs, std::uint64_t seed,
                                const DriftOptions& opts = {});

// Uniqueness checks: step-refinement agreement of identical IVPs plus
// a two-sided Gronwall envelope e^{-L t'} <= sep/eps <= e^{L t'} (1% slack)
// for eps-separated starts. The lower side is what catches drifts that
// contract more than their declared Lipschitz bound allows, e.g. the
// score_scale fault hook.
VerificationReport verify_uniqueness(const AnalyticDensity& density, const Schedule& schedule,
                                     int trials, double eps, std::uint64_t seed,
                                     const DriftOptions& opts = {});

// Pair-ratio checks of the closed-form Gaussian map at step t down to 1:
// constant ratio, and the e^{+-L t'} envelope.
VerificationReport verify_bilipschitz_oracle(const AnalyticDensity& density,
                                             const Schedule& schedule, int t, int pairs,
                                             std::uint64_t seed);

// Injectivity proxy for a trained model: min over pairs of
// ||f(x)-f(y)||/||x-y|| at step t must stay positive. Pair members share
// one estimate input so only the x_t dependence is probed.
VerificationReport verify_bilipschitz_model(const Network& net, const NetworkParams& params,
                                            const Schedule& schedule, int t, int pairs,
                                            std::uint64_t seed);

struct ConvergenceSnapshot {
    std::int64_t epoch = 0;
    NetworkParams params;           // evaluation (EMA) weights
    std::vector<double> estimates;  // the snapshot's full estimate buffer, row-flat
};

struct ConvergenceReport {
    VerificationReport report;
    std::vector<std::int64_t> epochs;
    std::vector<double> median_err_x0;      // per snapshot, error vs the true data point
    std::vector<double> median_err_oracle;  // per snapshot, error vs the oracle map target
};

// Probes are dataset samples with fresh (t, eps) draws never seen in
// training. Each snapshot is evaluated as f_theta(buffer estimate of the
// probe sample, x_t, t); the buffer rows come from that snapshot's saved
// estimate buffer, so the medians track how the training recurrence
// converges toward the data. Asserts the final median error vs x0 is below
// half the median at the first snapshot with epoch >= 1.
ConvergenceReport verify_convergence(const Network& net,
                                     const std::vector<ConvergenceSnapshot>& snapshots,
                                     const SampleSet& data, const AnalyticDensity& density,
                                     const Schedule& schedule, int probes, std::uint64_t seed);

}  // namespace udddm
