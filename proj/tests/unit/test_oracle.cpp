#include <doctest.h>

#include <cmath>

#include <sstream>

#include "udddm/evalkit.hpp"
#include "udddm/oracle.hpp"
#include "udddm/rng.hpp"

using namespace udddm;

namespace {

double l2(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

// independently coded mixture log-density at one noise level, for the
// finite-difference score oracle
double gmm_log_density_ve(const AnalyticDensity& d, const std::vector<double>& x, double sigma) {
    double best = -1e300;
    std::vector<double> terms;
    for (const auto& c : d.components) {
        const double v = c.s * c.s + sigma * sigma;
        double sq = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - c.mu[i]) * (x[i] - c.mu[i]);
        const double term = std::log(c.weight) -
                            0.5 * static_cast<double>(x.size()) * std::log(2.0 * M_PI * v) -
                            0.5 * sq / v;
        terms.push_back(term);
        best = std::max(best, term);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
}

}  // namespace

TEST_CASE("marginal score closed forms") {
    // VE isotropic at sigma_t = 1 (karras pins sigma_1 = sigma_min)
    const Schedule ve = make_ve_karras(10, 1.0, 4.0, 7.0);
    const auto g = AnalyticDensity::isotropic({0.0, 0.0}, 1.0);
    const auto at_mu = marginal_score(g, std::vector<double>{0.0, 0.0}, 1, ve);
    CHECK(at_mu == std::vector<double>{0.0, 0.0});
    const auto s = marginal_score(g, std::vector<double>{2.0, 0.0}, 1, ve);
    CHECK(s[0] == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(0.0).epsilon(1e-14));

    // VP formula at a mid step
    const Schedule vp = make_vp_linear(10, 0.05, 0.3);
    const auto& vps = std::get<VpSchedule>(vp);
    const double ab = vps.alpha_bar_at(4);
    const auto g2 = AnalyticDensity::isotropic({0.7, -0.2}, 0.5);
    const std::vector<double> x{0.3, 0.9};
    const auto sc = marginal_score(g2, x, 4, vp);
    const double var = ab * 0.25 + 1.0 - ab;
    for (int k = 0; k < 2; ++k)
        CHECK(sc[static_cast<std::size_t>(k)] ==
              doctest::Approx(-(x[static_cast<std::size_t>(k)] -
                                std::sqrt(ab) * g2.mu[static_cast<std::size_t>(k)]) / var)
                  .epsilon(1e-14));

    CHECK_THROWS_AS((void)marginal_score(g, std::vector<double>{1.0}, 1, ve),
                    std::invalid_argument);
}

TEST_CASE("gmm score matches finite differences of an independent log-density") {
    std::vector<GaussianComponent> comps{{0.3, {-1.0}, 0.4}, {0.7, {2.0}, 0.9}};
    const auto d = AnalyticDensity::mixture(comps);
    const Schedule ve = make_ve_geometric(10, 0.05, 3.0);
    const auto& ves = std::get<VeSchedule>(ve);

    auto eng = make_engine(3);
    double worst = 0.0;
    for (int rep = 0; rep < 40; ++rep) {
        const int t = static_cast<int>(uniform_int(eng, 1, 10));
        const double sig = ves.sigma_at(t);
        std::vector<double> x{3.0 * normal(eng)};
        const auto sc = marginal_score(d, x, t, ve);
        const double h = 1e-6;
        const double fd = (gmm_log_density_ve(d, {x[0] + h}, sig) -
                           gmm_log_density_ve(d, {x[0] - h}, sig)) /
                          (2 * h);
        worst = std::max(worst, std::abs(sc[0] - fd) / std::max({std::abs(fd), std::abs(sc[0]), 1e-8}));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("gmm score reduces to the single gaussian when one weight dominates") {
    const auto g = AnalyticDensity::isotropic({0.4, -0.1}, 0.8);
    std::vector<GaussianComponent> comps{{1.0 - 1e-15, {0.4, -0.1}, 0.8},
                                         {1e-15, {0.4, -0.1}, 0.8}};
    const auto mix = AnalyticDensity::mixture(comps);
    const Schedule vp = make_vp_linear(12, 0.01, 0.25);
    auto eng = make_engine(5);
    std::vector<double> x(2);
    for (int rep = 0; rep < 50; ++rep) {
        fill_normal(eng, x);
        const int t = static_cast<int>(uniform_int(eng, 1, 12));
        const auto a = marginal_score(g, x, t, vp);
        const auto b = marginal_score(mix, x, t, vp);
        for (int k = 0; k < 2; ++k)
            CHECK(std::abs(a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)]) <=
                  1e-14 * std::max(1.0, std::abs(a[static_cast<std::size_t>(k)])));
    }
}

TEST_CASE("noised marginal widens variances and scales means") {
    const Schedule vp = make_vp_linear(10, 0.05, 0.3);
    const auto& vps = std::get<VpSchedule>(vp);
    const auto g = AnalyticDensity::isotropic({1.0, -2.0}, 0.5);
    const auto m4 = noised_marginal(g, vp, 4);
    const double ab = vps.alpha_bar_at(4);
    CHECK(m4.mu[0] == doctest::Approx(std::sqrt(ab) * 1.0).epsilon(1e-15));
    CHECK(m4.mu[1] == doctest::Approx(std::sqrt(ab) * -2.0).epsilon(1e-15));
    CHECK(m4.s == doctest::Approx(std::sqrt(ab * 0.25 + 1 - ab)).epsilon(1e-15));

    const Schedule ve = make_ve_geometric(10, 0.1, 5.0);
    const auto& ves = std::get<VeSchedule>(ve);
    std::vector<GaussianComponent> comps{{0.25, {0.0}, 0.3}, {0.75, {2.0}, 0.6}};
    const auto mix = noised_marginal(AnalyticDensity::mixture(comps), ve, 7);
    REQUIRE(mix.components.size() == 2);
    const double sig = ves.sigma_at(7);
    CHECK(mix.components[0].mu[0] == 0.0);
    CHECK(mix.components[1].mu[0] == 2.0);
    CHECK(mix.components[0].s == doctest::Approx(std::sqrt(0.09 + sig * sig)).epsilon(1e-15));
    CHECK(mix.components[0].weight == 0.25);
}

TEST_CASE("density validation") {
    CHECK_THROWS_AS((void)AnalyticDensity::isotropic({}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)AnalyticDensity::isotropic({0.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)AnalyticDensity::mixture({}), std::invalid_argument);
    CHECK_THROWS_AS((void)AnalyticDensity::mixture({{0.5, {0.0}, 1.0}, {0.6, {1.0}, 1.0}}),
                    std::invalid_argument);
    std::vector<GaussianComponent> many(17, GaussianComponent{1.0 / 17, {0.0}, 1.0});
    CHECK_THROWS_AS((void)AnalyticDensity::mixture(many), std::invalid_argument);
}

TEST_CASE("pf ode: empty interval, closed form agreement, convergence order") {
    const Schedule ve = make_ve_geometric(100, 0.01, 50.0);
    const auto g = AnalyticDensity::isotropic({0.0, 0.0}, 1.0);
    const std::vector<double> x{3.7, -1.2};

    const auto nothing = integrate_pf_ode(g, ve, x, 40, 40, 10, Integrator::rk4);
    CHECK(nothing.endpoint == x);

    const auto exact = gaussian_transport_map(g, ve, x, 100.0, 1.0);
    const auto rk = integrate_pf_ode(g, ve, x, 100, 1, 1000, Integrator::rk4);
    CHECK(l2(rk.endpoint, exact) <= 1e-5);
    CHECK(rk.step_count >= 1000);

    // order-4 convergence on breakpoint-aligned step counts
    double e1 = l2(integrate_pf_ode(g, ve, x, 100, 1, 99, Integrator::rk4).endpoint, exact);
    double e2 = l2(integrate_pf_ode(g, ve, x, 100, 1, 198, Integrator::rk4).endpoint, exact);
    double e4 = l2(integrate_pf_ode(g, ve, x, 100, 1, 396, Integrator::rk4).endpoint, exact);
    CHECK(e1 / e2 >= 8.0);
    CHECK(e1 / e2 <= 32.0);
    CHECK(e2 / e4 >= 8.0);
    CHECK(e2 / e4 <= 32.0);

    // euler and heun converge too, at their own rates
    double he1 = l2(integrate_pf_ode(g, ve, x, 100, 1, 990, Integrator::heun).endpoint, exact);
    double he2 = l2(integrate_pf_ode(g, ve, x, 100, 1, 1980, Integrator::heun).endpoint, exact);
    CHECK(he2 < he1);
    double eu1 = l2(integrate_pf_ode(g, ve, x, 100, 1, 990, Integrator::euler).endpoint, exact);
    CHECK(he1 < eu1);

    // integrator invariance at sufficiently small steps
    const auto heun_fine = integrate_pf_ode(g, ve, x, 100, 1, 100000, Integrator::heun);
    CHECK(l2(rk.endpoint, heun_fine.endpoint) <= 1e-8);

    CHECK_THROWS_AS((void)integrate_pf_ode(g, ve, x, 1, 0, 10, Integrator::rk4),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)integrate_pf_ode(g, ve, x, 5, 50, 10, Integrator::rk4),
                    std::invalid_argument);
}

TEST_CASE("recorded paths have monotone times ending at the endpoint") {
    const Schedule ve = make_ve_geometric(12, 0.05, 4.0);
    const auto g = AnalyticDensity::isotropic({0.0, 0.0}, 1.0);
    const std::vector<double> x{1.0, 2.0};
    const auto sol = integrate_pf_ode(g, ve, x, 12, 3, 40, Integrator::rk4, {}, true);
    REQUIRE(!sol.path.empty());
    CHECK(sol.path_times.front() == 12.0);
    CHECK(sol.path_times.back() == doctest::Approx(3.0).epsilon(1e-12));
    for (std::size_t i = 1; i < sol.path_times.size(); ++i)
        CHECK(sol.path_times[i] < sol.path_times[i - 1]);
    CHECK(sol.path.back() == sol.endpoint);
    CHECK(static_cast<std::int64_t>(sol.path.size()) == sol.step_count + 1);
}

TEST_CASE("vp transport map is consistent with its own ode flow") {
    const Schedule vp = make_vp_linear(100, 0.0015, 0.019);
    const auto g = AnalyticDensity::isotropic({0.7, -0.3}, 0.6);
    const std::vector<double> x{1.4, 0.2};
    const auto exact = gaussian_transport_map(g, vp, x, 100.0, 1.0);
    const auto rk = integrate_pf_ode(g, vp, x, 100, 1, 1000, Integrator::rk4);
    CHECK(l2(rk.endpoint, exact) <= 1e-5);
}

TEST_CASE("printed drift variants differ from the standard form") {
    const Schedule ve = make_ve_geometric(20, 0.1, 5.0);
    const auto g = AnalyticDensity::isotropic({0.0}, 1.0);
    const std::vector<double> x{1.5};
    DriftOptions printed;
    printed.form = DriftForm::printed_variant;
    const auto a = pf_drift(g, x, 10.5, ve, {});
    const auto b = pf_drift(g, x, 10.5, ve, printed);
    CHECK(b[0] == doctest::Approx(2.0 * a[0]).epsilon(1e-12));  // VE: missing 1/2

    const Schedule vp = make_vp_linear(20, 0.01, 0.2);
    const auto c = pf_drift(g, x, 10.5, vp, {});
    const auto d = pf_drift(g, x, 10.5, vp, printed);
    CHECK(c[0] != d[0]);  // VP: score sign flips
}

TEST_CASE("true solution map: identity at t=1, frozen contraction, gmm fallback") {
    // sigma: 1e-9 at t=1 (karras), 7 at t=T, data std 1: contraction 1/sqrt(50)
    const Schedule ve = make_ve_karras(50, 1e-9, 7.0, 7.0);
    const auto g = AnalyticDensity::isotropic({0.0, 0.0}, 1.0);
    const std::vector<double> x{2.0, -1.0};

    const auto ident = true_solution_map(g, ve, x, 1);
    CHECK(l2(ident, x) <= 1e-12);

    const auto mapped = true_solution_map(g, ve, x, 50);
    const double factor = 0.14142135623730950488;  // sqrt(1/50), 50-digit value
    CHECK(mapped[0] == doctest::Approx(x[0] * factor).epsilon(1e-9));
    CHECK(mapped[1] == doctest::Approx(x[1] * factor).epsilon(1e-9));

    // mixture: fallback to the integrator, and agreement with it
    std::vector<GaussianComponent> comps{{0.5, {-1.0, 0.0}, 0.3}, {0.5, {1.0, 0.0}, 0.3}};
    const auto mix = AnalyticDensity::mixture(comps);
    const Schedule ve2 = make_ve_geometric(30, 0.05, 10.0);
    const auto fb = true_solution_map(mix, ve2, x, 30);
    const auto direct = integrate_pf_ode(mix, ve2, x, 30, 1, 1000, Integrator::rk4);
    CHECK(l2(fb, direct.endpoint) <= 1e-12);
    CHECK_THROWS_AS((void)true_solution_map(mix, ve2, x, 30, false), std::invalid_argument);
}

TEST_CASE("identical IVPs coincide and the lipschitz estimate is sound") {
    const Schedule ve = make_ve_geometric(40, 0.05, 10.0);
    const auto g = AnalyticDensity::isotropic({0.2, 0.2}, 1.0);
    const std::vector<double> x{1.0, -1.0};
    const auto a = integrate_pf_ode(g, ve, x, 40, 1, 500, Integrator::rk4);
    const auto b = integrate_pf_ode(g, ve, x, 40, 1, 500, Integrator::rk4);
    CHECK(a.endpoint == b.endpoint);  // eps = 0 separation stays 0

    const double lhat = estimate_drift_lipschitz(g, ve, 4000, 1);
    CHECK(lhat > 0.0);
    // for the affine gaussian drift the local ratio equals the drift slope;
    // the estimate carries a deliberate 1.5x margin, so it must dominate
    // the slope sampled at a few times
    auto eng = make_engine(9);
    for (int rep = 0; rep < 20; ++rep) {
        const double t = 1.0 + uniform01(eng) * 39.0;
        const auto d1 = pf_drift(g, std::vector<double>{1.0, 0.0}, t, ve, {});
        const auto d2 = pf_drift(g, std::vector<double>{1.1, 0.0}, t, ve, {});
        const double slope = std::abs(d2[0] - d1[0]) / 0.1;
        CHECK(lhat >= slope * 0.99);
    }
}

TEST_CASE("gronwall envelopes hold for the clean drift and catch a scaled score") {
    // near-constant local lipschitz ratio: narrow sigma range
    const Schedule ve = make_ve_geometric(20, 1.0, 2.0);
    const auto g = AnalyticDensity::isotropic({0.0, 0.0}, 1.0);

    const auto clean = verify_uniqueness(g, ve, 40, 1e-4, 7);
    CHECK(clean.all_pass());

    DriftOptions corrupt;
    corrupt.score_scale = 2.0;
    const auto faulty = verify_uniqueness(g, ve, 40, 1e-4, 7, corrupt);
    CHECK(!faulty.all_pass());
    bool lower_failed = false;
    for (const auto& c : faulty.checks)
        if (c.name == "gronwall_lower_envelope" && !c.pass) lower_failed = true;
    CHECK(lower_failed);
}

TEST_CASE("bilipschitz ratios: constant for the closed-form map, positive for a model") {
    const Schedule ve = make_ve_geometric(50, 0.01, 25.0);
    const auto g = AnalyticDensity::isotropic({0.1, -0.4}, 0.9);
    const auto rep = verify_bilipschitz_oracle(g, ve, 50, 500, 11);
    CHECK(rep.all_pass());

    NetworkConfig cfg;
    cfg.data_dim = 2;
    cfg.hidden_dims = {8};
    cfg.time_embed_dim = 4;
    const Network net(cfg);
    const auto params = net.init_params();  // f = a * x_t, injective
    const Schedule vp = make_vp_linear(10, 0.01, 0.2);
    const auto mrep = verify_bilipschitz_model(net, params, vp, 10, 200, 3);
    CHECK(mrep.all_pass());
}

TEST_CASE("report printing uses the CHECK line format") {
    VerificationReport rep;
    rep.add("example_check", true, 0.5, 1.0);
    rep.add("failing_check", false, 2.0, 1.0);
    std::ostringstream os;
    rep.print(os);
    CHECK(os.str().find("CHECK example_check PASS value=0.5 bound=1") != std::string::npos);
    CHECK(os.str().find("CHECK failing_check FAIL value=2 bound=1") != std::string::npos);
    CHECK(!rep.all_pass());
}

TEST_CASE("pushforward of p_T draws lands on the data moments") {
    const Schedule kinds[] = {make_ve_geometric(30, 0.01, 10.0),
                              make_vp_linear(30, 0.002, 0.06)};
    for (const auto& sched : kinds) {
        const auto g = AnalyticDensity::isotropic({0.7, -0.3}, 0.6);
        auto eng = make_engine(17);
        SampleSet pushed;
        pushed.n = 10000;
        pushed.dim = 2;
        pushed.data.resize(20000);
        std::vector<double> x0(2), eps(2);
        for (int i = 0; i < 10000; ++i) {
            g.draw(eng, x0);
            fill_normal(eng, eps);
            const auto xt = forward_noise(sched, 30, x0, eps);
            const auto sol = integrate_pf_ode(g, sched, xt, 30, 1, 58, Integrator::rk4);
            pushed.data[static_cast<std::size_t>(i) * 2] = sol.endpoint[0];
            pushed.data[static_cast<std::size_t>(i) * 2 + 1] = sol.endpoint[1];
        }
        const auto rep = moment_report(pushed, g);
        CHECK(rep.max_abs_z < 3.0);
    }
}

TEST_CASE("verify_convergence tracks snapshot buffers and validates input") {
    NetworkConfig cfg;
    cfg.data_dim = 2;
    cfg.hidden_dims = {8};
    cfg.time_embed_dim = 4;
    const Network net(cfg);
    const Schedule vp = make_vp_linear(10, 0.002, 0.05);
    const auto g = AnalyticDensity::isotropic({0.5, 0.5}, 0.5);

    SampleSet data;
    data.n = 128;
    data.dim = 2;
    data.data.resize(256);
    auto deng = make_engine(1);
    for (std::int64_t i = 0; i < data.n; ++i)
        g.draw(deng, std::span<double>(&data.data[static_cast<std::size_t>(i) * 2], 2));

    // zero-init params (f = x_t) with junk buffers at every epoch: medians
    // stay flat, so the halving check must fail while the trend check holds
    auto junk = [&](std::uint64_t seed) {
        std::vector<double> est(256);
        auto eng = make_engine(seed);
        fill_normal(eng, est);
        return est;
    };
    std::vector<ConvergenceSnapshot> snaps;
    snaps.push_back({0, net.init_params(), junk(2)});
    snaps.push_back({1, net.init_params(), junk(2)});
    snaps.push_back({5, net.init_params(), junk(2)});
    const auto rep = verify_convergence(net, snaps, data, g, vp, 64, 21);
    REQUIRE(rep.epochs.size() == 3);
    CHECK(rep.median_err_x0[0] > 0.0);
    bool halved_pass = true;
    for (const auto& c : rep.report.checks)
        if (c.name == "convergence_final_halved") halved_pass = c.pass;
    CHECK(!halved_pass);

    // a snapshot whose buffer holds the exact data rows and a model that
    // echoes the estimate at t=1 (low noise): medians must collapse
    CHECK_THROWS_AS((void)verify_convergence(net, {snaps[0]}, data, g, vp, 64, 21),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)verify_convergence(net, snaps, data, g, vp, 2, 21),
                    std::invalid_argument);
    auto bad = snaps;
    bad[0].estimates.resize(10);
    CHECK_THROWS_AS((void)verify_convergence(net, bad, data, g, vp, 64, 21),
                    std::invalid_argument);
}
