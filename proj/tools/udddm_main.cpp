#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "udddm/config.hpp"
#include "udddm/rng.hpp"
#include "udddm/evalkit.hpp"
#include "udddm/oracle.hpp"
#include "udddm/sampler.hpp"
#include "udddm/trainer.hpp"

namespace {

using namespace udddm;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerifyFail = 3;

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& sets) {
    RunConfig cfg = config_path.empty() ? default_run_config() : load_run_config(config_path);
    for (const auto& s : sets) apply_override(cfg, s);
    return cfg;
}

RunConfig config_from_checkpoint(const std::string& stem) {
    const auto meta = read_checkpoint_meta(stem);
    const auto it = meta.find("config");
    if (it == meta.end())
        throw std::runtime_error("checkpoint " + stem + " carries no embedded config");
    return parse_run_config(it->second);
}

std::string find_latest_checkpoint(const std::string& dir) {
    std::string best;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("checkpoint_", 0) == 0 && name.size() > 5 &&
            name.substr(name.size() - 5) == ".json" && name.find("_buffer") == std::string::npos) {
            const auto stem = entry.path().parent_path() / name.substr(0, name.size() - 5);
            if (best.empty() || stem.string() > best) best = stem.string();
        }
    }
    if (best.empty()) throw std::runtime_error("no checkpoints found under " + dir);
    return best;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets) {
    const auto cfg = resolve_config(config_path, sets);
    const auto schedule = build_schedule(cfg.schedule);
    NetworkConfig ncfg = cfg.network;
    ncfg.data_dim = cfg.dataset.dim;
    const Network net(ncfg);
    const auto data = generate_dataset(cfg.dataset);

    std::filesystem::create_directories(cfg.output_dir);
    {
        std::ofstream snap(cfg.output_dir + "/config.ini", std::ios::trunc);
        snap << serialize_run_config(cfg);
    }
    // the embedded snapshot is location-independent: two runs of one config
    // into different directories produce byte-identical checkpoints
    RunConfig embedded = cfg;
    embedded.output_dir = "out";
    std::map<std::string, std::string> meta{{"config", serialize_run_config(embedded)}};
    const auto out = train(net, schedule, cfg.train, data, cfg.output_dir, meta);
    std::cout << "trained " << out.state.epoch << " epochs (" << out.state.step
              << " steps); artifacts in " << cfg.output_dir << "\n";
    return kExitOk;
}

int cmd_schedule(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& out_path) {
    const auto cfg = resolve_config(config_path, sets);
    const auto schedule = build_schedule(cfg.schedule);
    if (out_path.empty()) {
        dump_schedule(schedule, std::cout);
    } else {
        std::ofstream os(out_path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + out_path);
        dump_schedule(schedule, os);
        std::cout << "schedule table written to " << out_path << "\n";
    }
    return kExitOk;
}

struct SampleArgs {
    bool has_s = false, has_count = false, has_seed = false;
    int s = 1;
    long long count = 0;
    long long seed = 0;
};

int cmd_sample(std::string checkpoint, const std::string& config_path,
               const std::vector<std::string>& sets, const SampleArgs& args,
               std::string out_stem) {
    if (std::filesystem::is_directory(checkpoint)) checkpoint = find_latest_checkpoint(checkpoint);
    RunConfig cfg = config_path.empty() ? config_from_checkpoint(checkpoint)
                                        : load_run_config(config_path);
    for (const auto& sv : sets) apply_override(cfg, sv);
    if (args.has_s) cfg.sample.s = args.s;
    if (args.has_count) cfg.sample.count = args.count;
    if (args.has_seed) cfg.sample.seed = static_cast<std::uint64_t>(args.seed);

    const auto schedule = build_schedule(cfg.schedule);
    NetworkConfig ncfg = cfg.network;
    ncfg.data_dim = cfg.dataset.dim;
    const Network net(ncfg);
    const auto state = load_checkpoint(checkpoint, net);

    SampleRequest req;
    req.s = cfg.sample.s;
    req.count = cfg.sample.count;
    req.seed = cfg.sample.seed;
    req.record_trajectory = cfg.sample.record_trajectory;
    const auto run = sample(net, state.ema, schedule, req);  // EMA weights generate

    if (out_stem.empty()) out_stem = cfg.output_dir + "/samples";
    std::filesystem::create_directories(std::filesystem::path(out_stem).parent_path().empty()
                                            ? "."
                                            : std::filesystem::path(out_stem).parent_path().string());
    save_samples(run, out_stem, checkpoint_content_id(state.ema));
    if (run.outputs.dim == 2) export_plot_text(run.outputs, out_stem + ".txt");
    std::cout << "wrote " << run.outputs.n << " samples (s=" << req.s << ") to " << out_stem
              << ".{json,bin}\n";
    return kExitOk;
}

// Analytic suite: closed-form/odesolver consistency, pushforward moments,
// Gronwall envelopes and the bi-Lipschitz ratio checks on a Gaussian
// oracle, plus the gmm score reduction. Model checks run when a checkpoint
// is supplied.
int cmd_verify(const std::string& checkpoint, const std::string& config_path,
               const std::vector<std::string>& sets) {
    RunConfig cfg;
    if (!config_path.empty()) {
        cfg = resolve_config(config_path, sets);
    } else if (!checkpoint.empty()) {
        cfg = config_from_checkpoint(std::filesystem::is_directory(checkpoint)
                                         ? find_latest_checkpoint(checkpoint)
                                         : checkpoint);
        for (const auto& sv : sets) apply_override(cfg, sv);
    } else {
        cfg = resolve_config("", sets);
    }
    const auto schedule = build_schedule(cfg.schedule);
    const int T = schedule_steps(schedule);
    const auto drift = drift_options(cfg.verify);
    VerificationReport rep;

    // canonical Gaussian oracle in the configured dimension
    std::vector<double> mu(static_cast<std::size_t>(cfg.dataset.dim), 0.0);
    if (!mu.empty()) mu[0] = 0.7;
    if (mu.size() > 1) mu[1] = -0.3;
    const auto gauss = AnalyticDensity::isotropic(mu, 0.8);

    {
        // Integrator checks run on a canonical wide-range VE schedule: the
        // drift is strong enough there that truncation error sits well above
        // the double-precision floor, so the order-4 ratios are meaningful.
        const Schedule canon = make_ve_geometric(100, 0.01, 50.0);
        const int Tc = 100;
        auto eng = make_engine(derive_seed(cfg.verify.seed, 0, "verify-closedform"));
        std::vector<double> x(static_cast<std::size_t>(gauss.dim));
        fill_normal(eng, x);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = mu[i] + 3.0 * x[i];
        const auto exact = gaussian_transport_map(gauss, canon, x, Tc, 1.0);
        const auto sol = integrate_pf_ode(gauss, canon, x, Tc, 1, cfg.verify.ode_steps,
                                          Integrator::rk4, drift);
        double err = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            err += (sol.endpoint[i] - exact[i]) * (sol.endpoint[i] - exact[i]);
        err = std::sqrt(err);
        rep.add("closedform_rk4_agreement", err <= 1e-5, err, 1e-5);

        // order-4 convergence under step halving
        const std::int64_t base = 1LL * (Tc - 1);
        double prev_err = -1.0, ratio_lo = 1e300, ratio_hi = 0.0;
        for (int k = 0; k < 3; ++k) {
            const auto s2 = integrate_pf_ode(gauss, canon, x, Tc, 1, base << k,
                                             Integrator::rk4, drift);
            double e2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i)
                e2 += (s2.endpoint[i] - exact[i]) * (s2.endpoint[i] - exact[i]);
            e2 = std::sqrt(e2);
            if (prev_err > 0.0 && e2 > 0.0) {
                ratio_lo = std::min(ratio_lo, prev_err / e2);
                ratio_hi = std::max(ratio_hi, prev_err / e2);
            }
            prev_err = e2;
        }
        rep.add("rk4_order_factor_low", ratio_lo >= 8.0, ratio_lo, 8.0);
        rep.add("rk4_order_factor_high", ratio_hi <= 32.0, ratio_hi, 32.0);

        // integrator invariance at small steps
        const auto heun = integrate_pf_ode(gauss, canon, x, Tc, 1, 100000, Integrator::heun,
                                           drift);
        double dint = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            dint += (sol.endpoint[i] - heun.endpoint[i]) * (sol.endpoint[i] - heun.endpoint[i]);
        rep.add("integrator_invariance", std::sqrt(dint) <= 1e-8, std::sqrt(dint), 1e-8);
    }

    {
        // The flow transports p_T draws to the t=1 marginal exactly; with a
        // proper diffusion schedule that marginal is indistinguishable from
        // p_data. Comparing against p_1 keeps the check valid for any
        // configured schedule.
        const int n = 10000;
        SampleSet pushed;
        pushed.n = n;
        pushed.dim = gauss.dim;
        pushed.data.resize(static_cast<std::size_t>(n) * gauss.dim);
        auto eng2 = make_engine(derive_seed(cfg.verify.seed, 1, "verify-pushforward-draws"));
        for (int i = 0; i < n; ++i) {
            std::vector<double> x0(static_cast<std::size_t>(gauss.dim));
            std::vector<double> epsv(static_cast<std::size_t>(gauss.dim));
            gauss.draw(eng2, x0);
            fill_normal(eng2, epsv);
            auto xt = forward_noise(schedule, T, x0, epsv);
            const auto sol = integrate_pf_ode(gauss, schedule, xt, T, 1, 2LL * (T - 1),
                                              Integrator::rk4, drift);
            std::copy(sol.endpoint.begin(), sol.endpoint.end(),
                      &pushed.data[static_cast<std::size_t>(i) * gauss.dim]);
        }
        const auto mrep = moment_report(pushed, noised_marginal(gauss, schedule, 1));
        rep.add("pushforward_t1_moments_z", mrep.max_abs_z <= 3.0, mrep.max_abs_z, 3.0);
    }

    {
        DriftOptions faulty = drift;
        faulty.score_scale = cfg.verify.score_scale;
        auto uni = verify_uniqueness(gauss, schedule, cfg.verify.trials, cfg.verify.epsilon,
                                     cfg.verify.seed, faulty);
        for (auto& c : uni.checks) rep.checks.push_back(std::move(c));
        auto bil = verify_bilipschitz_oracle(gauss, schedule, T, cfg.verify.pairs,
                                             cfg.verify.seed);
        for (auto& c : bil.checks) rep.checks.push_back(std::move(c));
    }

    {
        // mixture score reduces to the single-Gaussian formula
        std::vector<GaussianComponent> comps{{1.0 - 1e-15, mu, 0.8}, {1e-15, mu, 0.8}};
        const auto gmm = AnalyticDensity::mixture(comps);
        auto eng = make_engine(derive_seed(cfg.verify.seed, 0, "verify-gmmreduce"));
        double worst = 0.0;
        std::vector<double> x(static_cast<std::size_t>(gauss.dim));
        for (int i = 0; i < 64; ++i) {
            fill_normal(eng, x);
            const int t = static_cast<int>(uniform_int(eng, 1, T));
            const auto a = marginal_score(gauss, x, t, schedule);
            const auto b = marginal_score(gmm, x, t, schedule);
            for (std::size_t j = 0; j < x.size(); ++j)
                worst = std::max(worst, std::abs(a[j] - b[j]) /
                                            std::max(1.0, std::abs(a[j])));
        }
        rep.add("gmm_score_reduction", worst <= 1e-14, worst, 1e-14);
    }

    if (!checkpoint.empty()) {
        const auto stem = std::filesystem::is_directory(checkpoint)
                              ? find_latest_checkpoint(checkpoint)
                              : checkpoint;
        NetworkConfig ncfg = cfg.network;
        ncfg.data_dim = cfg.dataset.dim;
        const Network net(ncfg);
        const auto state = load_checkpoint(stem, net);

        auto bil = verify_bilipschitz_model(net, state.ema, schedule, T, cfg.verify.pairs,
                                            cfg.verify.seed);
        for (auto& c : bil.checks) rep.checks.push_back(std::move(c));

        // model convergence across the run's checkpoints, each paired with
        // its saved estimate buffer
        const auto dir = std::filesystem::path(stem).parent_path().string();
        std::vector<ConvergenceSnapshot> snaps;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            const auto name = entry.path().filename().string();
            if (name.rfind("checkpoint_", 0) == 0 && name.size() > 5 &&
                name.substr(name.size() - 5) == ".json" &&
                name.find("_buffer") == std::string::npos) {
                const auto cstem = (entry.path().parent_path() /
                                    name.substr(0, name.size() - 5)).string();
                if (!std::filesystem::exists(cstem + "_buffer.json")) continue;
                auto cs = load_checkpoint(cstem, net);
                auto buf = EstimateBuffer::load(cstem + "_buffer", Backing::memory);
                std::vector<std::int64_t> all(static_cast<std::size_t>(buf.n_data()));
                for (std::int64_t i = 0; i < buf.n_data(); ++i)
                    all[static_cast<std::size_t>(i)] = i;
                snaps.push_back({cs.epoch, std::move(cs.ema), buf.read(all)});
            }
        }
        if (snaps.size() >= 2) {
            const auto density = density_from_dataset_spec(cfg.dataset);
            const auto data = generate_dataset(cfg.dataset);
            auto conv = verify_convergence(net, snaps, data, density, schedule,
                                           cfg.verify.probes, cfg.verify.seed);
            for (auto& c : conv.report.checks) rep.checks.push_back(std::move(c));
            std::printf("# convergence medians (epoch: err_x0 err_oracle):\n");
            for (std::size_t i = 0; i < conv.epochs.size(); ++i)
                std::printf("#   %lld: %.6f %.6f\n", static_cast<long long>(conv.epochs[i]),
                            conv.median_err_x0[i], conv.median_err_oracle[i]);
        }

        // sampler-level non-intersection smoke test
        auto eng = make_engine(derive_seed(cfg.verify.seed, 0, "verify-nonintersect"));
        const auto d = static_cast<std::size_t>(cfg.dataset.dim);
        double min_gap = 1e300;
        std::vector<double> est(d), xa(d), xb(d);
        double noise_scale = 1.0;
        if (const auto* ve = std::get_if<VeSchedule>(&schedule)) noise_scale = ve->sigma_max;
        for (int i = 0; i < 1000; ++i) {
            fill_normal(eng, est);
            fill_normal(eng, xa);
            double dist = 0.0;
            do {
                fill_normal(eng, xb);
                dist = 0.0;
                for (std::size_t j = 0; j < d; ++j) dist += (xa[j] - xb[j]) * (xa[j] - xb[j]);
            } while (std::sqrt(dist) < 1e-6);
            for (auto& v : xa) v *= noise_scale;
            for (auto& v : xb) v *= noise_scale;
            const auto fa = net.f_theta(state.ema, est, xa, T, schedule);
            const auto fb = net.f_theta(state.ema, est, xb, T, schedule);
            double gap = 0.0;
            for (std::size_t j = 0; j < d; ++j) gap += (fa[j] - fb[j]) * (fa[j] - fb[j]);
            min_gap = std::min(min_gap, std::sqrt(gap));
            for (auto& v : xa) v /= noise_scale;
        }
        rep.add("sampler_nonintersection", min_gap > 0.0, min_gap, 0.0);
    }

    rep.print(std::cout);
    return rep.all_pass() ? kExitOk : kExitVerifyFail;
}

int cmd_eval(std::string checkpoint, const std::string& config_path,
             const std::vector<std::string>& sets, const std::string& out_path) {
    if (std::filesystem::is_directory(checkpoint)) checkpoint = find_latest_checkpoint(checkpoint);
    RunConfig cfg = config_path.empty() ? config_from_checkpoint(checkpoint)
                                        : load_run_config(config_path);
    for (const auto& sv : sets) apply_override(cfg, sv);

    const auto schedule = build_schedule(cfg.schedule);
    NetworkConfig ncfg = cfg.network;
    ncfg.data_dim = cfg.dataset.dim;
    const Network net(ncfg);
    const auto state = load_checkpoint(checkpoint, net);

    const auto data = generate_dataset(cfg.dataset);
    DatasetSpec held = cfg.dataset;
    held.n_data = cfg.eval.heldout_count;
    held.seed = cfg.eval.heldout_seed;
    const auto heldout = generate_dataset(held);

    // resample baseline: SW between the two halves of the dataset
    SampleSet lo, hi;
    lo.dim = hi.dim = data.dim;
    lo.n = data.n / 2;
    hi.n = data.n - lo.n;
    lo.data.assign(data.data.begin(), data.data.begin() + lo.n * data.dim);
    hi.data.assign(data.data.begin() + lo.n * data.dim, data.data.end());
    const double baseline = sliced_wasserstein(lo, hi, cfg.eval.projections, cfg.eval.seed);

    std::ostringstream table;
    table << "s,sw_vs_data,sw_vs_heldout,baseline,ratio_heldout\n";
    table.precision(17);
    for (int s : cfg.eval.s_list) {
        SampleRequest req;
        req.s = s;
        req.count = cfg.eval.count;
        req.seed = cfg.sample.seed;
        const auto run = sample(net, state.ema, schedule, req);
        const double swd = sliced_wasserstein(run.outputs, data, cfg.eval.projections,
                                              cfg.eval.seed);
        const double swh = sliced_wasserstein(run.outputs, heldout, cfg.eval.projections,
                                              cfg.eval.seed);
        table << s << ',' << swd << ',' << swh << ',' << baseline << ',' << swh / baseline
              << '\n';
    }
    const std::string out = out_path.empty() ? cfg.output_dir + "/eval.csv" : out_path;
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write eval table: " + out);
    os << table.str();
    std::cout << table.str();
    std::cout << "eval table written to " << out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unified directly denoising diffusion at desk scale"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, out_path;
    std::vector<std::string> sets;
    SampleArgs sample_args;

    auto* train_cmd = app.add_subcommand("train", "run the training loop");
    train_cmd->add_option("--config", config_path, "run configuration file")->required();
    train_cmd->add_option("--set", sets, "override: section.key=value");

    auto* sched_cmd = app.add_subcommand("schedule", "dump the noise schedule table");
    sched_cmd->add_option("--config", config_path, "run configuration file");
    sched_cmd->add_option("--set", sets, "override: section.key=value");
    sched_cmd->add_option("--out", out_path, "output path (default stdout)");

    auto* sample_cmd = app.add_subcommand("sample", "generate by fixed-point iteration");
    sample_cmd->add_option("--checkpoint", checkpoint, "checkpoint stem or run directory")
        ->required();
    sample_cmd->add_option("--config", config_path, "config (default: embedded in checkpoint)");
    sample_cmd->add_option("--set", sets, "override: section.key=value");
    sample_cmd->add_option("--s", sample_args.s, "fixed-point iterations");
    sample_cmd->add_option("--count", sample_args.count, "number of samples");
    sample_cmd->add_option("--seed", sample_args.seed, "sampling seed");
    sample_cmd->add_option("--out", out_path, "output stem");

    auto* verify_cmd = app.add_subcommand("verify", "run oracle verification checks");
    verify_cmd->add_option("--checkpoint", checkpoint, "optional checkpoint for model checks");
    verify_cmd->add_option("--config", config_path, "run configuration file");
    verify_cmd->add_option("--set", sets, "override: section.key=value");

    auto* eval_cmd = app.add_subcommand("eval", "sample quality table vs data");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint stem or run directory")
        ->required();
    eval_cmd->add_option("--config", config_path, "config (default: embedded in checkpoint)");
    eval_cmd->add_option("--set", sets, "override: section.key=value");
    eval_cmd->add_option("--out", out_path, "output table path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, sets);
        if (sched_cmd->parsed()) return cmd_schedule(config_path, sets, out_path);
        if (sample_cmd->parsed()) {
            sample_args.has_s = sample_cmd->count("--s") > 0;
            sample_args.has_count = sample_cmd->count("--count") > 0;
            sample_args.has_seed = sample_cmd->count("--seed") > 0;
            return cmd_sample(checkpoint, config_path, sets, sample_args, out_path);
        }
        if (verify_cmd->parsed()) return cmd_verify(checkpoint, config_path, sets);
        if (eval_cmd->parsed()) return cmd_eval(checkpoint, config_path, sets, out_path);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
