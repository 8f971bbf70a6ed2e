#include "udddm/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "udddm/rng.hpp"
#include "udddm/tensor_io.hpp"

namespace udddm {

SampleRun sample(const Network& net, const NetworkParams& params, const Schedule& schedule,
                 const SampleRequest& request) {
    if (request.s < 1) throw std::invalid_argument("sample: s must be >= 1");
    if (request.count < 0) throw std::invalid_argument("sample: count must be >= 0");
    if (!params.all_finite())
        throw std::invalid_argument("sample: parameters contain NaN/Inf (untrained or corrupt)");

    const int T = schedule_steps(schedule);
    const auto d = static_cast<std::size_t>(net.config().data_dim);
    double noise_scale = 1.0;
    if (const auto* ve = std::get_if<VeSchedule>(&schedule)) noise_scale = ve->sigma_max;

    SampleRun run;
    run.request = request;
    run.outputs.n = request.count;
    run.outputs.dim = net.config().data_dim;
    run.outputs.data.resize(static_cast<std::size_t>(request.count) * d);

    std::vector<double> est(d), noise(d);
    for (std::int64_t i = 0; i < request.count; ++i) {
        auto eng_est = make_engine(derive_seed(request.seed, static_cast<std::uint64_t>(i), "x0"));
        auto eng_noise = make_engine(derive_seed(request.seed, static_cast<std::uint64_t>(i), "xT"));
        fill_normal(eng_est, est);
        fill_normal(eng_noise, noise);
        for (auto& v : noise) v *= noise_scale;

        std::vector<std::vector<double>> traj;
        if (request.record_trajectory) {
            traj.push_back(est);
            run.fixed_noise.push_back(noise);
        }
        for (int it = 0; it < request.s; ++it) {
            est = net.f_theta(params, est, noise, T, schedule);
            if (request.record_trajectory) {
                traj.push_back(est);
                run.call_ts.push_back(T);
            }
        }
        std::copy(est.begin(), est.end(), &run.outputs.data[static_cast<std::size_t>(i) * d]);
        if (request.record_trajectory) run.trajectories.push_back(std::move(traj));
    }
    return run;
}

std::vector<double> fixed_point_residual(const std::vector<std::vector<double>>& trajectory) {
    if (trajectory.size() < 2)
        throw std::invalid_argument("fixed_point_residual: trajectory must hold >= 2 states");
    std::vector<double> res;
    res.reserve(trajectory.size() - 1);
    for (std::size_t i = 0; i + 1 < trajectory.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < trajectory[i].size(); ++j) {
            const double diff = trajectory[i + 1][j] - trajectory[i][j];
            acc += diff * diff;
        }
        res.push_back(std::sqrt(acc));
    }
    return res;
}

void save_samples(const SampleRun& run, const std::string& stem,
                  const std::string& checkpoint_id) {
    TensorFile tf;
    tf.tensors.push_back(make_f64_tensor("samples", {run.outputs.n, run.outputs.dim},
                                         run.outputs.data));
    tf.meta["s"] = std::to_string(run.request.s);
    tf.meta["seed"] = std::to_string(run.request.seed);
    tf.meta["count"] = std::to_string(run.request.count);
    tf.meta["checkpoint_id"] = checkpoint_id;
    save_tensor_file(stem, tf);
}

SampleSet load_samples(const std::string& stem) {
    const auto tf = load_tensor_file(stem);
    const auto& t = tf.get("samples");
    if (t.shape.size() != 2) throw std::runtime_error("sample file: bad tensor rank");
    SampleSet s;
    s.n = t.shape[0];
    s.dim = static_cast<int>(t.shape[1]);
    s.data = t.f64;
    return s;
}

}  // namespace udddm
