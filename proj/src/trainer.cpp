#include "udddm/trainer.hpp"

#include <chrono>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "udddm/metric_loss.hpp"
#include "udddm/rng.hpp"
#include "udddm/tensor_io.hpp"

namespace udddm {

void ema_update(NetworkParams& ema, const NetworkParams& params, double decay) {
    if (!(decay > 0.0 && decay < 1.0))
        throw std::invalid_argument("ema_update: decay must lie strictly in (0,1)");
    if (ema.scalar_count() != params.scalar_count())
        throw std::invalid_argument("ema_update: shape mismatch");
    auto e = ema.scalar_view();
    auto p = params.scalar_view();
    for (std::size_t i = 0; i < e.size(); ++i)
        *e[i] = decay * *e[i] + (1.0 - decay) * *p[i];
}

void adam_step(NetworkParams& params, NetworkParams& m, NetworkParams& v,
               const NetworkParams& grad, std::int64_t step, const AdamConfig& cfg) {
    if (step < 1) throw std::invalid_argument("adam_step: step counts from 1");
    auto p = params.scalar_view();
    auto mm = m.scalar_view();
    auto vv = v.scalar_view();
    auto g = grad.scalar_view();
    if (p.size() != g.size() || p.size() != mm.size() || p.size() != vv.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = *g[i];
        *mm[i] = cfg.beta1 * *mm[i] + (1.0 - cfg.beta1) * gi;
        *vv[i] = cfg.beta2 * *vv[i] + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = *mm[i] / c1;
        const double vhat = *vv[i] / c2;
        *p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

TrainState init_train_state(const Network& net, const TrainHyper& hyper) {
    TrainState st;
    st.params = net.init_params();
    st.adam_m = NetworkParams::zeros_like(st.params);
    st.adam_v = NetworkParams::zeros_like(st.params);
    st.ema = st.params;
    st.rng = make_engine(derive_seed(hyper.seed, 0, "train-loop"));
    return st;
}

StepStats train_step(const Network& net, const Schedule& schedule, const TrainHyper& hyper,
                     TrainState& state, EstimateBuffer& buffer, const SampleSet& data,
                     std::span<const std::int64_t> indices) {
    if (indices.empty()) throw std::invalid_argument("train_step: empty batch");
    const int T = schedule_steps(schedule);
    const auto d = static_cast<std::size_t>(net.config().data_dim);
    if (data.dim != net.config().data_dim)
        throw std::invalid_argument("train_step: dataset dimension mismatch");

    const auto batch = indices.size();
    const auto estimates = buffer.read(indices);
    NetworkParams grad = NetworkParams::zeros_like(state.params);
    std::vector<double> new_estimates(batch * d);
    std::vector<double> eps(d), upstream(d);
    ForwardTrace trace;

    StepStats stats;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t k = 0; k < batch; ++k) {
        const double* x0 = data.row(indices[k]);
        const int t = static_cast<int>(uniform_int(state.rng, 1, T));
        fill_normal(state.rng, eps);
        const auto xt = forward_noise(schedule, t, std::span<const double>(x0, d), eps);
        const std::span<const double> x0e(&estimates[k * d], d);

        const auto pred = net.f_theta(state.params, x0e, xt, t, schedule, &trace);
        const auto loss = adaptive_loss(pred, std::span<const double>(x0, d), x0e, state.epoch,
                                        hyper.pseudo_huber_c);
        stats.loss_guide += loss.guide * inv_batch;
        stats.loss_iter += loss.iter * inv_batch;
        stats.loss_udddm += loss.value * inv_batch;

        for (std::size_t i = 0; i < d; ++i) upstream[i] = loss.grad[i] * inv_batch;
        net.backward_accumulate(state.params, trace, upstream, t, schedule, grad);

        std::copy(pred.begin(), pred.end(), &new_estimates[k * d]);
    }

    if (!std::isfinite(stats.loss_udddm) || !grad.all_finite())
        throw std::runtime_error("train_step: non-finite loss or gradient at epoch " +
                                 std::to_string(state.epoch) + ", step " +
                                 std::to_string(state.step + 1));

    if (hyper.grad_clip > 0.0) {
        double norm_sq = 0.0;
        for (const auto* g : grad.scalar_view()) norm_sq += *g * *g;
        const double norm = std::sqrt(norm_sq);
        if (norm > hyper.grad_clip) {
            const double scale = hyper.grad_clip / norm;
            for (auto* g : grad.scalar_view()) *g *= scale;
        }
    }

    adam_step(state.params, state.adam_m, state.adam_v, grad, ++state.step, hyper.adam);
    ema_update(state.ema, state.params, hyper.ema_decay);
    buffer.write(indices, new_estimates);  // pre-update predictions
    return stats;
}

namespace {

void append_metrics_row(const std::string& out_dir, const EpochStats& s, bool write_header) {
    const auto path = out_dir + "/metrics.csv";
    std::ofstream os(path, std::ios::app);
    if (!os) throw std::runtime_error("cannot append metrics log: " + path);
    if (write_header) os << "epoch,w_guide,loss_guide,loss_iter,loss_udddm,wall_seconds\n";
    os.precision(17);
    os << s.epoch << ',' << s.w_guide << ',' << s.loss_guide << ',' << s.loss_iter << ','
       << s.loss_udddm << ',' << s.wall_seconds << '\n';
}

bool checkpoint_due(std::int64_t epoch, int every, int total_epochs) {
    if (epoch <= 1) return true;
    if (epoch == total_epochs - 1) return true;
    return every > 0 && (epoch + 1) % every == 0;
}

std::string checkpoint_stem(const std::string& out_dir, std::int64_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06lld", static_cast<long long>(epoch));
    return out_dir + "/" + buf;
}

TrainOutputs run_epochs(const Network& net, const Schedule& schedule, const TrainHyper& hyper,
                        const SampleSet& data, TrainState state, EstimateBuffer buffer,
                        const std::string& out_dir,
                        const std::map<std::string, std::string>& extra_meta,
                        const StepHook& hook) {
    if (hyper.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (data.n < hyper.batch_size)
        throw std::invalid_argument("train: dataset smaller than one batch");

    const bool artifacts = !out_dir.empty();
    if (artifacts) std::filesystem::create_directories(out_dir);
    bool metrics_header = artifacts && !std::filesystem::exists(out_dir + "/metrics.csv");

    std::vector<std::int64_t> order(static_cast<std::size_t>(data.n));
    const auto steps_per_epoch = data.n / hyper.batch_size;

    for (std::int64_t n = state.epoch; n < hyper.epochs; ++n) {
        const auto t_begin = std::chrono::steady_clock::now();
        for (std::int64_t i = 0; i < data.n; ++i) order[static_cast<std::size_t>(i)] = i;
        shuffle<std::int64_t>(state.rng, order);

        EpochStats es;
        es.epoch = n;
        es.w_guide = adaptive_weights(n).w_guide;
        for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
            const std::span<const std::int64_t> batch(&order[static_cast<std::size_t>(s) *
                                                             hyper.batch_size],
                                                      static_cast<std::size_t>(hyper.batch_size));
            const auto stats = train_step(net, schedule, hyper, state, buffer, data, batch);
            es.loss_guide += stats.loss_guide / static_cast<double>(steps_per_epoch);
            es.loss_iter += stats.loss_iter / static_cast<double>(steps_per_epoch);
            es.loss_udddm += stats.loss_udddm / static_cast<double>(steps_per_epoch);
            if (hook) hook(state, stats);
        }
        state.epoch = n + 1;
        buffer.set_epoch(state.epoch);
        es.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
        state.trace.push_back(es);

        if (artifacts) {
            append_metrics_row(out_dir, es, metrics_header);
            metrics_header = false;
            if (checkpoint_due(n, hyper.checkpoint_every, hyper.epochs)) {
                const auto stem = checkpoint_stem(out_dir, n);
                auto meta = extra_meta;
                meta["buffer_stem"] = std::filesystem::path(stem).filename().string() + "_buffer";
                save_checkpoint(stem, state, meta);
                buffer.save(stem + "_buffer");
            }
        }
    }

    if (artifacts && state.epoch == 0) {
        // epochs == 0: still leave a usable initial checkpoint behind
        auto meta = extra_meta;
        meta["buffer_stem"] = "checkpoint_initial_buffer";
        save_checkpoint(out_dir + "/checkpoint_initial", state, meta);
        buffer.save(out_dir + "/checkpoint_initial_buffer");
    }
    return TrainOutputs{std::move(state), std::move(buffer)};
}

}  // namespace

TrainOutputs train(const Network& net, const Schedule& schedule, const TrainHyper& hyper,
                   const SampleSet& data, const std::string& out_dir,
                   const std::map<std::string, std::string>& extra_meta, const StepHook& hook) {
    auto state = init_train_state(net, hyper);
    std::string buffer_stem;
    if (hyper.buffer_backing == Backing::disk_spill) {
        if (out_dir.empty())
            throw std::invalid_argument("train: disk-spill buffer requires an output directory");
        std::filesystem::create_directories(out_dir);
        buffer_stem = out_dir + "/buffer_live";
    }
    auto buffer = EstimateBuffer::init(data.n, net.config().data_dim,
                                       derive_seed(hyper.seed, 0, "buffer-init"),
                                       hyper.buffer_backing, buffer_stem);
    return run_epochs(net, schedule, hyper, data, std::move(state), std::move(buffer), out_dir,
                      extra_meta, hook);
}

TrainOutputs train_resume(const Network& net, const Schedule& schedule, const TrainHyper& hyper,
                          const SampleSet& data, TrainState state, EstimateBuffer buffer,
                          const std::string& out_dir,
                          const std::map<std::string, std::string>& extra_meta,
                          const StepHook& hook) {
    return run_epochs(net, schedule, hyper, data, std::move(state), std::move(buffer), out_dir,
                      extra_meta, hook);
}

namespace {

void push_param_tensors(TensorFile& tf, const std::string& prefix, const NetworkParams& p) {
    for (std::size_t l = 0; l < p.w.size(); ++l) {
        const auto& m = p.w[l];
        tf.tensors.push_back(make_f64_tensor(prefix + ".w" + std::to_string(l),
                                             {m.rows, m.cols}, m.a));
        tf.tensors.push_back(make_f64_tensor(prefix + ".b" + std::to_string(l),
                                             {static_cast<std::int64_t>(p.b[l].size())}, p.b[l]));
    }
}

NetworkParams pull_param_tensors(const TensorFile& tf, const std::string& prefix,
                                 const NetworkParams& shape) {
    NetworkParams p = NetworkParams::zeros_like(shape);
    for (std::size_t l = 0; l < p.w.size(); ++l) {
        const auto& wt = tf.get(prefix + ".w" + std::to_string(l));
        const auto& bt = tf.get(prefix + ".b" + std::to_string(l));
        if (wt.f64.size() != p.w[l].a.size() || bt.f64.size() != p.b[l].size())
            throw std::runtime_error("checkpoint: tensor shape mismatch for " + prefix);
        p.w[l].a = wt.f64;
        p.b[l] = bt.f64;
    }
    return p;
}

}  // namespace

void save_checkpoint(const std::string& stem, const TrainState& state,
                     const std::map<std::string, std::string>& extra_meta) {
    TensorFile tf;
    push_param_tensors(tf, "params", state.params);
    push_param_tensors(tf, "adam_m", state.adam_m);
    push_param_tensors(tf, "adam_v", state.adam_v);
    push_param_tensors(tf, "ema", state.ema);
    tf.meta = extra_meta;
    tf.meta["epoch"] = std::to_string(state.epoch);
    tf.meta["step"] = std::to_string(state.step);
    tf.meta["rng_state"] = engine_state_string(state.rng);
    tf.meta["checkpoint_id"] = checkpoint_content_id(state.ema);
    save_tensor_file(stem, tf);
}

TrainState load_checkpoint(const std::string& stem, const Network& net) {
    const auto tf = load_tensor_file(stem);
    TrainState st;
    const auto shape = net.init_params();
    st.params = pull_param_tensors(tf, "params", shape);
    st.adam_m = pull_param_tensors(tf, "adam_m", shape);
    st.adam_v = pull_param_tensors(tf, "adam_v", shape);
    st.ema = pull_param_tensors(tf, "ema", shape);
    st.epoch = std::stoll(tf.meta.at("epoch"));
    st.step = std::stoll(tf.meta.at("step"));
    st.rng = engine_from_state_string(tf.meta.at("rng_state"));
    return st;
}

std::map<std::string, std::string> read_checkpoint_meta(const std::string& stem) {
    return load_tensor_file(stem).meta;
}

std::string checkpoint_content_id(const NetworkParams& ema) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : ema.scalar_view()) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(double));
        std::memcpy(&bits, p, sizeof(bits));
        for (int byte = 0; byte < 8; ++byte) {
            h ^= (bits >> (8 * byte)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace udddm
