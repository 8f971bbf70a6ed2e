#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "udddm/estimate_store.hpp"
#include "udddm/evalkit.hpp"
#include "udddm/network.hpp"
#include "udddm/schedules.hpp"

namespace udddm {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainHyper {
    int epochs = 200;
    int batch_size = 256;
    AdamConfig adam;
    double ema_decay = 0.9999;
    double pseudo_huber_c = 0.00014;
    double grad_clip = 0.0;  // global-norm clip, 0 disables
    std::uint64_t seed = 1234;
    int checkpoint_every = 10;  // epochs between checkpoints; 0 = final only
    Backing buffer_backing = Backing::memory;
};

struct EpochStats {
    std::int64_t epoch = 0;
    double w_guide = 1.0;
    double loss_guide = 0.0;
    double loss_iter = 0.0;
    double loss_udddm = 0.0;
    double wall_seconds = 0.0;
};

struct TrainState {
    NetworkParams params;
    NetworkParams adam_m;
    NetworkParams adam_v;
    NetworkParams ema;
    std::int64_t epoch = 0;  // epoch index n about to run
    std::int64_t step = 0;   // optimizer steps taken
    std::mt19937_64 rng;
    std::vector<EpochStats> trace;
};

struct StepStats {
    double loss_guide = 0.0;
    double loss_iter = 0.0;
    double loss_udddm = 0.0;
};

// ema <- decay * ema + (1 - decay) * params, elementwise. decay in (0,1).
void ema_update(NetworkParams& ema, const NetworkParams& params, double decay);

// Bias-corrected Adam update; `step` counts updates starting at 1.
void adam_step(NetworkParams& params, NetworkParams& m, NetworkParams& v,
               const NetworkParams& grad, std::int64_t step, const AdamConfig& cfg);

// One batch: per sample draw t ~ U{1..T} and eps ~ N(0,I), noise the data
// point, predict with the current buffer estimate as conditioning, take the
// adaptive-loss gradient (batch mean, fixed accumulation order), one Adam
// update, the EMA update, then write the pre-update predictions back as the
// next estimates. Throws on non-finite loss or gradient.
StepStats train_step(const Network& net, const Schedule& schedule, const TrainHyper& hyper,
                     TrainState& state, EstimateBuffer& buffer, const SampleSet& data,
                     std::span<const std::int64_t> indices);

struct TrainOutputs {
    TrainState state;
    EstimateBuffer buffer;
};

using StepHook = std::function<void(const TrainState&, const StepStats&)>;

TrainState init_train_state(const Network& net, const TrainHyper& hyper);

// Full run: epochs * floor(N/batch) steps with a seeded reshuffle per
// epoch. With a non-empty out_dir, appends one metrics row per epoch to
// metrics.csv and writes checkpoints (always after epochs 0 and 1, then on
// the checkpoint_every cadence, and after the final epoch).
//
// extra_meta is copied into every checkpoint manifest (the CLI stores the
// config snapshot this way so checkpoints are self-describing).
TrainOutputs train(const Network& net, const Schedule& schedule, const TrainHyper& hyper,
                   const SampleSet& data, const std::string& out_dir = "",
                   const std::map<std::string, std::string>& extra_meta = {},
                   const StepHook& hook = {});

// Continues a run from a restored state + buffer (mid-run checkpoint).
TrainOutputs train_resume(const Network& net, const Schedule& schedule, const TrainHyper& hyper,
                          const SampleSet& data, TrainState state, EstimateBuffer buffer,
                          const std::string& out_dir = "",
                          const std::map<std::string, std::string>& extra_meta = {},
                          const StepHook& hook = {});

// Checkpoint = manifest+blob with per-layer tensors for params, Adam
// moments and EMA shadows, plus epoch/step/rng state in the manifest meta.
void save_checkpoint(const std::string& stem, const TrainState& state,
                     const std::map<std::string, std::string>& extra_meta = {});

TrainState load_checkpoint(const std::string& stem, const Network& net);

std::map<std::string, std::string> read_checkpoint_meta(const std::string& stem);

// FNV-1a over the EMA parameter bytes; stable id recorded in sample files.
std::string checkpoint_content_id(const NetworkParams& ema);

}  // namespace udddm
