#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udddm/evalkit.hpp"
#include "udddm/network.hpp"
#include "udddm/schedules.hpp"

namespace udddm {

// Fixed-point generation: draw x_0^(0) and x_T once per sample, then apply
// x_0^(n+1) = f_theta(x_0^(n), x_T, T) exactly s times with x_T and t = T
// held fixed throughout. s = 1 is single-forward-pass generation.
struct SampleRequest {
    int s = 1;              // fixed-point iterations, >= 1
    std::int64_t count = 1;
    std::uint64_t seed = 0;
    bool record_trajectory = false;
};

struct SampleRun {
    SampleRequest request;
    SampleSet outputs;
    // Per sample, s+1 states starting at x_0^(0); only when recorded.
    std::vector<std::vector<std::vector<double>>> trajectories;
    // Network-call instrumentation (recorded runs): the t passed to every
    // f_theta call and the x_T of each sample, for asserting that multistep
    // sampling never re-noises and never changes t.
    std::vector<int> call_ts;
    std::vector<std::vector<double>> fixed_noise;
};

// Per-sample RNG streams are split from the seed by sample index, so the
// same index yields the same sample regardless of count. x_0^(0) and x_T
// use separate streams; only x_T is sigma_max-scaled in the VE case.
SampleRun sample(const Network& net, const NetworkParams& params, const Schedule& schedule,
                 const SampleRequest& request);

// ||x^(n+1) - x^(n)||_2 per iteration of one recorded trajectory.
std::vector<double> fixed_point_residual(const std::vector<std::vector<double>>& trajectory);

// Sample file: manifest+blob with tensor "samples" (count x data_dim) and
// run metadata (s, seed, checkpoint id).
void save_samples(const SampleRun& run, const std::string& stem,
                  const std::string& checkpoint_id);

SampleSet load_samples(const std::string& stem);

}  // namespace udddm
