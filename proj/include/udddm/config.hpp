#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udddm/density.hpp"
#include "udddm/evalkit.hpp"
#include "udddm/network.hpp"
#include "udddm/oracle.hpp"
#include "udddm/schedules.hpp"
#include "udddm/trainer.hpp"

namespace udddm {

// Run configuration, read from an INI-style text file with one section per
// module. Every key has a documented default; unknown sections or keys are
// errors. Values given on the command line (--set section.key=value)
// override file values, which override defaults.

struct ScheduleConfig {
    std::string kind = "vp-linear";  // vp-linear | ve-geometric | ve-karras
    int T = 100;
    double beta_start = 0.015;
    double beta_end = 0.2;
    double sigma_min = 0.01;
    double sigma_max = 50.0;
    double rho = 7.0;
    std::string kappa = "sigma-min-over-sigma";
    double sigma_data = 0.5;
};

struct SampleConfig {
    int s = 1;
    std::int64_t count = 10000;
    std::uint64_t seed = 99;
    bool record_trajectory = false;
};

struct EvalConfig {
    std::vector<int> s_list = {1, 2, 10};
    std::int64_t count = 10000;
    int projections = 128;
    std::uint64_t seed = 55;
    std::int64_t heldout_count = 32768;
    std::uint64_t heldout_seed = 8;
};

struct VerifyConfig {
    int trials = 100;
    int pairs = 1000;
    int probes = 256;
    double epsilon = 1e-4;
    std::uint64_t seed = 33;
    std::int64_t ode_steps = 1000;
    std::string drift_form = "standard";  // standard | printed
    double score_scale = 1.0;  // fault-injection hook for envelope checks
};

struct RunConfig {
    DatasetSpec dataset;
    ScheduleConfig schedule;
    NetworkConfig network;
    TrainHyper train;
    SampleConfig sample;
    EvalConfig eval;
    VerifyConfig verify;
    std::string output_dir = "out";
};

RunConfig default_run_config();

// Parses INI text; throws std::invalid_argument naming the offending line
// for syntax errors, unknown sections/keys or malformed values.
RunConfig parse_run_config(const std::string& text);

RunConfig load_run_config(const std::string& path);

// Canonical serialization: parse(serialize(c)) == c, and serialization of
// equal configs is byte-identical.
std::string serialize_run_config(const RunConfig& c);

// Applies "section.key=value" overrides on top of a parsed config.
void apply_override(RunConfig& c, const std::string& spec);

Schedule build_schedule(const ScheduleConfig& c);
AnalyticDensity density_from_dataset_spec(const DatasetSpec& spec);
DriftOptions drift_options(const VerifyConfig& c);

}  // namespace udddm
