#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace udddm {

// Column-flat sample matrix: n rows of dim doubles each.
struct SampleSet {
    std::int64_t n = 0;
    int dim = 0;
    std::vector<double> data;

    const double* row(std::int64_t i) const { return &data[static_cast<std::size_t>(i) * dim]; }
};

enum class DatasetKind { eight_gaussians, two_moons, isotropic_gaussian, gmm };

DatasetKind dataset_kind_from_name(const std::string& name);
const char* dataset_kind_name(DatasetKind k);

struct GmmComponentSpec {
    double weight = 1.0;
    std::vector<double> mu;
    double s = 1.0;  // isotropic std
};

struct DatasetSpec {
    DatasetKind kind = DatasetKind::eight_gaussians;
    std::int64_t n_data = 8192;
    int dim = 2;
    std::uint64_t seed = 7;

    // eight_gaussians: component means on a circle of `radius`, per-component
    // std `component_std`, uniform component choice
    double radius = 2.0;
    double component_std = 0.02;

    // two_moons: unit half-circles offset by (1, 0.5), plus isotropic noise
    double noise_std = 0.05;

    // isotropic_gaussian
    std::vector<double> mu;
    double s = 1.0;

    // gmm
    std::vector<GmmComponentSpec> components;
};

// Deterministic under the seed carried in the spec struct.
SampleSet generate_dataset(const DatasetSpec& spec);

// Root of the mean squared 1D 2-Wasserstein distance over `projections`
// seeded random unit directions. The 1D distance uses the exact
// quantile-function formulation, so sample counts may differ.
double sliced_wasserstein(const SampleSet& a, const SampleSet& b, int projections,
                          std::uint64_t seed);

// Exact squared 2-Wasserstein distance between two 1D empirical
// distributions (sorted-sample / quantile-merge form).
double wasserstein2_sq_1d(std::vector<double> a, std::vector<double> b);

struct MomentReport {
    std::vector<double> mean_z;        // per-coordinate z-scores of the mean
    std::vector<double> cov_z;         // row-major dim x dim z-scores of covariance entries
    double max_abs_z = 0.0;
};

struct AnalyticDensity;  // oracle module

// Compares empirical first and second moments against the density's
// closed-form moments; z-scores are scaled by empirical standard errors.
MomentReport moment_report(const SampleSet& samples, const AnalyticDensity& density);

// Two-column text export for plotting 2D sample sets.
void export_plot_text(const SampleSet& s, const std::string& path);

}  // namespace udddm
