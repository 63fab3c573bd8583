// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: flat key = value configs, repeated-seed runs, metric reports,
// paper-layout CSV tables and density histograms.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "maven/data.hpp"
#include "maven/metrics.hpp"
#include "maven/training.hpp"

namespace maven {

enum class DatasetKind { cifar10, svhn, folder, glyphs, ring };
std::string to_string(DatasetKind kind);

enum class Projection { image_mean, flattened };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::glyphs;
    std::filesystem::path path;    // cifar10 / svhn / folder (folder expects train/ and test/)
    std::size_t image_size = 32;   // folder: resize target
    std::size_t channels = 3;      // folder: 1 or 3
    std::size_t train_count = 2000;  // synthetic sets
    std::size_t test_count = 500;
    std::size_t side = 16;         // glyphs
    double noise = 0.15;           // glyphs
    std::size_t modes = 8;         // ring
    double radius = 2.0;           // ring
    double sigma = 0.02;           // ring
    std::uint64_t seed = 7;        // synthetic sets are fixed across repeats
};

struct EvalSpec {
    std::size_t samples = 0;        // generated samples per redraw; 0 = training-set size
    std::size_t fid_repeats = 20;   // R independent redraws
    std::array<double, 4> ddd_weights = kDefaultDddWeights;
    Projection projection = Projection::image_mean;
    std::size_t histogram_bins = 50;
    std::uint64_t embedder_seed = 2024;
};

struct ExperimentConfig {
    ModelSpec model;
    DatasetSpec dataset;
    TrainingConfig train;
    EvalSpec eval;
    std::size_t repeats = 10;
    std::filesystem::path out_dir;  // empty: $MAVEN_OUT_ROOT or ./runs
    std::vector<std::size_t> sweep_k{2, 3, 5};

    std::string model_label() const;
};

struct ConfigIssue {
    std::size_t line = 0;  // 0: whole-file issue
    std::string key;
    std::string message;
};

class ConfigErrors : public std::runtime_error {
public:
    explicit ConfigErrors(std::vector<ConfigIssue> issues);
    const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

private:
    std::vector<ConfigIssue> issues_;
};

/// Parses and cross-validates a config text. Relative paths resolve against base_dir.
/// Throws ConfigErrors listing every problem found.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig validate_config(const std::filesystem::path& path);

/// Resolved configuration as a config text (every key, explicit values).
std::string render_config(const ExperimentConfig& cfg);

struct LoadedData {
    std::shared_ptr<const DatasetSplit> train;
    std::shared_ptr<const DatasetSplit> test;
};

/// Loads (or synthesizes) the train and test splits and fixes up the network's image shape
/// and class count from them.
LoadedData load_experiment_data(ExperimentConfig& cfg);

struct MetricReport {
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::vector<double> fid_values;
    double fid_mean = 0.0;
    double fid_std = 0.0;
    double ddd = 0.0;
    MomentSummary real_moments, fake_moments;
    double accuracy = 0.0;
    std::vector<double> f1;
    std::vector<std::string> warnings;

    std::string to_json() const;
    static MetricReport from_json(const std::string& text);
};

struct Aggregate {
    std::size_t succeeded = 0;
    double fid_mean = 0.0, fid_std = 0.0;
    double ddd_mean = 0.0, ddd_std = 0.0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    std::vector<double> f1_mean;
};

/// Mean and sample standard deviation over the successful reports.
Aggregate aggregate_reports(const std::vector<MetricReport>& reports);

struct ReportBundle {
    std::string model;
    std::vector<std::string> class_names;
    std::vector<MetricReport> reports;
    Aggregate aggregate;
    std::vector<std::filesystem::path> files;  // every file written
    bool artifacts_ok = true;

    int exit_code() const { return artifacts_ok && aggregate.succeeded > 0 ? 0 : 1; }
};

struct RunOptions {
    bool overwrite = false;
    std::ostream* progress = nullptr;
};

class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Output directory: cfg.out_dir if set, else $MAVEN_OUT_ROOT, else ./runs.
std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg);

/// Prepares `dir` for a fresh run: fails if it exists and is non-empty unless overwrite.
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

/// Evaluates a trained state against the loaded splits. `seed` drives sample redraws.
/// `real_projection_out`/`fake_projection_out` receive the scalar projections used for DDD.
MetricReport evaluate_model(ModelState& state, const LoadedData& data, const EvalSpec& eval, std::uint64_t seed,
                            std::vector<double>* real_projection_out = nullptr,
                            std::vector<double>* fake_projection_out = nullptr);

ReportBundle run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// The eight comparison rows: dcgan, vaegan, maven-mean x sweep_k, maven-rand x sweep_k.
std::vector<ExperimentConfig> sweep_grid(const ExperimentConfig& base);
std::vector<ReportBundle> run_sweep(const ExperimentConfig& base, const RunOptions& options = {});

// ---------------------------------------------------------------- tables

std::string generative_table_header();
std::string generative_table_row(const ReportBundle& b);
std::string classification_table_header(const std::vector<std::string>& class_names);
std::string classification_table_row(const ReportBundle& b);

// ---------------------------------------------------------------- density histograms

std::vector<double> project(const Tensor& images, Projection p);

struct DensityHistogram {
    std::vector<double> edges;  // bins + 1
    std::vector<double> density_real, density_fake;

    std::size_t bins() const { return density_real.size(); }
    double width(std::size_t i) const { return edges[i + 1] - edges[i]; }
};

/// Normalized histograms over shared edges spanning both sample sets.
DensityHistogram compute_density_histogram(std::span<const double> real, std::span<const double> fake,
                                           std::size_t bins);
/// Integral of min(density_real, density_fake).
double histogram_overlap(const DensityHistogram& h);

/// Writes <stem>.csv (bin_left, bin_right, density_real, density_fake) and <stem>.png.
/// Returns the two paths.
std::vector<std::filesystem::path> emit_density_histogram(std::span<const double> real, std::span<const double> fake,
                                                          std::size_t bins, const std::filesystem::path& stem);

/// "%.17g" formatting used in every machine-readable output.
std::string format_double(double v);

}  // namespace maven
