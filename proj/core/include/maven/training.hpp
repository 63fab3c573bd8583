// SPDX-License-Identifier: Apache-2.0
//
// The multi-discriminator training procedure: per step, K discriminator updates on
// independent minibatches, one generator update against the ensemble feedback and one
// encoder update. DC-GAN and VAE-GAN are the same machinery with the encoder disabled
// or K = 1 respectively.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "maven/data.hpp"
#include "maven/ensemble.hpp"
#include "maven/losses.hpp"
#include "maven/networks.hpp"
#include "maven/optimizer.hpp"

namespace maven {

enum class ModelKind { dcgan, vaegan, maven };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelSpec {
    ModelKind kind = ModelKind::maven;
    NetworkConfig network{};
    EnsembleConfig ensemble{};

    bool uses_encoder() const { return kind != ModelKind::dcgan; }
    void validate() const;
};

struct TrainingConfig {
    std::size_t samples_per_epoch = 0;  // m; 0 means "size of the training split"
    std::size_t batch_size = 64;        // B
    std::size_t epochs = 1;
    double labeled_fraction = 0.10;
    double lr_g = 2e-4;
    double lr_d = 2e-4;
    double lr_e = 1e-5;
    double adam_beta1 = 0.5;
    std::uint64_t seed = 0;
    std::size_t checkpoint_interval = 0;  // epochs between checkpoints; 0 = final only

    std::size_t steps_per_epoch(std::size_t dataset_size) const;
    void validate() const;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameters, optimizer moments, counters and the rng stream of one run.
/// Optimizers hold pointers into the networks, so the state is move-only; use clone().
class ModelState {
    ModelSpec spec_;

public:
    /// Builds networks from spec.network with weights drawn from `seed`.
    /// Learning rates may be zero here (a frozen run); TrainingConfig::validate rejects that.
    ModelState(ModelSpec spec, const TrainingConfig& cfg);
    ModelState(ModelState&&) noexcept = default;
    ModelState& operator=(ModelState&&) noexcept = default;
    ModelState(const ModelState&) = delete;
    ModelState& operator=(const ModelState&) = delete;

    ModelState clone() const;

    const ModelSpec& spec() const noexcept { return spec_; }
    std::size_t k() const noexcept { return discriminators.size(); }

    std::optional<Encoder> encoder;
    Generator generator;
    std::vector<Discriminator> discriminators;
    std::optional<Adam> opt_e;
    Adam opt_g;
    std::vector<Adam> opt_d;
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;
    Rng rng;
    std::vector<std::string> warnings;  // distinct messages raised while training

    /// Flattened copies of parameter values (and buffers) for comparisons in tests and tools.
    std::vector<double> encoder_snapshot(bool with_buffers = false);
    std::vector<double> generator_snapshot(bool with_buffers = false);
    std::vector<double> discriminator_snapshot(std::size_t k, bool with_buffers = false);

private:
    ModelState(ModelSpec spec, std::optional<Encoder> e, Generator g, std::vector<Discriminator> d,
               const AdamSettings& se, const AdamSettings& sg, const AdamSettings& sd);
    static ModelState build(ModelSpec spec, const TrainingConfig& cfg);
};

/// Supplies real minibatches to a training step. next_labeled may return an empty batch.
class BatchSource {
public:
    virtual ~BatchSource() = default;
    virtual ImageBatch next_real() = 0;
    virtual ImageBatch next_labeled() = 0;
};

/// Two deterministic streams over a semi-supervised view: every item for the
/// unsupervised terms, labeled items for the supervised term.
class StreamBatchSource final : public BatchSource {
public:
    StreamBatchSource(const SemiSupervisedView& view, std::size_t batch_size, std::uint64_t seed);
    ImageBatch next_real() override { return real_.next(); }
    ImageBatch next_labeled() override;

private:
    BatchStream real_;
    std::optional<BatchStream> labeled_;
};

enum class StepPhase { before_discriminator, after_discriminator, after_generator, after_encoder };

/// Called at phase boundaries inside train_step; `k` is the discriminator index for the
/// discriminator phases and 0 otherwise.
using StepObserver = std::function<void(StepPhase phase, std::size_t k, ModelState& state)>;

/// One iteration of the procedure. Updates `state` in place and returns the loss breakdown
/// (discriminator components are averaged over the K discriminators).
LossBreakdown train_step(ModelState& state, BatchSource& source, const TrainingConfig& cfg,
                         const StepObserver& observer = {});

/// Independent single-discriminator VAE-GAN step (no ensemble layer). Consumes the
/// source and rng in the same order as train_step with K = 1, so trajectories can be compared.
LossBreakdown vaegan_reference_step(ModelState& state, BatchSource& source, const TrainingConfig& cfg);

struct HistoryRow {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    LossBreakdown losses;
};

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows);
std::string history_csv_header();
std::string history_csv_line(const HistoryRow& row);

struct TrainOptions {
    std::optional<std::filesystem::path> out_dir;  // history.csv and checkpoints/ go here
    std::ostream* progress = nullptr;               // one line per epoch
};

struct TrainResult {
    ModelState state;
    std::vector<HistoryRow> history;
    std::vector<std::filesystem::path> checkpoints;
    std::vector<std::string> warnings;
};

/// Runs epochs x floor(m / B) steps over a stratified semi-supervised view of `data`.
TrainResult train(std::shared_ptr<const DatasetSplit> data, const ModelSpec& spec, const TrainingConfig& cfg,
                  const TrainOptions& options = {});

/// Writes every network, optimizer and the counters/rng into `dir`.
void save_model(ModelState& state, const std::filesystem::path& dir);
ModelState load_model(const std::filesystem::path& dir);

/// Ensemble class probabilities (weighted mean over discriminators, inference mode).
Tensor classify(ModelState& state, const Tensor& images, std::size_t chunk = 256);

/// `count` generator samples from N(0, I) noise, inference mode.
Tensor sample_images(ModelState& state, std::size_t count, Rng& rng, std::size_t chunk = 256);

}  // namespace maven
