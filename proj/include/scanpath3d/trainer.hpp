#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scanpath3d/checkpoint.hpp"
#include "scanpath3d/config.hpp"
#include "scanpath3d/dataset.hpp"

namespace scanpath3d {

struct TrainingSample {
    std::size_t image = 0;  // index into TrainingSet::images
    Scanpath path;
};

struct TrainingSet {
    std::vector<std::string> image_ids;  // one per entry of images; rotated copies are suffixed "@k"
    std::vector<EquirectImage> images;   // at extractor resolution
    std::vector<TrainingSample> samples;
};

struct ValidationSet {
    std::vector<std::string> image_ids;
    std::vector<EquirectImage> images;
    std::vector<std::vector<Scanpath>> paths;
    std::size_t length = 0;

    bool empty() const { return images.empty(); }
};

/// Fits images to the extractor, resamples paths to the manifest target length and
/// adds longitude rotations. The last cfg.validation_images images are held out.
std::pair<TrainingSet, ValidationSet> build_training_data(const DatasetManifest& dataset, const ModelConfig& model,
                                                          const TrainConfig& cfg);

struct LossRecord {
    std::size_t epoch = 0;
    std::uint64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct ValidationRecord {
    std::size_t epoch = 0;
    MetricScores scores;
};

struct TrainOptions {
    std::filesystem::path out_dir;  // empty: nothing is written
    std::optional<std::filesystem::path> resume;
    MetricConfig metrics;
    /// Stop after this many optimizer steps in total (0: run all epochs).
    std::uint64_t max_steps = 0;
    std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
    std::vector<LossRecord> losses;
    std::vector<ValidationRecord> validation;
    std::size_t epochs_completed = 0;
    std::uint64_t steps = 0;
};

/// Epoch loop: seeded shuffle, batches of (image, scanpath) pairs, teacher-forced
/// NLL, backward, optional clipping and an AdamW step. Writes loss.csv,
/// validation.csv and checkpoints/epoch_NNNN plus a final `model` checkpoint
/// under out_dir. Throws NumericalFailure on a non-finite loss.
TrainResult train(ScanpathModel& model, const TrainingSet& data, const ValidationSet& validation,
                  const TrainConfig& cfg, const TrainOptions& opts = {});

/// One shuffled epoch order; depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch);

std::string format_loss_csv(std::span<const LossRecord> rows);
std::vector<LossRecord> parse_loss_csv(const std::string& text);

}  // namespace scanpath3d
