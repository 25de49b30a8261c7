#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "scanpath3d/metrics.hpp"
#include "scanpath3d/model.hpp"

namespace scanpath3d {

struct TrainConfig {
    std::size_t batch = 18;  // (image, scanpath) pairs
    double lr = 1e-5;
    std::size_t warmup_epochs = 10;
    std::size_t halve_every = 10;
    std::size_t total_epochs = 50;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    std::size_t checkpoint_every = 1;  // epochs; 0 disables periodic checkpoints
    int rotation_steps = 6;  // longitude augmentation copies; 0 disables
    std::size_t validation_images = 0;  // held out from the end of the manifest
    std::size_t validation_samples = 10;
    std::uint64_t seed = 0;
};

struct SamplingConfig {
    std::size_t samples = 10;
    std::size_t length = 0;  // 0: dataset target length, else decoder max_length
    bool solid_angle_weighting = true;
    bool argmax = false;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    ModelConfig model;
    TrainConfig train;
    SamplingConfig sampling;
    MetricConfig metrics;
};

/// Throws InvalidConfig.
void validate(const TrainConfig& cfg);
void validate(const RunConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const SamplingConfig& cfg);
nlohmann::json to_json(const MetricConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

/// Missing keys keep their defaults; unknown keys and wrong types throw InvalidConfig.
ModelConfig model_config_from_json(const nlohmann::json& j);
MetricConfig metric_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

std::string to_string(DtwMode mode);

}  // namespace scanpath3d
