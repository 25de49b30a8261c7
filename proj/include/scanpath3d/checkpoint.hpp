#pragma once

#include <cstdint>
#include <filesystem>

#include "scanpath3d/config.hpp"
#include "scanpath3d/model.hpp"
#include "scanpath3d/optimizer.hpp"

namespace scanpath3d {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointInfo {
    std::size_t epoch = 0;  // epochs completed
    std::uint64_t step = 0;  // optimizer steps taken
    std::uint64_t seed = 0;
    double weight_decay = 0.0;
};

struct LoadedCheckpoint {
    ScanpathModel model;
    CheckpointInfo info;
    AdamState adam;  // empty buffers when the checkpoint carries no optimizer state
    bool has_adam = false;
};

/// Writes `<prefix>.bin` (little-endian f64 blocks) and then `<prefix>.json`
/// (format_version, block table, checksum, metadata), each atomically.
void save_checkpoint(const std::filesystem::path& prefix, const ScanpathModel& model, const CheckpointInfo& info,
                     const AdamState* adam = nullptr);

/// Accepts the prefix or either of its two files. Throws BadCheckpoint.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Strips a trailing .json or .bin.
std::filesystem::path checkpoint_prefix(const std::filesystem::path& path);

}  // namespace scanpath3d
