#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scanpath3d/image.hpp"
#include "scanpath3d/metrics.hpp"

namespace scanpath3d {

struct ScanpathRecord {
    std::string image_id;
    Scanpath fixations;
    std::string observer;  // empty when absent
};

struct ImageEntry {
    std::string id;
    std::filesystem::path path;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::string name;
    std::size_t target_length = 30;
    std::vector<ImageEntry> images;
    std::vector<ScanpathRecord> records;

    const ImageEntry* find_image(const std::string& id) const;
    /// Records grouped by image id, in manifest image order.
    std::vector<std::vector<Scanpath>> paths_by_image() const;
};

/// One JSON line. Fixations are [lat_deg, lon_deg] pairs or [x, y, z] unit vectors.
/// Throws ParseError (with `line`) and CoordinateOutOfRange.
ScanpathRecord parse_record(const std::string& json_line, std::size_t line = 0);
std::string format_record(const ScanpathRecord& record);

std::vector<ScanpathRecord> read_records(const std::filesystem::path& jsonl);
void write_records(const std::filesystem::path& jsonl, std::span<const ScanpathRecord> records);

/// Manifest JSON: {"name", "target_length", "images": {id: file}, "annotations": [jsonl, ...]}.
/// Relative paths resolve against the manifest's directory.
DatasetManifest load_dataset(const std::filesystem::path& manifest_path);

/// Index-space resampling: output i takes input round(i·(n−1)/(T−1)).
Scanpath resample_scanpath(const Scanpath& path, std::size_t target_length);

struct RotatedCopy {
    int step = 0;           // 1..steps
    int column_shift = 0;   // pixels
    double angle = 0.0;     // radians about the polar axis
    EquirectImage image;
    std::vector<Scanpath> paths;
};

/// k·360°/steps longitude rotations for k = 1..steps. When W is not divisible by
/// `steps` the image shift is rounded to the nearest pixel, unless `strict`
/// (then WidthNotDivisible).
std::vector<RotatedCopy> augment_rotations(const EquirectImage& image, std::span<const Scanpath> paths,
                                           int steps = 6, bool strict = false);

}  // namespace scanpath3d
