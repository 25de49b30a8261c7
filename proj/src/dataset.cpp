#include "scanpath3d/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "scanpath3d/errors.hpp"
#include "scanpath3d/fileio.hpp"

namespace scanpath3d {

using nlohmann::json;

namespace {

std::string where(std::size_t line) { return line > 0 ? "line " + std::to_string(line) + ": " : ""; }

Fixation parse_fixation(const json& f, std::size_t line) {
    if (!f.is_array() || (f.size() != 2 && f.size() != 3)) {
        throw ParseError(where(line) + "fixation must be [lat_deg, lon_deg] or [x, y, z]");
    }
    for (const auto& v : f)
        if (!v.is_number()) throw ParseError(where(line) + "fixation coordinates must be numbers");
    if (f.size() == 2) {
        const double lat = f[0].get<double>(), lon = f[1].get<double>();
        if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
            throw CoordinateOutOfRange(where(line) + "lat " + std::to_string(lat) + ", lon " + std::to_string(lon));
        }
        return latlon_to_unit3({deg_to_rad(lat), deg_to_rad(lon)});
    }
    const Fixation p{f[0].get<double>(), f[1].get<double>(), f[2].get<double>()};
    if (!(std::abs(p.norm() - 1.0) <= 1e-6)) {
        throw CoordinateOutOfRange(where(line) + "3D fixation is not unit length");
    }
    return normalized(p);
}

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : root / path;
}

}  // namespace

const ImageEntry* DatasetManifest::find_image(const std::string& id) const {
    for (const auto& e : images)
        if (e.id == id) return &e;
    return nullptr;
}

std::vector<std::vector<Scanpath>> DatasetManifest::paths_by_image() const {
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < images.size(); ++i) slot[images[i].id] = i;
    std::vector<std::vector<Scanpath>> out(images.size());
    for (const auto& r : records) out[slot.at(r.image_id)].push_back(r.fixations);
    return out;
}

ScanpathRecord parse_record(const std::string& json_line, std::size_t line) {
    json j;
    try {
        j = json::parse(json_line);
    } catch (const json::parse_error& e) {
        throw ParseError(where(line) + e.what());
    }
    if (!j.is_object()) throw ParseError(where(line) + "record must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key != "image" && key != "fixations" && key != "observer") {
            throw ParseError(where(line) + "unknown field '" + key + "'");
        }
    }
    if (!j.contains("image") || !j["image"].is_string()) throw ParseError(where(line) + "missing string 'image'");
    if (!j.contains("fixations") || !j["fixations"].is_array()) {
        throw ParseError(where(line) + "missing array 'fixations'");
    }
    ScanpathRecord r;
    r.image_id = j["image"].get<std::string>();
    if (j.contains("observer")) {
        if (!j["observer"].is_string()) throw ParseError(where(line) + "'observer' must be a string");
        r.observer = j["observer"].get<std::string>();
    }
    for (const auto& f : j["fixations"]) r.fixations.push_back(parse_fixation(f, line));
    if (r.fixations.empty()) throw ParseError(where(line) + "record has no fixations");
    return r;
}

std::string format_record(const ScanpathRecord& record) {
    json fix = json::array();
    for (const auto& p : record.fixations) {
        const LatLon ll = unit3_to_latlon(p);
        fix.push_back({rad_to_deg(ll.lat), rad_to_deg(ll.lon)});
    }
    json j = {{"image", record.image_id}, {"fixations", fix}};
    if (!record.observer.empty()) j["observer"] = record.observer;
    return j.dump();
}

std::vector<ScanpathRecord> read_records(const std::filesystem::path& jsonl) {
    std::ifstream in(jsonl);
    if (!in) throw ParseError("cannot open " + jsonl.string());
    std::vector<ScanpathRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_record(line, n));
    }
    return out;
}

void write_records(const std::filesystem::path& jsonl, std::span<const ScanpathRecord> records) {
    std::string text;
    for (const auto& r : records) text += format_record(r) + "\n";
    write_text_atomically(jsonl, text);
}

DatasetManifest load_dataset(const std::filesystem::path& manifest_path) {
    json j;
    try {
        j = json::parse(read_text(manifest_path));
    } catch (const json::parse_error& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(manifest_path.string() + ": manifest must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key != "name" && key != "target_length" && key != "images" && key != "annotations") {
            throw ParseError(manifest_path.string() + ": unknown manifest key '" + key + "'");
        }
    }
    DatasetManifest m;
    m.root = manifest_path.parent_path();
    try {
        m.name = j.value("name", std::string{});
        m.target_length = j.value("target_length", std::size_t{30});
        if (m.target_length == 0) throw ParseError("target_length must be positive");
        if (j.contains("images")) {
            for (const auto& [id, file] : j.at("images").items()) {
                m.images.push_back({id, resolve(m.root, file.get<std::string>())});
            }
        }
        std::vector<std::string> annotations;
        if (j.contains("annotations")) {
            const auto& a = j.at("annotations");
            if (a.is_string()) {
                annotations.push_back(a.get<std::string>());
            } else {
                annotations = a.get<std::vector<std::string>>();
            }
        }
        for (const auto& image : m.images) {
            if (!std::filesystem::is_regular_file(image.path)) {
                throw MissingImage("image '" + image.id + "' not found at " + image.path.string());
            }
        }
        for (const auto& file : annotations) {
            auto records = read_records(resolve(m.root, file));
            for (auto& r : records) {
                if (m.find_image(r.image_id) == nullptr) {
                    throw MissingImage("record references unknown image '" + r.image_id + "' in " + file);
                }
                m.records.push_back(std::move(r));
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }
    return m;
}

Scanpath resample_scanpath(const Scanpath& path, std::size_t target_length) {
    if (path.empty()) throw PathTooShort("cannot resample an empty scanpath");
    if (target_length == 0) throw InvalidConfig("target length must be positive");
    if (path.size() == target_length) return path;
    Scanpath out;
    out.reserve(target_length);
    const double n1 = static_cast<double>(path.size() - 1);
    for (std::size_t i = 0; i < target_length; ++i) {
        const double pos = target_length == 1 ? 0.0 : static_cast<double>(i) * n1 / static_cast<double>(target_length - 1);
        out.push_back(path[static_cast<std::size_t>(std::llround(pos))]);
    }
    return out;
}

std::vector<RotatedCopy> augment_rotations(const EquirectImage& image, std::span<const Scanpath> paths, int steps,
                                           bool strict) {
    if (steps < 1) throw InvalidConfig("rotation steps must be positive");
    if (strict && image.width % steps != 0) {
        throw WidthNotDivisible("width " + std::to_string(image.width) + " is not divisible by " +
                                std::to_string(steps));
    }
    std::vector<RotatedCopy> out;
    for (int k = 1; k <= steps; ++k) {
        RotatedCopy c;
        c.step = k;
        c.angle = 2.0 * kPi * k / steps;
        c.column_shift = static_cast<int>(std::lround(static_cast<double>(k) * image.width / steps)) % image.width;
        c.image = shift_columns(image, c.column_shift);
        for (const auto& p : paths) {
            Scanpath r;
            r.reserve(p.size());
            for (const auto& f : p) r.push_back(rotate_about_polar_axis(f, c.angle));
            c.paths.push_back(std::move(r));
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace scanpath3d
