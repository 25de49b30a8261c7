#include "scanpath3d/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>

#include "scanpath3d/errors.hpp"
#include "scanpath3d/fileio.hpp"

namespace scanpath3d {

using nlohmann::json;

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* ext) {
    return std::filesystem::path(prefix.string() + ext);
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void append_f64(std::string& out, double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double read_f64(const std::string& in, std::size_t offset) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
    return std::bit_cast<double>(bits);
}

struct BlockWriter {
    std::string bytes;
    json table = json::array();

    void add(const std::string& name, const Shape& shape, std::span<const double> values) {
        table.push_back({{"name", name}, {"shape", shape}, {"offset", bytes.size()}, {"count", values.size()}});
        for (double x : values) append_f64(bytes, x);
    }
};

}  // namespace

std::filesystem::path checkpoint_prefix(const std::filesystem::path& path) {
    const auto ext = path.extension();
    if (ext == ".json" || ext == ".bin") return path.parent_path() / path.stem();
    return path;
}

void save_checkpoint(const std::filesystem::path& prefix, const ScanpathModel& model, const CheckpointInfo& info,
                     const AdamState* adam) {
    BlockWriter w;
    const auto& items = model.parameters().items();
    for (const auto& [name, p] : items) w.add(name, p.shape(), p.data());
    if (adam != nullptr) {
        if (adam->m.size() != items.size() || adam->v.size() != items.size()) {
            throw ShapeMismatch("optimizer state does not match the model parameters");
        }
        for (std::size_t i = 0; i < items.size(); ++i) w.add("adam.m." + items[i].first, items[i].second.shape(), adam->m[i]);
        for (std::size_t i = 0; i < items.size(); ++i) w.add("adam.v." + items[i].first, items[i].second.shape(), adam->v[i]);
    }

    json meta = {{"model", to_json(model.config())},
                 {"init", "xavier_uniform"},
                 {"weight_decay", info.weight_decay},
                 {"epoch", info.epoch},
                 {"step", info.step},
                 {"seed", info.seed}};
    if (adam != nullptr) meta["adam_step"] = adam->step;

    const json manifest = {{"format_version", kCheckpointFormatVersion},
                           {"data_file", with_suffix(prefix, ".bin").filename().string()},
                           {"byte_order", "little"},
                           {"dtype", "f64"},
                           {"checksum", "fnv1a64:" + hex64(fnv1a(w.bytes))},
                           {"blocks", w.table},
                           {"metadata", meta}};

    write_atomically(with_suffix(prefix, ".bin"), [&](const std::filesystem::path& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
        if (!out) throw ParseError("failed writing " + tmp.string());
    });
    write_text_atomically(with_suffix(prefix, ".json"), manifest.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const auto prefix = checkpoint_prefix(path);
    const auto json_path = with_suffix(prefix, ".json");
    json manifest;
    std::string bytes;
    try {
        manifest = json::parse(read_text(json_path));
        std::ifstream in(prefix.parent_path() / manifest.at("data_file").get<std::string>(), std::ios::binary);
        if (!in) throw BadCheckpoint("cannot open data file for " + json_path.string());
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    } catch (const json::exception& e) {
        throw BadCheckpoint(json_path.string() + ": " + e.what());
    } catch (const ParseError& e) {
        throw BadCheckpoint(e.what());
    }

    try {
        if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
            throw BadCheckpoint("unsupported format_version " + manifest.at("format_version").dump());
        }
        if (manifest.at("checksum").get<std::string>() != "fnv1a64:" + hex64(fnv1a(bytes))) {
            throw BadCheckpoint("checksum mismatch for " + json_path.string());
        }
        const json& meta = manifest.at("metadata");
        ModelConfig cfg;
        try {
            cfg = model_config_from_json(meta.at("model"));
        } catch (const InvalidConfig& e) {
            throw BadCheckpoint(e.what());
        }
        LoadedCheckpoint out{ScanpathModel(cfg), {}, {}, false};
        out.info.epoch = meta.at("epoch").get<std::size_t>();
        out.info.step = meta.at("step").get<std::uint64_t>();
        out.info.seed = meta.at("seed").get<std::uint64_t>();
        out.info.weight_decay = meta.at("weight_decay").get<double>();

        std::map<std::string, const json*> blocks;
        for (const auto& b : manifest.at("blocks")) blocks[b.at("name").get<std::string>()] = &b;

        auto fill = [&](const std::string& name, const Shape& shape, std::span<double> dst) {
            auto it = blocks.find(name);
            if (it == blocks.end()) throw BadCheckpoint("missing block " + name);
            const json& b = *it->second;
            if (b.at("shape").get<Shape>() != shape) {
                throw BadCheckpoint("block " + name + " has shape " + b.at("shape").dump() + ", model expects " +
                                    shape_str(shape));
            }
            const auto offset = b.at("offset").get<std::size_t>();
            const auto count = b.at("count").get<std::size_t>();
            if (count != dst.size() || offset % 8 != 0 || offset + 8 * count > bytes.size()) {
                throw BadCheckpoint("block " + name + " lies outside the data file");
            }
            for (std::size_t i = 0; i < count; ++i) dst[i] = read_f64(bytes, offset + 8 * i);
        };

        const auto& items = out.model.parameters().items();
        for (const auto& [name, p] : items) {
            Tensor t = p;
            fill(name, p.shape(), t.mutable_data());
        }
        if (meta.contains("adam_step")) {
            out.has_adam = true;
            out.adam = AdamState::zeros_like(out.model.parameters());
            out.adam.step = meta.at("adam_step").get<std::uint64_t>();
            for (std::size_t i = 0; i < items.size(); ++i) {
                fill("adam.m." + items[i].first, items[i].second.shape(), out.adam.m[i]);
                fill("adam.v." + items[i].first, items[i].second.shape(), out.adam.v[i]);
            }
        }
        return out;
    } catch (const json::exception& e) {
        throw BadCheckpoint(json_path.string() + ": " + e.what());
    } catch (const ShapeMismatch& e) {
        throw BadCheckpoint(e.what());
    } catch (const ConfigMismatch& e) {
        throw BadCheckpoint(e.what());
    } catch (const IndivisibleShape& e) {
        throw BadCheckpoint(e.what());
    }
}

}  // namespace scanpath3d
