#include "scanpath3d/config.hpp"

#include <set>

#include "scanpath3d/errors.hpp"
#include "scanpath3d/fileio.hpp"

namespace scanpath3d {

using nlohmann::json;

namespace {

/// Reads known keys from one section and rejects anything else.
class Section {
   public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw InvalidConfig(label() + " must be an object");
    }

    void read(const char* key, std::size_t& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_unsigned()) throw InvalidConfig(label(key) + " must be a non-negative integer");
            out = v->get<std::size_t>();
        }
    }
    void read(const char* key, int& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_integer()) throw InvalidConfig(label(key) + " must be an integer");
            out = v->get<int>();
        }
    }
    void read(const char* key, double& out) {
        if (const json* v = take(key)) {
            if (!v->is_number()) throw InvalidConfig(label(key) + " must be a number");
            out = v->get<double>();
        }
    }
    void read(const char* key, bool& out) {
        if (const json* v = take(key)) {
            if (!v->is_boolean()) throw InvalidConfig(label(key) + " must be true or false");
            out = v->get<bool>();
        }
    }
    void read(const char* key, std::string& out) {
        if (const json* v = take(key)) {
            if (!v->is_string()) throw InvalidConfig(label(key) + " must be a string");
            out = v->get<std::string>();
        }
    }
    void read(const char* key, std::vector<int>& out) {
        if (const json* v = take(key)) {
            if (!v->is_array()) throw InvalidConfig(label(key) + " must be an array of integers");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number_integer()) throw InvalidConfig(label(key) + " must be an array of integers");
                out.push_back(e.get<int>());
            }
        }
    }
    void read_pair(const char* key, int& a, int& b) {
        std::vector<int> v{a, b};
        read(key, v);
        if (v.size() != 2) throw InvalidConfig(label(key) + " must hold exactly two integers");
        a = v[0];
        b = v[1];
    }
    const json* sub(const char* key) { return take(key); }
    std::string label(const char* key = nullptr) const {
        const std::string base = path_.empty() ? "config" : path_;
        return key ? base + "." + key : base;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) throw InvalidConfig("unknown key " + label(key.c_str()));
        }
    }

   private:
    const json* take(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

DtwMode dtw_mode_from_string(const std::string& s) {
    if (s == "spherical-degrees") return DtwMode::kSphericalDegrees;
    if (s == "equirect-pixels") return DtwMode::kEquirectPixels;
    throw InvalidConfig("unknown dtw mode '" + s + "' (expected spherical-degrees or equirect-pixels)");
}

void read_extractor(const json& j, ExtractorConfig& c) {
    Section s(j, "model.extractor");
    std::string variant = to_string(c.variant);
    s.read("variant", variant);
    c.variant = extractor_variant_from_string(variant);
    s.read("height", c.height);
    s.read("width", c.width);
    s.read("stage_channels", c.stage_channels);
    s.read("kernel_size", c.kernel_size);
    s.read("patch_size", c.patch_size);
    s.read("pool_rows", c.pool_rows);
    s.read("pool_cols", c.pool_cols);
    s.finish();
}

void read_encoder(const json& j, EncoderConfig& c) {
    Section s(j, "model.encoder");
    s.read("dim", c.dim);
    s.read("layers", c.layers);
    s.read("heads", c.heads);
    s.read("ffn_hidden", c.ffn_hidden);
    s.read("dropout", c.dropout);
    s.finish();
}

void read_decoder(const json& j, DecoderConfig& c) {
    Section s(j, "model.decoder");
    s.read("dim", c.dim);
    s.read("layers", c.layers);
    s.read("heads", c.heads);
    s.read("ffn_hidden", c.ffn_hidden);
    s.read("max_length", c.max_length);
    s.read("dropout", c.dropout);
    s.finish();
}

void read_mdn(const json& j, MdnConfig& c) {
    Section s(j, "model.mdn");
    s.read("components", c.components);
    s.read("hidden", c.hidden);
    s.finish();
}

void read_train(const json& j, TrainConfig& c) {
    Section s(j, "train");
    s.read("batch", c.batch);
    s.read("lr", c.lr);
    s.read("warmup_epochs", c.warmup_epochs);
    s.read("halve_every", c.halve_every);
    s.read("total_epochs", c.total_epochs);
    s.read("weight_decay", c.weight_decay);
    s.read("beta1", c.beta1);
    s.read("beta2", c.beta2);
    s.read("eps", c.eps);
    s.read("grad_clip", c.grad_clip);
    s.read("checkpoint_every", c.checkpoint_every);
    s.read("rotation_steps", c.rotation_steps);
    s.read("validation_images", c.validation_images);
    s.read("validation_samples", c.validation_samples);
    s.finish();
}

void read_sampling(const json& j, SamplingConfig& c) {
    Section s(j, "sampling");
    s.read("samples", c.samples);
    s.read("length", c.length);
    s.read("solid_angle_weighting", c.solid_angle_weighting);
    s.read("argmax", c.argmax);
    s.finish();
}

void read_metrics(const json& j, MetricConfig& c) {
    Section s(j, "metrics");
    s.read_pair("lev_bins", c.lev_rows, c.lev_cols);
    std::string mode = to_string(c.dtw.mode);
    s.read("dtw_mode", mode);
    c.dtw.mode = dtw_mode_from_string(mode);
    s.read_pair("dtw_resolution", c.dtw.height, c.dtw.width);
    s.read("tde_k", c.tde_k);
    s.read_pair("scanmatch_bins", c.scanmatch_rows, c.scanmatch_cols);
    s.read("rec_threshold_deg", c.rec_threshold_deg);
    s.read("ss_clusters", c.ss_clusters);
    std::size_t ss_seed = c.ss_seed;
    s.read("ss_seed", ss_seed);
    c.ss_seed = ss_seed;
    s.finish();
}

void read_model(const json& j, ModelConfig& c) {
    Section s(j, "model");
    if (const json* v = s.sub("extractor")) read_extractor(*v, c.extractor);
    if (const json* v = s.sub("encoder")) read_encoder(*v, c.encoder);
    if (const json* v = s.sub("decoder")) read_decoder(*v, c.decoder);
    if (const json* v = s.sub("mdn")) read_mdn(*v, c.mdn);
    s.finish();
}

}  // namespace

std::string to_string(DtwMode mode) {
    return mode == DtwMode::kSphericalDegrees ? "spherical-degrees" : "equirect-pixels";
}

void validate(const TrainConfig& c) {
    auto fail = [](const std::string& m) { throw InvalidConfig("train." + m); };
    if (c.batch < 1) fail("batch must be >= 1");
    if (!(c.lr > 0.0)) fail("lr must be positive");
    if (c.total_epochs < 1) fail("total_epochs must be >= 1");
    if (c.warmup_epochs > c.total_epochs) fail("warmup_epochs must not exceed total_epochs");
    if (c.halve_every < 1) fail("halve_every must be >= 1");
    if (!(c.weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(c.eps > 0.0)) fail("eps must be positive");
    if (!(c.grad_clip >= 0.0)) fail("grad_clip must be non-negative");
    if (c.rotation_steps < 0) fail("rotation_steps must be non-negative");
    if (c.validation_samples < 1) fail("validation_samples must be >= 1");
}

void validate(const RunConfig& c) {
    validate(c.model);
    validate(c.train);
    if (c.threads < 1) throw InvalidConfig("threads must be >= 1");
    if (c.sampling.samples < 1) throw InvalidConfig("sampling.samples must be >= 1");
    if (c.sampling.length > c.model.decoder.max_length) {
        throw InvalidConfig("sampling.length exceeds model.decoder.max_length");
    }
    const auto& m = c.metrics;
    if (m.lev_rows < 1 || m.lev_cols < 1 || m.scanmatch_rows < 1 || m.scanmatch_cols < 1 || m.dtw.height < 1 ||
        m.dtw.width < 1) {
        throw InvalidConfig("metric bin grids must be positive");
    }
    if (m.tde_k < 1) throw InvalidConfig("metrics.tde_k must be >= 1");
    if (m.ss_clusters < 1) throw InvalidConfig("metrics.ss_clusters must be >= 1");
    if (!(m.rec_threshold_deg > 0.0)) throw InvalidConfig("metrics.rec_threshold_deg must be positive");
}

json to_json(const ModelConfig& c) {
    const auto& e = c.extractor;
    return {
        {"extractor",
         {{"variant", to_string(e.variant)},
          {"height", e.height},
          {"width", e.width},
          {"stage_channels", e.stage_channels},
          {"kernel_size", e.kernel_size},
          {"patch_size", e.patch_size},
          {"pool_rows", e.pool_rows},
          {"pool_cols", e.pool_cols}}},
        {"encoder",
         {{"dim", c.encoder.dim},
          {"layers", c.encoder.layers},
          {"heads", c.encoder.heads},
          {"ffn_hidden", c.encoder.ffn_hidden},
          {"dropout", c.encoder.dropout}}},
        {"decoder",
         {{"dim", c.decoder.dim},
          {"layers", c.decoder.layers},
          {"heads", c.decoder.heads},
          {"ffn_hidden", c.decoder.ffn_hidden},
          {"max_length", c.decoder.max_length},
          {"dropout", c.decoder.dropout}}},
        {"mdn", {{"components", c.mdn.components}, {"hidden", c.mdn.hidden}}},
    };
}

json to_json(const TrainConfig& c) {
    return {{"batch", c.batch},
            {"lr", c.lr},
            {"warmup_epochs", c.warmup_epochs},
            {"halve_every", c.halve_every},
            {"total_epochs", c.total_epochs},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"grad_clip", c.grad_clip},
            {"checkpoint_every", c.checkpoint_every},
            {"rotation_steps", c.rotation_steps},
            {"validation_images", c.validation_images},
            {"validation_samples", c.validation_samples}};
}

json to_json(const SamplingConfig& c) {
    return {{"samples", c.samples},
            {"length", c.length},
            {"solid_angle_weighting", c.solid_angle_weighting},
            {"argmax", c.argmax}};
}

json to_json(const MetricConfig& c) {
    return {{"lev_bins", {c.lev_rows, c.lev_cols}},
            {"dtw_mode", to_string(c.dtw.mode)},
            {"dtw_resolution", {c.dtw.height, c.dtw.width}},
            {"tde_k", c.tde_k},
            {"scanmatch_bins", {c.scanmatch_rows, c.scanmatch_cols}},
            {"rec_threshold_deg", c.rec_threshold_deg},
            {"ss_clusters", c.ss_clusters},
            {"ss_seed", c.ss_seed}};
}

json to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"threads", c.threads},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"sampling", to_json(c.sampling)},
            {"metrics", to_json(c.metrics)}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    read_model(j, c);
    return c;
}

MetricConfig metric_config_from_json(const json& j) {
    MetricConfig c;
    read_metrics(j, c);
    return c;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    Section s(j, "");
    std::size_t seed = c.seed;
    s.read("seed", seed);
    c.seed = seed;
    s.read("threads", c.threads);
    if (const json* v = s.sub("model")) read_model(*v, c.model);
    if (const json* v = s.sub("train")) read_train(*v, c.train);
    if (const json* v = s.sub("sampling")) read_sampling(*v, c.sampling);
    if (const json* v = s.sub("metrics")) read_metrics(*v, c.metrics);
    s.finish();
    c.train.seed = c.seed;
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw InvalidConfig(path.string() + ": " + e.what());
    } catch (const ParseError& e) {
        throw InvalidConfig(e.what());
    }
    return run_config_from_json(j);
}

}  // namespace scanpath3d
