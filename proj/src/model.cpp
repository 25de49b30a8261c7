#include "scanpath3d/model.hpp"

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

ModelConfig tiny_model_config() {
    ModelConfig c;
    c.extractor.height = 16;
    c.extractor.width = 32;
    c.extractor.stage_channels = {4, 4, 4};
    c.extractor.pool_rows = 4;
    c.extractor.pool_cols = 8;
    c.encoder = {.dim = 8, .layers = 1, .heads = 2, .ffn_hidden = 16, .dropout = 0.0};
    c.decoder = {.dim = 8, .layers = 1, .heads = 2, .ffn_hidden = 16, .max_length = 30, .dropout = 0.0};
    c.mdn = {.components = 2, .hidden = 8};
    return c;
}

void validate(const ModelConfig& cfg) {
    const auto& e = cfg.extractor;
    if (e.height < 1 || e.width != 2 * e.height) {
        throw InvalidConfig("extractor image must be H x 2H, got " + std::to_string(e.height) + "x" +
                            std::to_string(e.width));
    }
    if (e.pool_rows < 1 || e.pool_cols < 1 || e.height % e.pool_rows != 0 || e.width % e.pool_cols != 0) {
        throw IndivisibleShape("pool window " + std::to_string(e.pool_rows) + "x" + std::to_string(e.pool_cols) +
                               " does not tile " + std::to_string(e.height) + "x" + std::to_string(e.width));
    }
    if (cfg.encoder.dim != cfg.decoder.dim) {
        throw ConfigMismatch("encoder dim " + std::to_string(cfg.encoder.dim) + " != decoder dim " +
                             std::to_string(cfg.decoder.dim));
    }
    for (const auto* part : {&cfg.encoder.heads, &cfg.decoder.heads}) {
        if (*part == 0 || cfg.encoder.dim % *part != 0) {
            throw InvalidConfig("model dim " + std::to_string(cfg.encoder.dim) + " not divisible by " +
                                std::to_string(*part) + " heads");
        }
    }
    if (cfg.decoder.max_length < 1) throw InvalidConfig("decoder max_length must be positive");
    if (cfg.encoder.dropout < 0.0 || cfg.encoder.dropout >= 1.0 || cfg.decoder.dropout < 0.0 ||
        cfg.decoder.dropout >= 1.0) {
        throw InvalidConfig("dropout must lie in [0, 1)");
    }
}

const SphereGrid& sampling_grid() {
    static const SphereGrid grid = build_grid(128, 256);
    return grid;
}

EquirectImage fit_to_extractor(const EquirectImage& image, const ExtractorConfig& cfg) {
    if (image.height == cfg.height && image.width == cfg.width) return image;
    return resize_bilinear(image, cfg.height, cfg.width);
}

ScanpathModel::ScanpathModel(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    validate(cfg_);
    Rng rng(init_seed);
    extractor_ = FeatureExtractor(cfg_.extractor, params_, rng);
    encoder_ = Encoder3d(cfg_.extractor.channels(), cfg_.encoder, params_, rng);
    decoder_ = FixationDecoder(cfg_.decoder, params_, rng);
    head_ = MixtureHead(cfg_.decoder.dim, cfg_.mdn, params_, rng);
}

Tensor ScanpathModel::encode_image(const EquirectImage& image, const ForwardContext& ctx) const {
    const FeatureMap features = extractor_.extract(image);
    const TokenSequence tokens = pool_and_flatten(features, cfg_.extractor.pool_rows, cfg_.extractor.pool_cols);
    return encoder_.forward(tokens, ctx);
}

MdnOutputs ScanpathModel::teacher_forced(const Tensor& memory, std::span<const Fixation> targets,
                                         const ForwardContext& ctx) const {
    if (targets.empty()) throw PathTooShort("teacher forcing needs at least one target fixation");
    std::vector<Fixation> inputs;
    inputs.reserve(targets.size());
    inputs.push_back(kOriginQuery);
    inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
    return head_.forward(decoder_.decode_teacher_forced(inputs, memory, ctx));
}

Tensor ScanpathModel::scanpath_loss(const Tensor& memory, std::span<const Fixation> targets,
                                    const ForwardContext& ctx) const {
    return mixture_nll(teacher_forced(memory, targets, ctx), targets);
}

std::vector<Fixation> ScanpathModel::generate_scanpath(const Tensor& memory, std::size_t length, Rng& rng,
                                                       const SamplingOptions& opts) const {
    if (length > cfg_.decoder.max_length) {
        throw SequenceTooLong(std::to_string(length) + " steps exceeds max_length " +
                              std::to_string(cfg_.decoder.max_length));
    }
    NoGradGuard no_grad;
    std::vector<Fixation> history{kOriginQuery};
    history.reserve(length + 1);
    DecoderCache cache;
    for (std::size_t t = 0; t < length; ++t) {
        const Tensor z = decoder_.decode_step(history, memory, &cache);
        history.push_back(sample_fixation(head_.mdn_params(z), sampling_grid(), rng, opts));
    }
    return {history.begin() + 1, history.end()};
}

}  // namespace scanpath3d
