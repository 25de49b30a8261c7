#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scanpath3d/decoder.hpp"
#include "scanpath3d/encoder.hpp"
#include "scanpath3d/features.hpp"
#include "scanpath3d/mixture.hpp"

namespace scanpath3d {

struct ModelConfig {
    ExtractorConfig extractor;
    EncoderConfig encoder;
    DecoderConfig decoder;
    MdnConfig mdn;
};

/// Smallest useful configuration: 16×32 input, 4×8 pool window (L = 16), D = 8,
/// one encoder and one decoder layer, K = 2.
ModelConfig tiny_model_config();

/// Throws InvalidConfig / ConfigMismatch for inconsistent sections.
void validate(const ModelConfig& cfg);

/// The 128×256 lattice every generated fixation is drawn from.
const SphereGrid& sampling_grid();

/// Bilinear resize to the extractor resolution when sizes differ.
EquirectImage fit_to_extractor(const EquirectImage& image, const ExtractorConfig& cfg);

class ScanpathModel {
   public:
    explicit ScanpathModel(const ModelConfig& cfg, std::uint64_t init_seed = 0);

    ScanpathModel(const ScanpathModel&) = delete;
    ScanpathModel& operator=(const ScanpathModel&) = delete;
    ScanpathModel(ScanpathModel&&) = default;
    ScanpathModel& operator=(ScanpathModel&&) = default;

    /// P_M: L × D encoder output for one image at extractor resolution.
    Tensor encode_image(const EquirectImage& image, const ForwardContext& ctx = {}) const;

    /// Teacher-forced mixture outputs for targets p*_1..p*_T (inputs origin, p*_1..p*_{T-1}).
    MdnOutputs teacher_forced(const Tensor& memory, std::span<const Fixation> targets,
                              const ForwardContext& ctx = {}) const;

    /// Mean per-step negative log-likelihood of `targets`.
    Tensor scanpath_loss(const Tensor& memory, std::span<const Fixation> targets,
                         const ForwardContext& ctx = {}) const;

    std::vector<Fixation> generate_scanpath(const Tensor& memory, std::size_t length, Rng& rng,
                                            const SamplingOptions& opts = {}) const;

    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }
    const ModelConfig& config() const { return cfg_; }

   private:
    ModelConfig cfg_;
    ParameterSet params_;
    FeatureExtractor extractor_;
    Encoder3d encoder_;
    FixationDecoder decoder_;
    MixtureHead head_;
};

}  // namespace scanpath3d
