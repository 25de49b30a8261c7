#include "scanpath3d/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "scanpath3d/errors.hpp"
#include "scanpath3d/fileio.hpp"

namespace scanpath3d {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kShuffleTag = 0;
constexpr std::uint64_t kDropoutTag = 1ULL << 40;
constexpr std::uint64_t kValidationTag = 2ULL << 40;

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string format_validation_csv(std::span<const ValidationRecord> rows) {
    std::string out = "epoch,lev,dtw,tde,scanmatch,rec,ss,pairs\n";
    for (const auto& r : rows) {
        const auto& s = r.scores;
        out += fmt("%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", r.epoch, s.lev, s.dtw, s.tde, s.scanmatch, s.rec,
                   s.ss, s.pairs);
    }
    return out;
}

void copy_parameters(const ScanpathModel& from, ScanpathModel& to) {
    const auto& src = from.parameters().items();
    const auto& dst = to.parameters().items();
    for (std::size_t i = 0; i < src.size(); ++i) {
        Tensor t = dst[i].second;
        std::ranges::copy(src[i].second.data(), t.mutable_data().begin());
    }
}

MetricScores validate_epoch(const ScanpathModel& model, const ValidationSet& validation, std::size_t samples,
                            std::uint64_t seed, std::size_t epoch, const MetricConfig& metrics) {
    MetricScores total;
    double tde_sum = 0.0;
    std::size_t tde_images = 0;
    for (std::size_t i = 0; i < validation.images.size(); ++i) {
        NoGradGuard no_grad;
        const Tensor memory = model.encode_image(validation.images[i]);
        Rng rng(derive_seed(seed, kValidationTag + epoch * 100003 + i));
        std::vector<Scanpath> predicted;
        for (std::size_t m = 0; m < samples; ++m) predicted.push_back(model.generate_scanpath(memory, validation.length, rng));
        const MetricScores s = evaluate_protocol(predicted, validation.paths[i], metrics);
        total.lev += s.lev;
        total.dtw += s.dtw;
        total.scanmatch += s.scanmatch;
        total.rec += s.rec;
        total.ss += s.ss;
        total.pairs += s.pairs;
        total.tde_pairs += s.tde_pairs;
        if (!std::isnan(s.tde)) {
            tde_sum += s.tde;
            ++tde_images;
        }
    }
    const double n = static_cast<double>(validation.images.size());
    total.lev /= n;
    total.dtw /= n;
    total.scanmatch /= n;
    total.rec /= n;
    total.ss /= n;
    total.tde = tde_images > 0 ? tde_sum / static_cast<double>(tde_images) : std::nan("");
    return total;
}

}  // namespace

std::pair<TrainingSet, ValidationSet> build_training_data(const DatasetManifest& dataset, const ModelConfig& model,
                                                          const TrainConfig& cfg) {
    if (dataset.target_length > model.decoder.max_length) {
        throw SequenceTooLong("dataset target_length " + std::to_string(dataset.target_length) +
                              " exceeds decoder max_length " + std::to_string(model.decoder.max_length));
    }
    if (cfg.validation_images >= dataset.images.size() && cfg.validation_images > 0) {
        throw InvalidConfig("validation_images leaves no training images");
    }
    const auto grouped = dataset.paths_by_image();
    const std::size_t n_train = dataset.images.size() - cfg.validation_images;
    TrainingSet train;
    ValidationSet val;
    val.length = dataset.target_length;
    for (std::size_t i = 0; i < dataset.images.size(); ++i) {
        const auto& entry = dataset.images[i];
        EquirectImage image = load_equirect(entry.path, model.extractor.height, model.extractor.width);
        std::vector<Scanpath> paths;
        for (const auto& p : grouped[i]) paths.push_back(resample_scanpath(p, dataset.target_length));

        if (i >= n_train) {
            if (paths.empty()) continue;
            val.image_ids.push_back(entry.id);
            val.images.push_back(std::move(image));
            val.paths.push_back(std::move(paths));
            continue;
        }
        if (paths.empty()) continue;
        auto add = [&](std::string id, EquirectImage img, std::vector<Scanpath> ps) {
            const std::size_t slot = train.images.size();
            train.image_ids.push_back(std::move(id));
            train.images.push_back(std::move(img));
            for (auto& p : ps) train.samples.push_back({slot, std::move(p)});
        };
        if (cfg.rotation_steps == 0) {
            add(entry.id, std::move(image), std::move(paths));
        } else {
            for (auto& copy : augment_rotations(image, paths, cfg.rotation_steps)) {
                const std::string id = copy.step == cfg.rotation_steps ? entry.id : entry.id + "@" + std::to_string(copy.step);
                add(id, std::move(copy.image), std::move(copy.paths));
            }
        }
    }
    if (train.samples.empty()) throw MissingImage("dataset has no training scanpaths");
    return {std::move(train), std::move(val)};
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    Rng rng(derive_seed(seed, kShuffleTag + epoch));
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    return order;
}

std::string format_loss_csv(std::span<const LossRecord> rows) {
    std::string out = "epoch,step,lr,loss\n";
    for (const auto& r : rows) {
        out += fmt("%zu,%" PRIu64 ",%.17g,%.17g\n", r.epoch, r.step, r.lr, r.loss);
    }
    return out;
}

std::vector<LossRecord> parse_loss_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<LossRecord> rows;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        LossRecord r;
        unsigned long long step = 0;
        if (std::sscanf(line.c_str(), "%zu,%llu,%lf,%lf", &r.epoch, &step, &r.lr, &r.loss) != 4) {
            throw ParseError("bad loss.csv row: " + line);
        }
        r.step = step;
        rows.push_back(r);
    }
    return rows;
}

TrainResult train(ScanpathModel& model, const TrainingSet& data, const ValidationSet& validation,
                  const TrainConfig& cfg, const TrainOptions& opts) {
    validate(cfg);
    if (data.samples.empty()) throw InvalidConfig("training set is empty");
    const std::size_t per_epoch = (data.samples.size() + cfg.batch - 1) / cfg.batch;

    TrainResult result;
    AdamState adam = AdamState::zeros_like(model.parameters());
    const bool writing = !opts.out_dir.empty();
    const auto loss_path = opts.out_dir / "loss.csv";
    const auto val_path = opts.out_dir / "validation.csv";

    if (opts.resume) {
        LoadedCheckpoint ckpt = load_checkpoint(*opts.resume);
        if (to_json(ckpt.model.config()) != to_json(model.config())) {
            throw BadCheckpoint("resume checkpoint was trained with a different model configuration");
        }
        copy_parameters(ckpt.model, model);
        if (ckpt.has_adam) adam = std::move(ckpt.adam);
        result.steps = ckpt.info.step;
        if (writing && std::filesystem::exists(loss_path)) {
            for (const auto& r : parse_loss_csv(read_text(loss_path)))
                if (r.step <= result.steps) result.losses.push_back(r);
        }
    }

    auto save = [&](const std::filesystem::path& prefix, std::size_t epochs_done) {
        CheckpointInfo info{epochs_done, result.steps, cfg.seed, cfg.weight_decay};
        save_checkpoint(prefix, model, info, &adam);
    };
    auto flush_logs = [&] {
        if (!writing) return;
        write_text_atomically(loss_path, format_loss_csv(result.losses));
        if (!result.validation.empty()) write_text_atomically(val_path, format_validation_csv(result.validation));
    };

    const ForwardContext base_enc{model.config().encoder.dropout, nullptr};
    const ForwardContext base_dec{model.config().decoder.dropout, nullptr};

    std::size_t epoch = static_cast<std::size_t>(result.steps / per_epoch);
    std::size_t skip = static_cast<std::size_t>(result.steps % per_epoch);
    bool stopped = false;
    for (; epoch < cfg.total_epochs && !stopped; ++epoch, skip = 0) {
        const double lr = lr_schedule(epoch, cfg);
        const auto order = epoch_order(data.samples.size(), cfg.seed, epoch);
        for (std::size_t b = skip; b < per_epoch; ++b) {
            if (opts.max_steps > 0 && result.steps >= opts.max_steps) {
                stopped = true;
                break;
            }
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), (b + 1) * cfg.batch)));
            std::ranges::stable_sort(batch, {}, [&](std::size_t s) { return data.samples[s].image; });

            Rng dropout_rng(derive_seed(cfg.seed, kDropoutTag + result.steps));
            ForwardContext enc = base_enc, dec = base_dec;
            enc.rng = dec.rng = &dropout_rng;

            // One backward pass per image group keeps a single encoder graph on the tape;
            // leaf gradients accumulate across groups.
            model.parameters().zero_grad();
            const double inv_batch = 1.0 / static_cast<double>(batch.size());
            double loss = 0.0;
            for (std::size_t g = 0; g < batch.size();) {
                const std::size_t image = data.samples[batch[g]].image;
                const Tensor memory = model.encode_image(data.images[image], enc);
                Tensor group;
                for (; g < batch.size() && data.samples[batch[g]].image == image; ++g) {
                    const Tensor l = model.scanpath_loss(memory, data.samples[batch[g]].path, dec);
                    group = group.defined() ? add(group, l) : l;
                }
                group = scale(group, inv_batch);
                const double value = group.item();
                if (!std::isfinite(value)) {
                    Tape::current().clear();
                    throw NumericalFailure(fmt("non-finite loss %g at epoch %zu, step %" PRIu64, value, epoch,
                                               result.steps + 1));
                }
                loss += value;
                backward(group);
            }
            if (cfg.grad_clip > 0.0) clip_gradients(model.parameters(), cfg.grad_clip);
            optimizer_step(model.parameters(), adam, lr, cfg);
            ++result.steps;
            result.losses.push_back({epoch, result.steps, lr, loss});
            if (opts.on_step) opts.on_step(result.losses.back());
        }
        if (stopped) break;
        result.epochs_completed = epoch + 1;
        if (!validation.empty()) {
            result.validation.push_back(
                {epoch, validate_epoch(model, validation, cfg.validation_samples, cfg.seed, epoch, opts.metrics)});
        }
        if (writing) {
            if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
                save(opts.out_dir / "checkpoints" / fmt("epoch_%04zu", epoch + 1), epoch + 1);
            }
            flush_logs();
        }
    }
    if (writing) {
        save(opts.out_dir / "model", static_cast<std::size_t>(result.steps / per_epoch));
        flush_logs();
    }
    return result;
}

}  // namespace scanpath3d
