#include "cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <optional>
#include <ostream>
#include <thread>

#include "scanpath3d/checkpoint.hpp"
#include "scanpath3d/config.hpp"
#include "scanpath3d/dataset.hpp"
#include "scanpath3d/errors.hpp"
#include "scanpath3d/fileio.hpp"
#include "scanpath3d/render.hpp"
#include "scanpath3d/trainer.hpp"

namespace scanpath3d::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
};

RunConfig load_config(const GlobalFlags& g) {
    RunConfig cfg = g.config.empty() ? RunConfig{} : load_run_config(g.config);
    if (g.seed) cfg.seed = cfg.train.seed = *g.seed;
    if (g.threads) cfg.threads = *g.threads;
    validate(cfg);
    return cfg;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots; the lowest-index exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
    } else {
        write_text_atomically(path, text);
    }
}

std::map<std::string, std::vector<Scanpath>> group_by_image(const std::vector<ScanpathRecord>& records) {
    std::map<std::string, std::vector<Scanpath>> out;
    for (const auto& r : records) out[r.image_id].push_back(r.fixations);
    return out;
}

std::string file_safe(std::string id) {
    for (char& c : id)
        if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
    return id;
}

json scores_json(const MetricScores& s) {
    return {{"lev", s.lev},   {"dtw", s.dtw}, {"tde", s.tde},     {"scanmatch", s.scanmatch},
            {"rec", s.rec},   {"ss", s.ss},   {"pairs", s.pairs}, {"tde_pairs", s.tde_pairs}};
}

json saliency_json(const SaliencyScores& s) {
    return {{"auc_judd", s.auc_judd}, {"nss", s.nss}, {"cc", s.cc}, {"sim", s.sim}, {"kld", s.kld}};
}

/// Mean of each numeric field over the entries that are not null.
json mean_of(const std::vector<json>& rows, const std::vector<std::string>& keys) {
    json out = json::object();
    for (const auto& k : keys) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : rows) {
            if (r.contains(k) && r[k].is_number() && std::isfinite(r[k].get<double>())) {
                sum += r[k].get<double>();
                ++n;
            }
        }
        out[k] = n > 0 ? json(sum / static_cast<double>(n)) : json(nullptr);
    }
    return out;
}

// train ------------------------------------------------------------------

struct TrainArgs {
    std::string dataset;
    std::string out;
    std::string resume;
    std::uint64_t max_steps = 0;
};

int cmd_train(const GlobalFlags& g, const TrainArgs& a, std::ostream& out) {
    const RunConfig cfg = load_config(g);
    const DatasetManifest dataset = load_dataset(a.dataset);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    write_text_atomically(dir / "config.json", to_json(cfg).dump(2) + "\n");
    const json manifest = {{"command", "train"},
                           {"seed", cfg.seed},
                           {"threads", cfg.threads},
                           {"dataset", a.dataset},
                           {"resume", a.resume.empty() ? json(nullptr) : json(a.resume)},
                           {"max_steps", a.max_steps},
                           {"versions",
                            {{"scanpath3d", kVersion},
                             {"checkpoint_format", kCheckpointFormatVersion},
                             {"compiler", __VERSION__},
                             {"cxx_standard", __cplusplus}}}};
    write_text_atomically(dir / "run.json", manifest.dump(2) + "\n");

    auto [data, validation] = build_training_data(dataset, cfg.model, cfg.train);
    ScanpathModel model(cfg.model, cfg.seed);
    TrainOptions opts;
    opts.out_dir = dir;
    opts.metrics = cfg.metrics;
    opts.max_steps = a.max_steps;
    if (!a.resume.empty()) opts.resume = fs::path(a.resume);
    const TrainResult r = train(model, data, validation, cfg.train, opts);
    char line[160];
    std::snprintf(line, sizeof line, "trained %llu steps over %zu epochs; final loss %.6f\n",
                  static_cast<unsigned long long>(r.steps), r.epochs_completed,
                  r.losses.empty() ? std::nan("") : r.losses.back().loss);
    out << line;
    return 0;
}

// generate ----------------------------------------------------------------

struct GenerateArgs {
    std::string checkpoint;
    std::vector<std::string> images;
    std::string dataset;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> length;
    std::string out;
};

int cmd_generate(const GlobalFlags& g, const GenerateArgs& a, std::ostream& out) {
    const RunConfig cfg = load_config(g);
    if (a.images.empty() && a.dataset.empty()) throw InvalidConfig("generate needs --image or --dataset");
    LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
    const ScanpathModel& model = ckpt.model;

    std::vector<ImageEntry> images;
    std::size_t length = a.length.value_or(cfg.sampling.length);
    if (!a.dataset.empty()) {
        const DatasetManifest ds = load_dataset(a.dataset);
        images = ds.images;
        if (length == 0) length = ds.target_length;
    }
    for (const auto& p : a.images) images.push_back({fs::path(p).stem().string(), p});
    if (length == 0) length = model.config().decoder.max_length;
    const std::size_t samples = a.samples.value_or(cfg.sampling.samples);
    if (samples == 0) throw InvalidConfig("--samples must be positive");

    SamplingOptions sampling{cfg.sampling.solid_angle_weighting, cfg.sampling.argmax};
    std::vector<std::vector<ScanpathRecord>> results(images.size());
    parallel_for(images.size(), cfg.threads, [&](std::size_t i) {
        const auto& ex = model.config().extractor;
        const EquirectImage img = load_equirect(images[i].path, ex.height, ex.width);
        NoGradGuard no_grad;
        const Tensor memory = model.encode_image(img);
        Rng rng(derive_seed(cfg.seed, i));
        for (std::size_t m = 0; m < samples; ++m) {
            results[i].push_back(
                {images[i].id, model.generate_scanpath(memory, length, rng, sampling), "sample_" + std::to_string(m + 1)});
        }
    });
    std::string text;
    for (const auto& per_image : results)
        for (const auto& r : per_image) text += format_record(r) + "\n";
    emit(a.out, text, out);
    return 0;
}

// evaluate ----------------------------------------------------------------

struct EvaluateArgs {
    std::string predicted;
    std::string ground_truth;
    std::string out;
    bool saliency = false;
};

int cmd_evaluate(const GlobalFlags& g, const EvaluateArgs& a, std::ostream& out) {
    const RunConfig cfg = load_config(g);
    const auto predicted = group_by_image(read_records(a.predicted));
    const auto truth = group_by_image(read_records(a.ground_truth));

    std::vector<std::string> ids, skipped;
    for (const auto& [id, paths] : truth) (predicted.count(id) ? ids : skipped).push_back(id);
    for (const auto& [id, paths] : predicted)
        if (!truth.count(id)) skipped.push_back(id);
    if (ids.empty()) throw NoOverlappingImages("no image id appears in both " + a.predicted + " and " + a.ground_truth);

    std::vector<json> rows(ids.size());
    std::vector<json> saliency_rows(ids.size());
    const SphereGrid& grid = sampling_grid();
    parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
        const auto& pred = predicted.at(ids[i]);
        const auto& human = truth.at(ids[i]);
        json row = scores_json(evaluate_protocol(pred, human, cfg.metrics));
        row["image"] = ids[i];
        row["predicted"] = pred.size();
        row["ground_truth"] = human.size();
        if (a.saliency) {
            const SaliencyMap p = saliency_from_scanpaths(pred, grid);
            const SaliencyMap h = saliency_from_scanpaths(human, grid);
            saliency_rows[i] = saliency_json(saliency_metrics(p, h, fixation_map(human, grid.height, grid.width)));
            row["saliency"] = saliency_rows[i];
        }
        rows[i] = std::move(row);
    });

    json report = {{"metrics", to_json(cfg.metrics)},
                   {"predicted", a.predicted},
                   {"ground_truth", a.ground_truth},
                   {"images", rows},
                   {"skipped_images", skipped},
                   {"aggregate", mean_of(rows, {"lev", "dtw", "tde", "scanmatch", "rec", "ss"})}};
    report["aggregate"]["images"] = ids.size();
    if (a.saliency) {
        report["metrics"]["saliency_sigma"] = kSaliencySigma;
        report["metrics"]["saliency_resolution"] = {grid.height, grid.width};
        report["aggregate"]["saliency"] = mean_of(saliency_rows, {"auc_judd", "nss", "cc", "sim", "kld"});
    }
    emit(a.out, report.dump(2) + "\n", out);
    return 0;
}

// render ------------------------------------------------------------------

struct RenderArgs {
    std::string image;
    std::string scanpaths;
    std::string out;
    std::string id;
    std::size_t max_paths = 0;
};

int cmd_render(const GlobalFlags& g, const RenderArgs& a) {
    load_config(g);
    const Rgb8Image background = read_image(a.image);
    const auto records = read_records(a.scanpaths);
    const std::string want = a.id.empty() ? fs::path(a.image).stem().string() : a.id;
    std::vector<Scanpath> paths;
    for (const auto& r : records)
        if (r.image_id == want) paths.push_back(r.fixations);
    if (paths.empty() && a.id.empty()) {
        for (const auto& r : records) paths.push_back(r.fixations);
    }
    if (paths.empty()) throw ParseError("no scanpaths for image '" + want + "' in " + a.scanpaths);
    if (a.max_paths > 0 && paths.size() > a.max_paths) paths.resize(a.max_paths);
    write_png(a.out, render_scanpaths(background, paths));
    return 0;
}

// saliency ----------------------------------------------------------------

struct SaliencyArgs {
    std::string scanpaths;
    std::string out;
};

int cmd_saliency(const GlobalFlags& g, const SaliencyArgs& a) {
    const RunConfig cfg = load_config(g);
    const auto grouped = group_by_image(read_records(a.scanpaths));
    std::vector<std::pair<std::string, std::vector<Scanpath>>> items(grouped.begin(), grouped.end());
    const fs::path dir(a.out);
    fs::create_directories(dir);
    const SphereGrid& grid = sampling_grid();
    json index = json::array();
    for (const auto& [id, paths] : items) {
        const std::string stem = file_safe(id);
        index.push_back({{"image", id},
                         {"scanpaths", paths.size()},
                         {"salmap", stem + "_salmap.png"},
                         {"fixmap", stem + "_fixmap.png"},
                         {"raw", stem + "_salmap.f64"}});
    }
    parallel_for(items.size(), cfg.threads, [&](std::size_t i) {
        const auto& [id, paths] = items[i];
        const std::string stem = file_safe(id);
        const SaliencyMap sal = saliency_from_scanpaths(paths, grid);
        const SaliencyMap fix = fixation_map(paths, grid.height, grid.width);
        write_png_gray(dir / (stem + "_salmap.png"), sal.height, sal.width, to_gray8(sal));
        write_png_gray(dir / (stem + "_fixmap.png"), fix.height, fix.width, to_gray8(fix));
        write_raw_map(dir / (stem + "_salmap.f64"), sal);
    });
    const json manifest = {{"height", grid.height},
                           {"width", grid.width},
                           {"raw_dtype", "float64, little-endian, row-major, sums to 1"},
                           {"sigma", kSaliencySigma},
                           {"images", index}};
    write_text_atomically(dir / "index.json", manifest.dump(2) + "\n");
    return 0;
}

// validate-dataset ----------------------------------------------------------

struct ValidateArgs {
    std::string dataset;
    std::string write_records;
    bool decode_images = false;
};

int cmd_validate(const GlobalFlags& g, const ValidateArgs& a, std::ostream& out) {
    load_config(g);
    const DatasetManifest ds = load_dataset(a.dataset);
    std::size_t fixations = 0, shortest = 0, longest = 0;
    for (const auto& r : ds.records) {
        fixations += r.fixations.size();
        shortest = shortest == 0 ? r.fixations.size() : std::min(shortest, r.fixations.size());
        longest = std::max(longest, r.fixations.size());
    }
    json summary = {{"name", ds.name},
                    {"images", ds.images.size()},
                    {"records", ds.records.size()},
                    {"fixations", fixations},
                    {"shortest", shortest},
                    {"longest", longest},
                    {"target_length", ds.target_length}};
    if (a.decode_images) {
        json sizes = json::object();
        for (const auto& e : ds.images) {
            const Rgb8Image img = read_image(e.path);
            sizes[e.id] = {img.height, img.width};
        }
        summary["image_sizes"] = sizes;
    }
    if (!a.write_records.empty()) write_records(a.write_records, ds.records);
    out << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Scanpath prediction for 360-degree images"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Base seed for every random stream");
    app.add_option("--threads", g.threads, "Worker threads for per-image work")->check(CLI::PositiveNumber);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset manifest");
    train_cmd->add_option("--dataset", train_args.dataset, "Dataset manifest")->required();
    train_cmd->add_option("--out", train_args.out, "Output directory")->required();
    train_cmd->add_option("--resume", train_args.resume, "Checkpoint to resume from");
    train_cmd->add_option("--max-steps", train_args.max_steps, "Stop after this many optimizer steps");

    GenerateArgs gen_args;
    auto* gen_cmd = app.add_subcommand("generate", "Sample scanpaths from a trained model");
    gen_cmd->add_option("--checkpoint", gen_args.checkpoint, "Checkpoint prefix or file")->required();
    gen_cmd->add_option("--image", gen_args.images, "Equirectangular image (repeatable)");
    gen_cmd->add_option("--dataset", gen_args.dataset, "Generate for every image of a manifest");
    gen_cmd->add_option("--samples", gen_args.samples, "Scanpaths per image");
    gen_cmd->add_option("--length", gen_args.length, "Fixations per scanpath");
    gen_cmd->add_option("--out", gen_args.out, "Output JSON lines (default stdout)");

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score predicted scanpaths against ground truth");
    eval_cmd->add_option("--predicted", eval_args.predicted, "Predicted scanpaths (JSON lines)")->required();
    eval_cmd->add_option("--ground-truth", eval_args.ground_truth, "Human scanpaths (JSON lines)")->required();
    eval_cmd->add_option("--out", eval_args.out, "Report path (default stdout)");
    eval_cmd->add_flag("--saliency", eval_args.saliency, "Also compare saliency maps built from the paths");

    RenderArgs render_args;
    auto* render_cmd = app.add_subcommand("render", "Draw scanpaths over an image");
    render_cmd->add_option("--image", render_args.image, "Background image (PNG or PPM)")->required();
    render_cmd->add_option("--scanpaths", render_args.scanpaths, "Scanpaths (JSON lines)")->required();
    render_cmd->add_option("--out", render_args.out, "Output PNG")->required();
    render_cmd->add_option("--id", render_args.id, "Image id to select (default: image file stem)");
    render_cmd->add_option("--max-paths", render_args.max_paths, "Draw at most this many paths");

    SaliencyArgs sal_args;
    auto* sal_cmd = app.add_subcommand("saliency", "Export saliency and fixation maps per image");
    sal_cmd->add_option("--scanpaths", sal_args.scanpaths, "Scanpaths (JSON lines)")->required();
    sal_cmd->add_option("--out", sal_args.out, "Output directory")->required();

    ValidateArgs val_args;
    auto* val_cmd = app.add_subcommand("validate-dataset", "Check a dataset manifest and its records");
    val_cmd->add_option("--dataset", val_args.dataset, "Dataset manifest")->required();
    val_cmd->add_option("--write-records", val_args.write_records, "Rewrite all records as lat/lon JSON lines");
    val_cmd->add_flag("--decode-images", val_args.decode_images, "Decode every image");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
            err << "run '" << args.front() << " " << sub->get_name() << " --help' for usage\n";
        }
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(g, train_args, out);
        if (*gen_cmd) return cmd_generate(g, gen_args, out);
        if (*eval_cmd) return cmd_evaluate(g, eval_args, out);
        if (*render_cmd) return cmd_render(g, render_args);
        if (*sal_cmd) return cmd_saliency(g, sal_args);
        if (*val_cmd) return cmd_validate(g, val_args, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}

}  // namespace scanpath3d::cli
