#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scanpath3d/checkpoint.hpp"
#include "scanpath3d/errors.hpp"
#include "scanpath3d/fileio.hpp"
#include "scanpath3d/trainer.hpp"

using namespace scanpath3d;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kToy = fs::path(SCANPATH3D_TEST_ASSETS) / "toy" / "manifest.json";

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("scanpath3d_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TrainConfig quick_train() {
    TrainConfig c;
    c.batch = 4;
    c.lr = 1e-2;
    c.warmup_epochs = 1;
    c.halve_every = 2;
    c.total_epochs = 4;
    c.seed = 17;
    return c;
}

// Scalar AdamW written out longhand as the reference trajectory.
struct ScalarAdamW {
    double m = 0, v = 0;
    int t = 0;
    double step(double w, double g, double lr, double wd, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        w = w - lr * wd * w;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        return w - lr * mh / (std::sqrt(vh) + eps);
    }
};

}  // namespace

TEST_CASE("learning-rate schedule") {
    const TrainConfig c;
    CHECK(lr_schedule(0, c) == doctest::Approx(1e-6).epsilon(1e-15));
    CHECK(lr_schedule(4, c) == doctest::Approx(5e-6).epsilon(1e-15));
    CHECK(lr_schedule(9, c) == 1e-5);
    CHECK(lr_schedule(10, c) == 1e-5);
    CHECK(lr_schedule(19, c) == 1e-5);
    CHECK(lr_schedule(20, c) == 5e-6);
    CHECK(lr_schedule(30, c) == 2.5e-6);
    CHECK(lr_schedule(49, c) == 1.25e-6);
    TrainConfig flat = c;
    flat.warmup_epochs = 0;
    CHECK(lr_schedule(0, flat) == 1e-5);
    CHECK(lr_schedule(10, flat) == 5e-6);
}

TEST_CASE("AdamW basics") {
    ParameterSet params;
    Tensor w = params.add("w", {2});
    w.mutable_data()[0] = 1.0;
    w.mutable_data()[1] = -2.0;
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState state = AdamState::zeros_like(params);

    SUBCASE("zero gradients and zero decay leave parameters unchanged") {
        optimizer_step(params, state, 0.1, cfg);
        CHECK(w.at(0) == 1.0);
        CHECK(w.at(1) == -2.0);
    }
    SUBCASE("decay is applied to the weights, not folded into the gradient") {
        cfg.weight_decay = 0.1;
        optimizer_step(params, state, 0.5, cfg);
        CHECK(w.at(0) == 1.0 * (1.0 - 0.05));
        CHECK(state.m[0][0] == 0.0);
    }
    SUBCASE("one step on w^2 moves toward zero") {
        backward(sum(square(w)));
        optimizer_step(params, state, 0.1, cfg);
        CHECK(std::abs(w.at(0)) < 1.0);
        CHECK(std::abs(w.at(1)) < 2.0);
    }
    SUBCASE("mismatched state") {
        AdamState bad;
        CHECK_THROWS_AS(optimizer_step(params, bad, 0.1, cfg), ShapeMismatch);
        bad = state;
        bad.v[0].pop_back();
        CHECK_THROWS_AS(optimizer_step(params, bad, 0.1, cfg), ShapeMismatch);
    }
}

TEST_CASE("AdamW on a two-parameter quadratic follows the scalar reference and converges") {
    // f(w) = 0.5·(3·w0² + 0.5·w1²) with a little decay.
    ParameterSet params;
    Tensor w = params.add("w", {2});
    w.mutable_data()[0] = 1.0;
    w.mutable_data()[1] = -1.5;
    const Tensor curvature = Tensor::from({2}, {3.0, 0.5});
    TrainConfig cfg;
    cfg.weight_decay = 1e-3;
    AdamState state = AdamState::zeros_like(params);
    ScalarAdamW ref0, ref1;
    double r0 = 1.0, r1 = -1.5;
    double max_dev = 0.0;
    for (int i = 0; i < 200; ++i) {
        params.zero_grad();
        backward(scale(sum(mul(curvature, square(w))), 0.5));
        optimizer_step(params, state, 0.1, cfg);
        r0 = ref0.step(r0, 3.0 * r0, 0.1, 1e-3);
        r1 = ref1.step(r1, 0.5 * r1, 0.1, 1e-3);
        max_dev = std::max({max_dev, std::abs(w.at(0) - r0), std::abs(w.at(1) - r1)});
    }
    CHECK(max_dev < 1e-12);
    CHECK(std::hypot(w.at(0), w.at(1)) < 1e-2);
    CHECK(state.step == 200);
}

TEST_CASE("gradient clipping bounds the global norm") {
    ParameterSet params;
    Tensor a = params.add("a", {2});
    Tensor b = params.add("b", {1});
    a.mutable_data()[0] = 3.0;
    b.mutable_data()[0] = 2.0;
    backward(add(sum(scale(a, 1.0)), scale(sum(square(b)), 1.0)));  // grads (1, 1) and 4
    CHECK(global_grad_norm(params) == doctest::Approx(std::sqrt(18.0)));
    CHECK(clip_gradients(params, 1.0) == doctest::Approx(std::sqrt(18.0)));
    CHECK(global_grad_norm(params) == doctest::Approx(1.0));
    CHECK(b.grad()[0] == doctest::Approx(4.0 / std::sqrt(18.0)));
}

TEST_CASE("checkpoint round trip is bit-exact, including optimizer state") {
    const fs::path dir = scratch_dir("ckpt");
    ScanpathModel model(tiny_model_config(), 5);
    AdamState adam = AdamState::zeros_like(model.parameters());
    Rng rng(1);
    for (auto& buf : adam.m)
        for (double& x : buf) x = uniform01(rng) - 0.5;
    for (auto& buf : adam.v)
        for (double& x : buf) x = uniform01(rng) * 1e-7;
    adam.step = 77;
    // Include awkward values: subnormal, negative zero.
    Tensor first = model.parameters().items()[0].second;
    first.mutable_data()[0] = 4.9e-324;
    first.mutable_data()[1] = -0.0;

    save_checkpoint(dir / "ck", model, {3, 77, 123, 0.01}, &adam);
    CHECK(fs::exists(dir / "ck.bin"));
    CHECK(fs::exists(dir / "ck.json"));
    CHECK(!fs::exists(dir / "ck.json.tmp"));

    for (const fs::path& p : {dir / "ck", dir / "ck.json", dir / "ck.bin"}) {
        LoadedCheckpoint back = load_checkpoint(p);
        CHECK(back.info.epoch == 3);
        CHECK(back.info.step == 77);
        CHECK(back.info.seed == 123);
        CHECK(back.info.weight_decay == 0.01);
        REQUIRE(back.has_adam);
        CHECK(back.adam.step == 77);
        const auto& x = model.parameters().items();
        const auto& y = back.model.parameters().items();
        REQUIRE(x.size() == y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(x[i].first == y[i].first);
            CHECK(std::memcmp(x[i].second.data().data(), y[i].second.data().data(), 8 * x[i].second.numel()) == 0);
            CHECK(std::memcmp(adam.m[i].data(), back.adam.m[i].data(), 8 * adam.m[i].size()) == 0);
            CHECK(std::memcmp(adam.v[i].data(), back.adam.v[i].data(), 8 * adam.v[i].size()) == 0);
        }
    }

    const json manifest = json::parse(read_text(dir / "ck.json"));
    CHECK(manifest["format_version"] == 1);
    CHECK(manifest["metadata"]["init"] == "xavier_uniform");
    CHECK(manifest["metadata"]["weight_decay"] == 0.01);
    CHECK(manifest["blocks"][0]["offset"] == 0);
    CHECK(fs::file_size(dir / "ck.bin") == 8 * 3 * model.parameters().count());
}

TEST_CASE("damaged checkpoints are rejected") {
    const fs::path dir = scratch_dir("ckpt_bad");
    ScanpathModel model(tiny_model_config(), 5);
    save_checkpoint(dir / "ck", model, {});
    CHECK_FALSE(load_checkpoint(dir / "ck").has_adam);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing"), BadCheckpoint);

    fs::copy_file(dir / "ck.bin", dir / "flip.bin");
    {
        std::fstream f(dir / "flip.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(100);
        f.put('\x7f');
    }
    json m = json::parse(read_text(dir / "ck.json"));
    m["data_file"] = "flip.bin";
    write_text_atomically(dir / "flip.json", m.dump());
    CHECK_THROWS_AS(load_checkpoint(dir / "flip"), BadCheckpoint);

    m = json::parse(read_text(dir / "ck.json"));
    m["format_version"] = 2;
    write_text_atomically(dir / "v2.json", m.dump());
    CHECK_THROWS_AS(load_checkpoint(dir / "v2"), BadCheckpoint);

    m = json::parse(read_text(dir / "ck.json"));
    m["blocks"][0]["shape"] = {1, 2};
    write_text_atomically(dir / "shape.json", m.dump());
    CHECK_THROWS_AS(load_checkpoint(dir / "shape"), BadCheckpoint);

    write_text_atomically(dir / "junk.json", "{ nope");
    CHECK_THROWS_AS(load_checkpoint(dir / "junk"), BadCheckpoint);
}

TEST_CASE("run config parsing") {
    const RunConfig defaults;
    const json snapshot = to_json(defaults);
    CHECK(to_json(run_config_from_json(snapshot)) == snapshot);
    CHECK(to_json(run_config_from_json(json::object())) == snapshot);

    const RunConfig c = run_config_from_json(json::parse(R"({
        "seed": 9,
        "model": {"encoder": {"layers": 2}, "extractor": {"variant": "plain2d"}},
        "train": {"lr": 0.001},
        "metrics": {"dtw_mode": "equirect-pixels", "lev_bins": [8, 16]}
    })"));
    CHECK(c.seed == 9);
    CHECK(c.train.seed == 9);
    CHECK(c.model.encoder.layers == 2);
    CHECK(c.model.extractor.variant == ExtractorVariant::kPlain2d);
    CHECK(c.train.lr == 0.001);
    CHECK(c.metrics.dtw.mode == DtwMode::kEquirectPixels);
    CHECK(c.metrics.lev_rows == 8);
    CHECK(c.metrics.lev_cols == 16);
    CHECK(c.train.batch == 18);

    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"modle": {}})")), InvalidConfig);
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"train": {"lr": "fast"}})")), InvalidConfig);
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"train": {"batch": -1}})")), InvalidConfig);
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"model": {"mdn": {"k": 3}}})")), InvalidConfig);
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"metrics": {"lev_bins": [1, 2, 3]}})")), InvalidConfig);
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"metrics": {"dtw_mode": "manhattan"}})")), InvalidConfig);

    RunConfig bad;
    bad.train.warmup_epochs = 60;
    CHECK_THROWS_AS(validate(bad), InvalidConfig);
    bad = RunConfig{};
    bad.train.lr = 0.0;
    CHECK_THROWS_AS(validate(bad), InvalidConfig);
    CHECK_NOTHROW(validate(RunConfig{}));

    const fs::path dir = scratch_dir("cfg");
    write_text_atomically(dir / "c.json", "{\"threads\": 2,}");
    CHECK_THROWS_AS(load_run_config(dir / "c.json"), InvalidConfig);
    CHECK_THROWS_AS(load_run_config(dir / "absent.json"), InvalidConfig);
}

TEST_CASE("training data: resampling, rotations and the held-out split") {
    const DatasetManifest ds = load_dataset(kToy);
    TrainConfig cfg = quick_train();
    auto [train_set, val] = build_training_data(ds, tiny_model_config(), cfg);
    CHECK(train_set.images.size() == 12);
    CHECK(train_set.samples.size() == 18);
    CHECK(val.empty());
    for (const auto& s : train_set.samples) CHECK(s.path.size() == 4);
    CHECK(train_set.image_ids[5] == "alpha");
    CHECK(train_set.image_ids[0] == "alpha@1");

    cfg.rotation_steps = 0;
    cfg.validation_images = 1;
    auto [t2, v2] = build_training_data(ds, tiny_model_config(), cfg);
    CHECK(t2.images.size() == 1);
    CHECK(t2.samples.size() == 2);
    REQUIRE(v2.images.size() == 1);
    CHECK(v2.image_ids[0] == "beta");
    CHECK(v2.paths[0].size() == 1);

    cfg.validation_images = 2;
    CHECK_THROWS_AS(build_training_data(ds, tiny_model_config(), cfg), InvalidConfig);
    ModelConfig short_decoder = tiny_model_config();
    short_decoder.decoder.max_length = 3;
    cfg.validation_images = 0;
    CHECK_THROWS_AS(build_training_data(ds, short_decoder, cfg), SequenceTooLong);
}

TEST_CASE("epoch order is a seeded permutation") {
    const auto a = epoch_order(50, 3, 0);
    CHECK(a == epoch_order(50, 3, 0));
    CHECK(a != epoch_order(50, 3, 1));
    CHECK(a != epoch_order(50, 4, 0));
    auto sorted = a;
    std::ranges::sort(sorted);
    for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("training is deterministic and resumes exactly") {
    const DatasetManifest ds = load_dataset(kToy);
    ModelConfig mc = tiny_model_config();
    mc.encoder.dropout = 0.1;
    mc.decoder.dropout = 0.1;
    TrainConfig cfg = quick_train();
    cfg.validation_images = 1;
    cfg.validation_samples = 2;
    auto [data, val] = build_training_data(ds, mc, cfg);  // 12 samples, 3 steps per epoch

    const fs::path full = scratch_dir("train_full");
    ScanpathModel m1(mc, 1);
    const TrainResult r1 = train(m1, data, val, cfg, {.out_dir = full});
    REQUIRE(r1.losses.size() == 12);
    CHECK(r1.epochs_completed == 4);
    CHECK(r1.validation.size() == 4);
    for (const auto& r : r1.losses) CHECK(std::isfinite(r.loss));
    CHECK(r1.losses[0].lr == doctest::Approx(1e-2));
    CHECK(r1.losses.back().lr == doctest::Approx(5e-3));
    CHECK(fs::exists(full / "checkpoints" / "epoch_0001.json"));
    CHECK(fs::exists(full / "checkpoints" / "epoch_0004.bin"));
    CHECK(fs::exists(full / "model.json"));
    CHECK(fs::exists(full / "validation.csv"));
    const std::string log1 = read_text(full / "loss.csv");
    CHECK(parse_loss_csv(log1).size() == 12);

    const fs::path again = scratch_dir("train_again");
    ScanpathModel m2(mc, 1);
    train(m2, data, val, cfg, {.out_dir = again});
    CHECK(read_text(again / "loss.csv") == log1);
    CHECK(read_text(again / "model.json") == read_text(full / "model.json"));

    // Stop mid-epoch (after 5 steps), then resume from the saved model.
    const fs::path part = scratch_dir("train_part");
    ScanpathModel m3(mc, 1);
    const TrainResult r3 = train(m3, data, val, cfg, {.out_dir = part, .max_steps = 5});
    CHECK(r3.steps == 5);
    ScanpathModel m4(mc, 999);
    const TrainResult r4 = train(m4, data, val, cfg, {.out_dir = part, .resume = part / "model"});
    CHECK(r4.steps == 12);
    CHECK(read_text(part / "loss.csv") == log1);
    const auto& pa = m1.parameters().items();
    const auto& pb = m4.parameters().items();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(std::ranges::equal(pa[i].second.data(), pb[i].second.data()));

    // Resume from an epoch checkpoint as well.
    const fs::path from_epoch = scratch_dir("train_epoch");
    fs::copy_file(full / "loss.csv", from_epoch / "loss.csv");
    ScanpathModel m5(mc, 0);
    train(m5, data, val, cfg, {.out_dir = from_epoch, .resume = full / "checkpoints" / "epoch_0002"});
    CHECK(read_text(from_epoch / "loss.csv") == log1);
}

TEST_CASE("non-finite loss aborts training") {
    const DatasetManifest ds = load_dataset(kToy);
    TrainConfig cfg = quick_train();
    cfg.rotation_steps = 0;
    auto [data, val] = build_training_data(ds, tiny_model_config(), cfg);
    ScanpathModel model(tiny_model_config(), 1);
    Tensor w = model.parameters().items().back().second;
    w.mutable_data()[0] = std::nan("");
    CHECK_THROWS_AS(train(model, data, val, cfg), NumericalFailure);
    CHECK(Tape::current().size() == 0);
}

TEST_CASE("resume rejects a checkpoint from another architecture") {
    const fs::path dir = scratch_dir("train_mismatch");
    ModelConfig other = tiny_model_config();
    other.mdn.components = 3;
    save_checkpoint(dir / "ck", ScanpathModel(other, 0), {});
    const DatasetManifest ds = load_dataset(kToy);
    auto [data, val] = build_training_data(ds, tiny_model_config(), quick_train());
    ScanpathModel model(tiny_model_config(), 0);
    CHECK_THROWS_AS(train(model, data, val, quick_train(), {.resume = dir / "ck"}), BadCheckpoint);
}

TEST_CASE("single-sample overfit: moving-average loss falls monotonically by two nats") {
    const ModelConfig mc = tiny_model_config();
    TrainingSet data;
    data.image_ids = {"synthetic"};
    EquirectImage img(mc.extractor.height, mc.extractor.width);
    Rng rng(81);
    for (double& v : img.rgb) v = uniform01(rng);
    data.images = {img};
    Scanpath truth;
    for (int i = 0; i < 8; ++i)
        truth.push_back(latlon_to_unit3({deg_to_rad(40.0 * std::sin(i)), deg_to_rad(-150.0 + 40.0 * i)}));
    for (int i = 0; i < 5; ++i) data.samples.push_back({0, truth});

    TrainConfig cfg;
    cfg.batch = 5;
    cfg.lr = 1e-3;
    cfg.warmup_epochs = 10;
    cfg.halve_every = 1000;
    cfg.grad_clip = 1.0;
    cfg.total_epochs = 500;
    cfg.weight_decay = 0.0;
    cfg.rotation_steps = 0;
    cfg.seed = 82;
    ScanpathModel model(mc, 83);
    const TrainResult r = train(model, data, ValidationSet{}, cfg);
    REQUIRE(r.losses.size() == 500);

    std::vector<double> ma;
    for (std::size_t end = 50; end <= r.losses.size(); end += 50) {
        double s = 0.0;
        for (std::size_t i = end - 50; i < end; ++i) s += r.losses[i].loss;
        ma.push_back(s / 50.0);
    }
    std::string trace;
    for (double v : ma) trace += std::to_string(v) + " ";
    MESSAGE("first loss ", r.losses.front().loss, ", moving averages ", trace);
    for (std::size_t i = 1; i < ma.size(); ++i) CHECK(ma[i] < ma[i - 1]);
    CHECK(ma.back() <= r.losses.front().loss - 2.0);
}
