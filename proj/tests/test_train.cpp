#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qseld/train.hpp"
#include "test_helpers.hpp"

using namespace qseld;
namespace fs = std::filesystem;

namespace {

SynthConfig small_dataset_config(std::uint64_t seed) {
    SynthConfig c;
    c.n_clips = 6;
    c.clip_seconds = 1.0;
    c.seed = seed;
    c.min_events = 1;
    c.max_events = 2;
    return c;
}

TrainConfig quick_train_config() {
    TrainConfig t;
    t.epochs = 3;
    t.batch_size = 8;
    t.metric_segment_frames = 250;
    t.seed = 5;
    return t;
}

std::string checkpoint_bytes(const CheckpointFile& ck) {
    const fs::path p = test::scratch_dir("ckbytes") / "ck.qseld";
    save_checkpoint_file(p.string(), ck);
    std::ifstream in(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    fs::remove_all(p.parent_path());
    return bytes;
}

}  // namespace

TEST_CASE("zero epochs returns the initialized checkpoint and an empty log") {
    Dataset ds = synth_dataset(small_dataset_config(3));
    QseldConfig cfg = QseldConfig::desk();
    SegmentSet train_set = build_segments(ds, "train", cfg.window_length, cfg.frames);
    SegmentSet val_set = build_segments(ds, "test", cfg.window_length, cfg.frames);

    QseldModel<double> model(cfg);
    model.init(5);
    TrainConfig tc = quick_train_config();
    tc.epochs = 0;
    TrainResult result = train_model(model, train_set, val_set, tc, "qseld");
    CHECK(result.log.empty());
    CHECK(result.best_epoch == 0);
    CHECK(result.best_checkpoint.tensors.size() == model.params().size() + model.state().size());
}

TEST_CASE("training is deterministic: same seed, bitwise-identical checkpoints and logs") {
    Dataset ds = synth_dataset(small_dataset_config(7));
    QseldConfig cfg = QseldConfig::desk();
    SegmentSet train_set = build_segments(ds, "train", cfg.window_length, cfg.frames);
    SegmentSet val_set = build_segments(ds, "test", cfg.window_length, cfg.frames);
    TrainConfig tc = quick_train_config();

    auto run = [&]() {
        QseldModel<double> model(cfg);
        model.init(tc.seed);
        return train_model(model, train_set, val_set, tc, "qseld");
    };
    TrainResult a = run();
    TrainResult b = run();
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].train_loss == b.log[i].train_loss);
        CHECK(a.log[i].val_loss == b.log[i].val_loss);
        CHECK(a.log[i].val.s_seld == b.log[i].val.s_seld);
    }
    CHECK(checkpoint_bytes(a.best_checkpoint) == checkpoint_bytes(b.best_checkpoint));
}

TEST_CASE("training reduces the loss markedly on a tiny overfit set") {
    SynthConfig sc = small_dataset_config(11);
    sc.n_clips = 2;
    sc.test_fraction = 0.0;
    Dataset ds = synth_dataset(sc);
    QseldConfig cfg = QseldConfig::desk();
    SegmentSet train_set = build_segments(ds, "train", cfg.window_length, cfg.frames);

    QseldModel<double> model(cfg);
    model.init(13);
    TrainConfig tc = quick_train_config();
    tc.epochs = 60;
    TrainResult result = train_model(model, train_set, train_set, tc, "qseld");
    REQUIRE(result.log.size() == 60);
    const double first = result.log.front().train_loss;
    const double last = result.log.back().train_loss;
    CHECK(last < 0.5 * first);
}

TEST_CASE("lambda = 0 leaves the DOA head untouched by training") {
    Dataset ds = synth_dataset(small_dataset_config(17));
    QseldConfig cfg = QseldConfig::desk();
    SegmentSet train_set = build_segments(ds, "train", cfg.window_length, cfg.frames);

    QseldModel<double> model(cfg);
    model.init(19);
    model.set_feature_stats(compute_feature_stats(train_set));

    Tensor<double> feats({4, cfg.frames, cfg.bins(), 8});
    Tensor<double> act({4, cfg.frames, cfg.num_classes});
    Tensor<double> doa({4, cfg.frames, 3 * cfg.num_classes});
    for (std::size_t i = 0; i < feats.numel(); ++i) feats[i] = train_set.features[i];
    for (std::size_t i = 0; i < act.numel(); ++i) act[i] = train_set.activity[i];
    act[0] = 1.0;
    for (std::size_t i = 0; i < doa.numel(); ++i) doa[i] = train_set.doa[i];

    model.zero_grad();
    Predictions<double> p = model.forward(feats, true);
    CombinedLoss<double> loss = combined_loss(p.sed, act, p.doa, doa, 0.0);
    model.backward(loss.grad_sed, loss.grad_doa);

    double max_doa_grad = 0.0;
    for (const auto& pr : model.params()) {
        if (pr.name.rfind("doa_", 0) != 0) continue;
        for (std::size_t i = 0; i < pr.grad->numel(); ++i) {
            max_doa_grad = std::max(max_doa_grad, std::abs((*pr.grad)[i]));
        }
    }
    CHECK(max_doa_grad == 0.0);
}

TEST_CASE("divergence stops training with a diagnostic and keeps a checkpoint") {
    Dataset ds = synth_dataset(small_dataset_config(23));
    QseldConfig cfg = QseldConfig::desk();
    SegmentSet train_set = build_segments(ds, "train", cfg.window_length, cfg.frames);
    SegmentSet val_set = build_segments(ds, "test", cfg.window_length, cfg.frames);
    // corrupted input (a NaN sample survives any normalization) turns the
    // loss non-finite on the first batch that touches it
    train_set.features[train_set.features.numel() / 2] =
        std::numeric_limits<double>::quiet_NaN();

    QseldModel<double> model(cfg);
    model.init(29);
    TrainConfig tc = quick_train_config();
    tc.epochs = 30;
    TrainResult result = train_model(model, train_set, val_set, tc, "qseld");
    CHECK(result.diverged);
    CHECK(result.divergence_note.find("non-finite") != std::string::npos);
    CHECK(!result.best_checkpoint.tensors.empty());
    CHECK(result.log.size() < 30);
}

TEST_CASE("batch size below 2 is rejected up front") {
    Dataset ds = synth_dataset(small_dataset_config(31));
    QseldConfig cfg = QseldConfig::desk();
    SegmentSet set = build_segments(ds, "train", cfg.window_length, cfg.frames);
    QseldModel<double> model(cfg);
    model.init(31);
    TrainConfig tc = quick_train_config();
    tc.batch_size = 1;
    CHECK_THROWS_AS(train_model(model, set, set, tc, "qseld"), std::invalid_argument);
}

TEST_CASE("build_segments rejects a window-length mismatch before any work") {
    Dataset ds = synth_dataset(small_dataset_config(37));
    CHECK_THROWS_WITH_AS(build_segments(ds, "train", 128, 8), doctest::Contains("window length"),
                         std::invalid_argument);
}
