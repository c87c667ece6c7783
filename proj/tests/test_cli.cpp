#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_helpers.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("QSELD_CLI");
    REQUIRE_MESSAGE(p != nullptr, "QSELD_CLI must point at the qseld binary");
    return p;
}

struct RunResult {
    int status = -1;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    RunResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe) != nullptr) res.output += buf.data();
    const int rc = pclose(pipe);
    res.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return res;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Small dataset + 2-epoch run shared by the eval/predict cases.
struct Workspace {
    fs::path root = qseld::test::scratch_dir("cli");
    fs::path ds() const { return root / "ds"; }
    fs::path run() const { return root / "run"; }

    std::string synth_args() const {
        return "synth --out " + ds().string() +
               " --seed 5 --set n_clips=6 --set clip_seconds=1.0 --set min_events=1";
    }
    std::string train_args() const {
        return "train --dataset " + ds().string() + " --out " + run().string() +
               " --seed 5 --set epochs=2 --set batch_size=8";
    }
};

}  // namespace

TEST_CASE("synth writes a dataset and is deterministic under a fixed seed") {
    Workspace ws;
    CHECK(run(ws.synth_args()).status == 0);
    CHECK(fs::exists(ws.ds() / "meta.json"));
    CHECK(fs::exists(ws.ds() / "clips" / "clip_000.wav"));
    CHECK(fs::exists(ws.ds() / "labels" / "clip_000.csv"));

    const fs::path second = ws.root / "ds2";
    RunResult redo = run("synth --out " + second.string() +
                         " --seed 5 --set n_clips=6 --set clip_seconds=1.0 --set min_events=1");
    CHECK(redo.status == 0);
    CHECK(slurp(ws.ds() / "clips" / "clip_003.wav") == slurp(second / "clips" / "clip_003.wav"));
    CHECK(slurp(ws.ds() / "labels" / "clip_003.csv") == slurp(second / "labels" / "clip_003.csv"));
    fs::remove_all(ws.root);
}

TEST_CASE("invalid overlap is a usage error with nonzero exit") {
    Workspace ws;
    RunResult res = run("synth --out " + (ws.root / "bad").string() + " --set overlap=0");
    CHECK(res.status != 0);
    CHECK(res.output.find("overlap") != std::string::npos);
    fs::remove_all(ws.root);
}

TEST_CASE("unknown config keys are rejected") {
    Workspace ws;
    RunResult res = run("synth --out " + (ws.root / "bad").string() + " --set not_a_key=1");
    CHECK(res.status == 2);
    CHECK(res.output.find("not_a_key") != std::string::npos);
    fs::remove_all(ws.root);
}

TEST_CASE("train on a missing dataset path exits nonzero with a message") {
    RunResult res = run("train --dataset /nonexistent/nowhere --out /tmp/qseld_never");
    CHECK(res.status != 0);
    CHECK(res.output.find("meta.json") != std::string::npos);
}

TEST_CASE("train writes checkpoint, log and resolved config; reruns are byte-identical") {
    Workspace ws;
    REQUIRE(run(ws.synth_args()).status == 0);
    REQUIRE(run(ws.train_args()).status == 0);
    CHECK(fs::exists(ws.run() / "checkpoint.qseld"));
    CHECK(fs::exists(ws.run() / "train_log.csv"));
    CHECK(fs::exists(ws.run() / "resolved_config.json"));

    const fs::path run2 = ws.root / "run2";
    RunResult redo = run("train --dataset " + ws.ds().string() + " --out " + run2.string() +
                         " --seed 5 --set epochs=2 --set batch_size=8");
    REQUIRE(redo.status == 0);
    CHECK(slurp(ws.run() / "checkpoint.qseld") == slurp(run2 / "checkpoint.qseld"));
    CHECK(slurp(ws.run() / "train_log.csv") == slurp(run2 / "train_log.csv"));

    SUBCASE("eval emits the metric report and a 7-column CSV") {
        const fs::path csv = ws.root / "report.csv";
        RunResult ev = run("eval --checkpoint " + (ws.run() / "checkpoint.qseld").string() +
                           " --dataset " + ws.ds().string() + " --csv " + csv.string());
        CHECK(ev.status == 0);
        for (const char* key : {"ER ", "F ", "DOA_err ", "K ", "S_SED ", "S_DOA ", "S_SELD "}) {
            CHECK(ev.output.find(key) != std::string::npos);
        }
        const std::string rows = slurp(csv);
        CHECK(rows.find("ER,F,DOA_err,K,S_SED,S_DOA,S_SELD") == 0);
        CHECK(std::count(rows.begin(), rows.begin() + static_cast<long>(rows.find('\n')),
                         ',') == 6);
    }

    SUBCASE("predict writes one CSV per clip with the documented header") {
        const fs::path pred = ws.root / "pred";
        RunResult pr = run("predict --checkpoint " + (ws.run() / "checkpoint.qseld").string() +
                           " --dataset " + ws.ds().string() + " --out " + pred.string());
        CHECK(pr.status == 0);
        bool any = false;
        for (const auto& e : fs::directory_iterator(pred)) {
            any = true;
            const std::string text = slurp(e.path());
            CHECK(text.rfind("frame,class,prob,active,x,y,z", 0) == 0);
        }
        CHECK(any);
    }

    SUBCASE("checkpoint/dataset window-length mismatch fails before inference") {
        const fs::path other = ws.root / "ds_m128";
        REQUIRE(run("synth --out " + other.string() +
                    " --seed 5 --set n_clips=4 --set clip_seconds=1.0 --set min_events=1"
                    " --set window_length=128")
                    .status == 0);
        RunResult ev = run("eval --checkpoint " + (ws.run() / "checkpoint.qseld").string() +
                           " --dataset " + other.string());
        CHECK(ev.status != 0);
        CHECK(ev.output.find("window length") != std::string::npos);
    }

    fs::remove_all(ws.root);
}

TEST_CASE("eval --oracle scores the ground truth at S_SELD = 0") {
    Workspace ws;
    REQUIRE(run(ws.synth_args()).status == 0);
    RunResult res = run("eval --oracle --dataset " + ws.ds().string() + " --split all");
    CHECK(res.status == 0);
    CHECK(res.output.find("S_SELD 0.000000") != std::string::npos);
    fs::remove_all(ws.root);
}

TEST_CASE("gradcheck: single layer scope, success exit code") {
    RunResult res = run("gradcheck --layer qdense --seed 3");
    CHECK(res.status == 0);
    CHECK(res.output.find("qdense") != std::string::npos);
    CHECK(res.output.find("ok") != std::string::npos);
}

TEST_CASE("gradcheck: stock run covers every scope and exits 0") {
    RunResult res = run("gradcheck");
    CHECK(res.status == 0);
    for (const char* scope : {"qconv2d", "qdense", "bigru", "model"}) {
        CHECK(res.output.find(scope) != std::string::npos);
    }
    CHECK(res.output.find("FAIL") == std::string::npos);
}

TEST_CASE("f32 precision trains and evaluates end to end") {
    Workspace ws;
    REQUIRE(run(ws.synth_args()).status == 0);
    RunResult tr = run("train --dataset " + ws.ds().string() + " --out " +
                       (ws.root / "run32").string() +
                       " --seed 5 --set epochs=1 --set batch_size=8 --set precision=\"f32\"");
    CHECK(tr.status == 0);
    RunResult ev = run("eval --checkpoint " + (ws.root / "run32" / "checkpoint.qseld").string() +
                       " --dataset " + ws.ds().string());
    CHECK(ev.status == 0);
    CHECK(ev.output.find("S_SELD") != std::string::npos);
    fs::remove_all(ws.root);
}

TEST_CASE("--threads caps synthesis workers without changing the output") {
    Workspace ws;
    REQUIRE(run(ws.synth_args()).status == 0);
    RunResult res = run("synth --out " + (ws.root / "ds_mt").string() +
                        " --seed 5 --set n_clips=6 --set clip_seconds=1.0 --set min_events=1"
                        " --threads 4");
    CHECK(res.status == 0);
    CHECK(slurp(ws.ds() / "clips" / "clip_004.wav") ==
          slurp(ws.root / "ds_mt" / "clips" / "clip_004.wav"));
    fs::remove_all(ws.root);
}

TEST_CASE("gradcheck refuses to run in f32 mode") {
    RunResult res = run("gradcheck --layer qdense --set precision=\"f32\"");
    CHECK(res.status == 2);
    CHECK(res.output.find("f64") != std::string::npos);
}

TEST_CASE("QSELD_SEED environment fallback feeds the seed") {
    Workspace ws;
    const std::string base = "synth --out %OUT% --set n_clips=4 --set clip_seconds=1.0 "
                             "--set min_events=1";
    auto with_out = [&](const std::string& dir) {
        std::string s = base;
        s.replace(s.find("%OUT%"), 5, dir);
        return s;
    };
    const std::string env_cmd = "QSELD_SEED=99 " + cli_path() + " " +
                                with_out((ws.root / "env_ds").string()) + " >/dev/null 2>&1";
    REQUIRE(std::system(env_cmd.c_str()) == 0);
    REQUIRE(run(with_out((ws.root / "flag_ds").string()) + " --seed 99").status == 0);
    CHECK(slurp(ws.root / "env_ds" / "clips" / "clip_000.wav") ==
          slurp(ws.root / "flag_ds" / "clips" / "clip_000.wav"));
    fs::remove_all(ws.root);
}

TEST_CASE("train --baseline real trains the parameter-matched real model") {
    Workspace ws;
    REQUIRE(run(ws.synth_args()).status == 0);
    RunResult tr = run("train --dataset " + ws.ds().string() + " --out " +
                       (ws.root / "run_real").string() +
                       " --seed 5 --set epochs=1 --set batch_size=8 --baseline real");
    CHECK(tr.status == 0);
    CHECK(tr.output.find("model: real") != std::string::npos);
    RunResult ev = run("eval --checkpoint " + (ws.root / "run_real" / "checkpoint.qseld").string() +
                       " --dataset " + ws.ds().string());
    CHECK(ev.status == 0);
    CHECK(ev.output.find("S_SELD") != std::string::npos);
    fs::remove_all(ws.root);
}

TEST_CASE("train without --out creates a runs/<timestamp>-<tag> directory") {
    Workspace ws;
    REQUIRE(run(ws.synth_args()).status == 0);
    const std::string cmd = "cd " + ws.root.string() + " && " + cli_path() + " train --dataset " +
                            ws.ds().string() +
                            " --seed 5 --set epochs=1 --set batch_size=8 >/dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    bool found = false;
    for (const auto& e : fs::directory_iterator(ws.root / "runs")) {
        if (fs::exists(e.path() / "checkpoint.qseld")) found = true;
    }
    CHECK(found);
    fs::remove_all(ws.root);
}
