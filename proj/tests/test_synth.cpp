#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qseld/synth.hpp"
#include "qseld/wav.hpp"
#include "test_helpers.hpp"

using namespace qseld;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool dirs_byte_identical(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
    }
    for (const auto& r : rel) {
        if (!fs::exists(b / r)) return false;
        if (slurp(a / r) != slurp(b / r)) return false;
    }
    return true;
}

SynthConfig tiny_config(std::uint64_t seed, int overlap = 1) {
    SynthConfig c;
    c.n_clips = 8;
    c.seed = seed;
    c.max_overlap = overlap;
    return c;
}

}  // namespace

TEST_CASE("b-format gains: front, zenith and the 45/45 case") {
    const BFormatGains front = bformat_gains(0.0, 0.0);
    CHECK(front.w == 1.0);
    CHECK(front.x == doctest::Approx(1.0));
    CHECK(front.y == doctest::Approx(0.0));
    CHECK(front.z == doctest::Approx(0.0));

    const BFormatGains zenith = bformat_gains(0.0, kPi / 2.0);
    CHECK(zenith.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(zenith.y == doctest::Approx(0.0));
    CHECK(zenith.z == doctest::Approx(1.0));

    const BFormatGains diag = bformat_gains(kPi / 4.0, kPi / 4.0);
    CHECK(diag.x == doctest::Approx(0.5));
    CHECK(diag.y == doctest::Approx(0.5));
    CHECK(diag.z == doctest::Approx(std::sqrt(2.0) / 2.0));
}

TEST_CASE("encoded single source: X^2+Y^2+Z^2 energy equals W^2 energy") {
    Rng rng(3);
    std::vector<double> mono(4000);
    for (double& v : mono) v = rng.normal();
    const DoaGrid grid = default_doa_grid();
    for (int it = 0; it < 12; ++it) {
        const double az = grid.azimuths[rng.below(grid.azimuths.size())];
        const double el = grid.elevations[rng.below(grid.elevations.size())];
        AudioClip clip = encode_bformat(mono, az, el, 8000.0);
        double ew = 0.0, exyz = 0.0;
        for (std::size_t i = 0; i < mono.size(); ++i) {
            ew += clip.channels[0][i] * clip.channels[0][i];
            for (int c = 1; c < 4; ++c) exyz += clip.channels[c][i] * clip.channels[c][i];
        }
        CHECK(std::abs(exyz - ew) <= 1e-9 * ew);
    }
}

TEST_CASE("O=1 dataset never has two classes active in one frame") {
    Dataset ds = synth_dataset(tiny_config(11, 1));
    for (const auto& clip : ds.clips) {
        for (std::size_t t = 0; t < clip.labels.frames(); ++t) {
            int actives = 0;
            for (std::size_t c = 0; c < clip.labels.num_classes(); ++c) {
                actives += clip.labels.activity.at(t, c) > 0.5 ? 1 : 0;
            }
            CHECK(actives <= 1);
        }
    }
}

TEST_CASE("O=2 dataset reaches 2 simultaneous classes but never 3") {
    SynthConfig cfg = tiny_config(13, 2);
    cfg.n_clips = 12;
    cfg.min_events = 3;
    cfg.max_events = 5;
    Dataset ds = synth_dataset(cfg);
    int max_actives = 0;
    for (const auto& clip : ds.clips) {
        for (std::size_t t = 0; t < clip.labels.frames(); ++t) {
            int actives = 0;
            for (std::size_t c = 0; c < clip.labels.num_classes(); ++c) {
                actives += clip.labels.activity.at(t, c) > 0.5 ? 1 : 0;
            }
            max_actives = std::max(max_actives, actives);
        }
    }
    CHECK(max_actives == 2);
}

TEST_CASE("same seed gives byte-identical dataset directories") {
    const fs::path dir_a = test::scratch_dir("synth_a");
    const fs::path dir_b = test::scratch_dir("synth_b");
    write_dataset(synth_dataset(tiny_config(17)), dir_a.string());
    write_dataset(synth_dataset(tiny_config(17)), dir_b.string());
    CHECK(dirs_byte_identical(dir_a, dir_b));

    const fs::path dir_c = test::scratch_dir("synth_c");
    write_dataset(synth_dataset(tiny_config(18)), dir_c.string());
    CHECK(!dirs_byte_identical(dir_a, dir_c));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    fs::remove_all(dir_c);
}

TEST_CASE("parallel generation matches single-threaded output") {
    SynthConfig cfg = tiny_config(23);
    Dataset seq = synth_dataset(cfg);
    cfg.threads = 4;
    Dataset par = synth_dataset(cfg);
    REQUIRE(seq.clips.size() == par.clips.size());
    for (std::size_t i = 0; i < seq.clips.size(); ++i) {
        CHECK(seq.clips[i].audio.channels == par.clips[i].audio.channels);
        CHECK(test::max_abs_diff(seq.clips[i].labels.activity, par.clips[i].labels.activity) ==
              0.0);
    }
}

TEST_CASE("grid decode recovers the ground-truth direction of single-event clips") {
    Rng rng(29);
    const DoaGrid grid = default_doa_grid();
    std::vector<double> mono(4000);
    for (double& v : mono) v = rng.normal();
    int total = 0, correct = 0;
    for (std::size_t ai = 0; ai < grid.azimuths.size(); ai += 5) {
        for (std::size_t ei = 0; ei < grid.elevations.size(); ei += 3) {
            AudioClip clip =
                encode_bformat(mono, grid.azimuths[ai], grid.elevations[ei], 8000.0);
            const GridDirection got = decode_direction_grid(clip, grid);
            ++total;
            if (got.azimuth_index == ai && got.elevation_index == ei) ++correct;
        }
    }
    CHECK(total > 20);
    CHECK(correct == total);
}

TEST_CASE("round-trip: write_dataset then load_dataset reproduces labels exactly") {
    const fs::path dir = test::scratch_dir("roundtrip");
    Dataset ds = synth_dataset(tiny_config(31));
    write_dataset(ds, dir.string());
    Dataset back = load_dataset(dir.string());
    REQUIRE(back.clips.size() == ds.clips.size());
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        CHECK(back.clips[i].id == ds.clips[i].id);
        CHECK(back.clips[i].split == ds.clips[i].split);
        CHECK(test::max_abs_diff(back.clips[i].labels.activity, ds.clips[i].labels.activity) ==
              0.0);
        CHECK(test::max_abs_diff(back.clips[i].labels.doa, ds.clips[i].labels.doa) < 1e-11);
    }
    fs::remove_all(dir);
}

TEST_CASE("truncated audio file is reported with the file name") {
    const fs::path dir = test::scratch_dir("truncated");
    write_dataset(synth_dataset(tiny_config(37)), dir.string());
    const fs::path wav = dir / "clips" / "clip_000.wav";
    const std::string bytes = slurp(wav);
    std::ofstream out(wav, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("clip_000"),
                         std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("malformed label row is reported with file and line") {
    const fs::path dir = test::scratch_dir("badcsv");
    write_dataset(synth_dataset(tiny_config(41)), dir.string());
    const fs::path csv = dir / "labels" / "clip_001.csv";
    std::string text = slurp(csv);
    const std::size_t second_line = text.find('\n', text.find('\n') + 1);
    text.insert(second_line + 1, "1,0,not_a_number,0,0,0\n");
    std::ofstream(csv, std::ios::trunc) << text;
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("clip_001.csv:3"),
                         std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("label frame count inconsistent with audio and M is rejected") {
    const fs::path dir = test::scratch_dir("framecount");
    Dataset ds = synth_dataset(tiny_config(43));
    write_dataset(ds, dir.string());
    // shorten one wav so its frame count for the configured M changes
    const fs::path wav = dir / "clips" / "clip_002.wav";
    AudioClip clip = read_wav(wav.string());
    for (auto& ch : clip.channels) ch.resize(ch.size() / 2);
    write_wav(wav.string(), clip);
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("frames"),
                         std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("frames with no active class are silent below -60 dBFS") {
    Dataset ds = synth_dataset(tiny_config(47));
    const std::size_t M = ds.config.window_length;
    const std::size_t hop = M / 2;
    for (const auto& clip : ds.clips) {
        for (std::size_t t = 0; t < clip.labels.frames(); ++t) {
            bool any = false;
            for (std::size_t c = 0; c < clip.labels.num_classes(); ++c) {
                any = any || clip.labels.activity.at(t, c) > 0.5;
            }
            if (any) continue;
            double peak = 0.0;
            for (std::size_t ch = 0; ch < 4; ++ch) {
                for (std::size_t n = t * hop; n < t * hop + M; ++n) {
                    peak = std::max(peak, std::abs(clip.audio.channels[ch][n]));
                }
            }
            CHECK(peak < 1e-3);  // -60 dBFS
        }
    }
}

TEST_CASE("impossible packing raises an error") {
    SynthConfig cfg = tiny_config(53);
    cfg.min_events = 10;
    cfg.max_events = 10;
    cfg.min_event_seconds = 0.9;
    cfg.max_event_seconds = 0.9;  // 10 * 0.9 s cannot fit in 2 s with O=1
    CHECK_THROWS_WITH_AS(synth_dataset(cfg), doctest::Contains("packing"), std::runtime_error);
}

TEST_CASE("config validation") {
    SynthConfig cfg = tiny_config(59);
    cfg.max_overlap = 0;
    CHECK_THROWS_AS(synth_dataset(cfg), std::invalid_argument);
    cfg.max_overlap = 4;
    CHECK_THROWS_AS(synth_dataset(cfg), std::invalid_argument);
    cfg = tiny_config(59);
    cfg.n_clips = 0;
    CHECK_THROWS_AS(synth_dataset(cfg), std::invalid_argument);
}

TEST_CASE("wav reader accepts PCM16 in addition to float32") {
    const fs::path dir = test::scratch_dir("pcm16");
    const fs::path path = dir / "tone.wav";
    // hand-assembled 2-channel PCM16 file, 4 frames
    const unsigned char header[44] = {
        'R', 'I', 'F', 'F', 52,  0,   0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' ',
        16,  0,   0,   0,   1,   0,   2, 0, 0x40, 0x1F, 0, 0,  0,   0x7D, 0,  0,
        4,   0,   16,  0,   'd', 'a', 't', 'a', 16, 0, 0, 0};
    const std::int16_t samples[8] = {0, 16384, -16384, 32767, -32768, 8192, 0, -1};
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(samples), sizeof(samples));
    out.close();

    AudioClip clip = read_wav(path.string());
    CHECK(clip.num_channels() == 2);
    CHECK(clip.num_samples() == 4);
    CHECK(clip.sample_rate == 8000.0);
    CHECK(clip.channels[0][0] == 0.0);
    CHECK(clip.channels[1][0] == doctest::Approx(0.5));
    CHECK(clip.channels[0][1] == doctest::Approx(-0.5));
    CHECK(clip.channels[1][1] == doctest::Approx(32767.0 / 32768.0));
    CHECK(clip.channels[0][2] == doctest::Approx(-1.0));
    fs::remove_all(dir);
}
