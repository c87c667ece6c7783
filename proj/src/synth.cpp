#include "qseld/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "qseld/rng.hpp"
#include "qseld/wav.hpp"

namespace qseld {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

/// Deterministic per-class mono timbre over [0, n) samples, peak ~1.
std::vector<double> render_timbre(int class_id, std::size_t n, double sr, Rng& rng) {
    std::vector<double> s(n, 0.0);
    const int family = class_id % 3;
    const double nyq_guard = 0.45 * sr;
    if (family == 0) {
        // harmonic tone complex
        const double f0 = 200.0 + 40.0 * class_id;
        const double amps[3] = {1.0, 0.5, 0.25};
        for (int h = 0; h < 3; ++h) {
            const double f = f0 * (h + 1);
            if (f >= nyq_guard) continue;
            const double w = 2.0 * kPi * f / sr;
            for (std::size_t i = 0; i < n; ++i) s[i] += amps[h] * std::sin(w * i);
        }
        const double peak = 1.75;
        for (double& v : s) v /= peak;
    } else if (family == 1) {
        // linear chirp
        const double f_start = 700.0 + 120.0 * class_id;
        const double f_end = std::min(2.5 * f_start, nyq_guard);
        const double dur = static_cast<double>(n) / sr;
        const double k = (f_end - f_start) / dur;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / sr;
            s[i] = std::sin(2.0 * kPi * (f_start * t + 0.5 * k * t * t));
        }
    } else {
        // resonator-filtered noise
        const double fc = std::min(2600.0 + 150.0 * class_id, 0.4 * sr);
        const double r = 0.97;
        const double w = 2.0 * kPi * fc / sr;
        double y1 = 0.0, y2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = rng.uniform(-1.0, 1.0);
            const double y = x + 2.0 * r * std::cos(w) * y1 - r * r * y2;
            y2 = y1;
            y1 = y;
            s[i] = y;
        }
        double peak = 0.0;
        for (double v : s) peak = std::max(peak, std::abs(v));
        if (peak > 0.0) {
            for (double& v : s) v /= peak;
        }
    }
    // raised-cosine attack/release, exact zero at the edges
    const std::size_t ramp = std::min<std::size_t>(static_cast<std::size_t>(0.01 * sr),
                                                   n > 4 ? n / 4 : 1);
    for (std::size_t i = 0; i < ramp && i < n; ++i) {
        const double g = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i + 1) /
                                              static_cast<double>(ramp + 1));
        s[i] *= g;
        s[n - 1 - i] *= g;
    }
    return s;
}

struct Interval {
    double a, b;
    int class_id;
};

bool intervals_overlap(double a0, double b0, double a1, double b1) {
    return a0 < b1 && a1 < b0;
}

/// Max number of simultaneously active events if `candidate` is added.
int max_concurrency_with(const std::vector<Interval>& placed, const Interval& candidate) {
    std::vector<double> points{candidate.a};
    for (const auto& iv : placed) {
        if (intervals_overlap(iv.a, iv.b, candidate.a, candidate.b)) {
            if (iv.a > candidate.a) points.push_back(iv.a);
        }
    }
    int worst = 0;
    for (double p : points) {
        int count = 1;  // the candidate itself
        for (const auto& iv : placed) {
            if (iv.a <= p && p < iv.b) ++count;
        }
        worst = std::max(worst, count);
    }
    return worst;
}

DatasetClip generate_clip(const SynthConfig& cfg, std::size_t clip_index) {
    Rng rng(Rng::derive(cfg.seed, clip_index));
    const double sr = cfg.sample_rate;
    const std::size_t n_samples = static_cast<std::size_t>(std::llround(cfg.clip_seconds * sr));
    const DoaGrid grid = default_doa_grid();

    const double max_budget = cfg.clip_seconds * cfg.max_overlap;
    if (static_cast<double>(cfg.min_events) * cfg.min_event_seconds > max_budget) {
        throw std::runtime_error(
            "synth: impossible packing: " + std::to_string(cfg.min_events) + " events of >= " +
            fmt_double(cfg.min_event_seconds) + " s do not fit in " +
            fmt_double(cfg.clip_seconds) + " s with overlap " + std::to_string(cfg.max_overlap));
    }

    const std::size_t target =
        cfg.min_events + static_cast<std::size_t>(rng.below(cfg.max_events - cfg.min_events + 1));
    // Labels mark a frame active when the event intersects the frame's
    // analysis window, which reaches one window length back from the event
    // onset. Overlap constraints are therefore enforced on intervals
    // extended by that smear, so label concurrency never exceeds O.
    const double label_smear = static_cast<double>(cfg.window_length) / sr;
    std::vector<EventSpec> events;
    std::vector<Interval> placed;
    for (std::size_t k = 0; k < target; ++k) {
        bool ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            const double dur = rng.uniform(cfg.min_event_seconds, cfg.max_event_seconds);
            const double onset = rng.uniform(0.0, cfg.clip_seconds - dur);
            const int cls = static_cast<int>(rng.below(cfg.num_classes));
            Interval cand{onset - label_smear, onset + dur, cls};
            bool class_clash = false;
            for (const auto& iv : placed) {
                if (iv.class_id == cls && intervals_overlap(iv.a, iv.b, cand.a, cand.b)) {
                    class_clash = true;
                    break;
                }
            }
            if (class_clash) continue;
            if (max_concurrency_with(placed, cand) > cfg.max_overlap) continue;

            EventSpec ev;
            ev.class_id = cls;
            ev.onset = onset;
            ev.offset = onset + dur;
            ev.azimuth = grid.azimuths[rng.below(grid.azimuths.size())];
            ev.elevation = grid.elevations[rng.below(grid.elevations.size())];
            ev.amplitude = rng.uniform(0.3, 0.8);
            events.push_back(ev);
            placed.push_back(cand);
            ok = true;
        }
        if (!ok && events.size() < cfg.min_events) {
            throw std::runtime_error("synth: impossible packing: could not place event " +
                                     std::to_string(k + 1) + " of " + std::to_string(target) +
                                     " in clip " + std::to_string(clip_index));
        }
    }
    std::sort(events.begin(), events.end(),
              [](const EventSpec& l, const EventSpec& r) { return l.onset < r.onset; });

    DatasetClip clip;
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "clip_%03zu", clip_index);
        clip.id = buf;
    }
    clip.events = events;
    clip.audio.sample_rate = sr;
    clip.audio.channels.assign(4, std::vector<double>(n_samples, 0.0));

    for (const EventSpec& ev : events) {
        const std::size_t start = static_cast<std::size_t>(std::llround(ev.onset * sr));
        const std::size_t stop =
            std::min(n_samples, static_cast<std::size_t>(std::llround(ev.offset * sr)));
        if (stop <= start) continue;
        std::vector<double> mono = render_timbre(ev.class_id, stop - start, sr, rng);
        const BFormatGains g = bformat_gains(ev.azimuth, ev.elevation);
        for (std::size_t i = 0; i < mono.size(); ++i) {
            const double v = ev.amplitude * mono[i];
            clip.audio.channels[0][start + i] += v * g.w;
            clip.audio.channels[1][start + i] += v * g.x;
            clip.audio.channels[2][start + i] += v * g.y;
            clip.audio.channels[3][start + i] += v * g.z;
        }
    }

    // Frame labels at the feature frame rate: a frame is active for a class
    // iff the event interval intersects the frame's analysis window.
    const std::size_t M = cfg.window_length;
    const std::size_t hop = M / 2;
    const std::size_t frames = stft_frame_count(n_samples, M);
    clip.labels.activity = Tensor<double>({frames, cfg.num_classes});
    clip.labels.doa = Tensor<double>({frames, cfg.num_classes, 3});
    for (std::size_t t = 0; t < frames; ++t) {
        const double win_a = static_cast<double>(t * hop) / sr;
        const double win_b = static_cast<double>(t * hop + M) / sr;
        for (const EventSpec& ev : events) {
            if (!intervals_overlap(ev.onset, ev.offset, win_a, win_b)) continue;
            clip.labels.activity.at(t, static_cast<std::size_t>(ev.class_id)) = 1.0;
            double d[3];
            direction_vector(ev.azimuth, ev.elevation, d);
            for (std::size_t i = 0; i < 3; ++i) {
                clip.labels.doa.at(t, static_cast<std::size_t>(ev.class_id), i) = d[i];
            }
        }
    }
    return clip;
}

json meta_to_json(const Dataset& ds) {
    json meta;
    meta["format"] = "qseld-dataset";
    meta["version"] = 1;
    const SynthConfig& c = ds.config;
    meta["sample_rate"] = c.sample_rate;
    meta["window_length"] = c.window_length;
    meta["n_clips"] = c.n_clips;
    meta["num_classes"] = c.num_classes;
    meta["max_overlap"] = c.max_overlap;
    meta["seed"] = c.seed;
    meta["clip_seconds"] = c.clip_seconds;
    meta["test_fraction"] = c.test_fraction;
    meta["min_events"] = c.min_events;
    meta["max_events"] = c.max_events;
    meta["min_event_seconds"] = c.min_event_seconds;
    meta["max_event_seconds"] = c.max_event_seconds;
    meta["doa_grid"] = {{"azimuth_deg_step", 10},
                        {"azimuth_deg_range", {-180, 170}},
                        {"elevation_deg_step", 10},
                        {"elevation_deg_range", {-60, 60}}};
    meta["gain_convention"] = "SN3D-style first order, unit W";
    json clips = json::array();
    for (const auto& clip : ds.clips) {
        json jc;
        jc["id"] = clip.id;
        jc["split"] = clip.split;
        jc["frames"] = clip.labels.frames();
        json evs = json::array();
        for (const auto& ev : clip.events) {
            evs.push_back({{"class_id", ev.class_id},
                           {"onset", ev.onset},
                           {"offset", ev.offset},
                           {"azimuth", ev.azimuth},
                           {"elevation", ev.elevation},
                           {"amplitude", ev.amplitude}});
        }
        jc["events"] = std::move(evs);
        clips.push_back(std::move(jc));
    }
    meta["clips"] = std::move(clips);
    return meta;
}

[[noreturn]] void label_fail(const std::string& path, std::size_t line, const std::string& what) {
    throw std::runtime_error("labels: " + path + ":" + std::to_string(line) + ": " + what);
}

SeldLabels read_labels_csv(const std::string& path, std::size_t frames, std::size_t num_classes) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("labels: cannot open " + path);
    SeldLabels labels;
    labels.activity = Tensor<double>({frames, num_classes});
    labels.doa = Tensor<double>({frames, num_classes, 3});

    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) label_fail(path, 1, "missing header");
    ++lineno;
    if (line != "frame,class,active,x,y,z") label_fail(path, lineno, "bad header '" + line + "'");

    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        double vals[6];
        for (int i = 0; i < 6; ++i) {
            if (!std::getline(ss, field, i == 5 ? '\n' : ',')) {
                label_fail(path, lineno, "expected 6 fields");
            }
            try {
                vals[i] = std::stod(field);
            } catch (const std::exception&) {
                label_fail(path, lineno, "non-numeric field '" + field + "'");
            }
        }
        const long frame = std::lround(vals[0]);
        const long cls = std::lround(vals[1]);
        if (frame < 0 || static_cast<std::size_t>(frame) >= frames) {
            label_fail(path, lineno, "frame index " + std::to_string(frame) + " out of range (" +
                                         std::to_string(frames) + " frames expected)");
        }
        if (cls < 0 || static_cast<std::size_t>(cls) >= num_classes) {
            label_fail(path, lineno, "class index " + std::to_string(cls) + " out of range");
        }
        if (vals[2] != 0.0 && vals[2] != 1.0) label_fail(path, lineno, "active must be 0 or 1");
        const std::size_t f = static_cast<std::size_t>(frame);
        const std::size_t c = static_cast<std::size_t>(cls);
        labels.activity.at(f, c) = vals[2];
        const double norm = std::sqrt(vals[3] * vals[3] + vals[4] * vals[4] + vals[5] * vals[5]);
        if (vals[2] == 1.0 && std::abs(norm - 1.0) > 1e-6) {
            label_fail(path, lineno, "active DOA vector is not unit norm");
        }
        if (vals[2] == 0.0 && norm != 0.0) {
            label_fail(path, lineno, "inactive DOA vector must be zero");
        }
        for (std::size_t d = 0; d < 3; ++d) labels.doa.at(f, c, d) = vals[3 + d];
        ++rows;
    }
    if (rows != frames * num_classes) {
        label_fail(path, lineno,
                   "expected " + std::to_string(frames * num_classes) + " rows, got " +
                       std::to_string(rows));
    }
    return labels;
}

}  // namespace

BFormatGains bformat_gains(double azimuth, double elevation) {
    BFormatGains g;
    g.w = 1.0;
    g.x = std::cos(azimuth) * std::cos(elevation);
    g.y = std::sin(azimuth) * std::cos(elevation);
    g.z = std::sin(elevation);
    return g;
}

void direction_vector(double azimuth, double elevation, double out[3]) {
    const BFormatGains g = bformat_gains(azimuth, elevation);
    out[0] = g.x;
    out[1] = g.y;
    out[2] = g.z;
}

AudioClip encode_bformat(const std::vector<double>& mono, double azimuth, double elevation,
                         double sample_rate) {
    const BFormatGains g = bformat_gains(azimuth, elevation);
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.channels.assign(4, std::vector<double>(mono.size()));
    for (std::size_t i = 0; i < mono.size(); ++i) {
        clip.channels[0][i] = mono[i] * g.w;
        clip.channels[1][i] = mono[i] * g.x;
        clip.channels[2][i] = mono[i] * g.y;
        clip.channels[3][i] = mono[i] * g.z;
    }
    return clip;
}

DoaGrid default_doa_grid() {
    DoaGrid grid;
    for (int a = -180; a < 180; a += 10) grid.azimuths.push_back(a * kPi / 180.0);
    for (int e = -60; e <= 60; e += 10) grid.elevations.push_back(e * kPi / 180.0);
    return grid;
}

Dataset synth_dataset(const SynthConfig& config) {
    if (config.n_clips == 0) throw std::invalid_argument("synth: n_clips must be >= 1");
    if (config.num_classes == 0) throw std::invalid_argument("synth: need at least one class");
    if (config.max_overlap < 1 || config.max_overlap > 3) {
        throw std::invalid_argument("synth: overlap O must be in {1, 2, 3}, got " +
                                    std::to_string(config.max_overlap));
    }
    if (config.min_events < 1 || config.max_events < config.min_events) {
        throw std::invalid_argument("synth: bad event count range");
    }

    Dataset ds;
    ds.config = config;
    ds.clips.resize(config.n_clips);

    const int workers = std::max(1, config.threads);
    if (workers == 1) {
        for (std::size_t i = 0; i < config.n_clips; ++i) ds.clips[i] = generate_clip(config, i);
    } else {
        std::vector<std::future<void>> jobs;
        std::atomic<std::size_t> next{0};
        for (int wk = 0; wk < workers; ++wk) {
            jobs.push_back(std::async(std::launch::async, [&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= config.n_clips) return;
                    ds.clips[i] = generate_clip(config, i);
                }
            }));
        }
        for (auto& j : jobs) j.get();
    }

    const std::size_t n_test = static_cast<std::size_t>(
        std::llround(config.test_fraction * static_cast<double>(config.n_clips)));
    for (std::size_t i = 0; i < config.n_clips; ++i) {
        ds.clips[i].split = i + n_test >= config.n_clips ? "test" : "train";
    }
    return ds;
}

void write_dataset(const Dataset& dataset, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "clips");
    fs::create_directories(fs::path(dir) / "labels");

    for (const auto& clip : dataset.clips) {
        write_wav((fs::path(dir) / "clips" / (clip.id + ".wav")).string(), clip.audio);
        std::ofstream csv(fs::path(dir) / "labels" / (clip.id + ".csv"));
        if (!csv) throw std::runtime_error("synth: cannot write labels for " + clip.id);
        csv << "frame,class,active,x,y,z\n";
        const std::size_t frames = clip.labels.frames();
        const std::size_t N = clip.labels.num_classes();
        for (std::size_t t = 0; t < frames; ++t) {
            for (std::size_t c = 0; c < N; ++c) {
                csv << t << ',' << c << ',' << static_cast<int>(clip.labels.activity.at(t, c));
                for (std::size_t d = 0; d < 3; ++d) {
                    csv << ',' << fmt_double(clip.labels.doa.at(t, c, d));
                }
                csv << '\n';
            }
        }
    }
    std::ofstream meta(fs::path(dir) / "meta.json");
    if (!meta) throw std::runtime_error("synth: cannot write meta.json in " + dir);
    meta << meta_to_json(dataset).dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
    const fs::path meta_path = fs::path(dir) / "meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw std::runtime_error("dataset: cannot open " + meta_path.string());
    json meta;
    try {
        meta_in >> meta;
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset: " + meta_path.string() + ": " + e.what());
    }
    if (meta.value("format", "") != "qseld-dataset") {
        throw std::runtime_error("dataset: " + meta_path.string() + ": unknown format");
    }

    Dataset ds;
    SynthConfig& c = ds.config;
    c.sample_rate = meta.at("sample_rate").get<double>();
    c.window_length = meta.at("window_length").get<std::size_t>();
    c.n_clips = meta.at("n_clips").get<std::size_t>();
    c.num_classes = meta.at("num_classes").get<std::size_t>();
    c.max_overlap = meta.at("max_overlap").get<int>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.clip_seconds = meta.at("clip_seconds").get<double>();
    c.test_fraction = meta.value("test_fraction", 0.2);

    for (const auto& jc : meta.at("clips")) {
        DatasetClip clip;
        clip.id = jc.at("id").get<std::string>();
        clip.split = jc.at("split").get<std::string>();
        const fs::path wav_path = fs::path(dir) / "clips" / (clip.id + ".wav");
        clip.audio = read_wav(wav_path.string());
        if (clip.audio.num_channels() != 4) {
            throw std::runtime_error("dataset: " + wav_path.string() + ": expected 4 channels");
        }
        const std::size_t frames = stft_frame_count(clip.audio.num_samples(), c.window_length);
        const std::size_t meta_frames = jc.at("frames").get<std::size_t>();
        if (frames != meta_frames) {
            throw std::runtime_error("dataset: " + wav_path.string() + ": audio yields " +
                                     std::to_string(frames) + " frames for window length " +
                                     std::to_string(c.window_length) + ", manifest says " +
                                     std::to_string(meta_frames));
        }
        const fs::path csv_path = fs::path(dir) / "labels" / (clip.id + ".csv");
        clip.labels = read_labels_csv(csv_path.string(), frames, c.num_classes);
        for (const auto& je : jc.at("events")) {
            EventSpec ev;
            ev.class_id = je.at("class_id").get<int>();
            ev.onset = je.at("onset").get<double>();
            ev.offset = je.at("offset").get<double>();
            ev.azimuth = je.at("azimuth").get<double>();
            ev.elevation = je.at("elevation").get<double>();
            ev.amplitude = je.at("amplitude").get<double>();
            clip.events.push_back(ev);
        }
        ds.clips.push_back(std::move(clip));
    }
    return ds;
}

GridDirection decode_direction_grid(const AudioClip& clip, const DoaGrid& grid) {
    if (clip.num_channels() != 4) {
        throw std::invalid_argument("decode: expected 4-channel B-format audio");
    }
    double ww = 0.0, xw = 0.0, yw = 0.0, zw = 0.0;
    const std::size_t n = clip.num_samples();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = clip.channels[0][i];
        ww += w * w;
        xw += clip.channels[1][i] * w;
        yw += clip.channels[2][i] * w;
        zw += clip.channels[3][i] * w;
    }
    if (ww <= 0.0) throw std::invalid_argument("decode: silent clip");
    const double gx = xw / ww, gy = yw / ww, gz = zw / ww;

    GridDirection best;
    double best_dot = -2.0;
    for (std::size_t ai = 0; ai < grid.azimuths.size(); ++ai) {
        for (std::size_t ei = 0; ei < grid.elevations.size(); ++ei) {
            double d[3];
            direction_vector(grid.azimuths[ai], grid.elevations[ei], d);
            const double dot = gx * d[0] + gy * d[1] + gz * d[2];
            if (dot > best_dot) {
                best_dot = dot;
                best = {ai, ei};
            }
        }
    }
    return best;
}

}  // namespace qseld
