#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qseld/features.hpp"
#include "qseld/tensor.hpp"

namespace qseld {

/// One parametric sound event placed in a clip.
struct EventSpec {
    int class_id = 0;
    double onset = 0.0;    // seconds
    double offset = 0.0;   // seconds, > onset
    double azimuth = 0.0;  // rad, [-pi, pi), on the 10 degree grid
    double elevation = 0.0;  // rad, [-pi/3, pi/3], on the 10 degree grid
    double amplitude = 1.0;  // linear gain
};

/// Frame-level SELD ground truth: per-class activity and unit DOA vectors
/// (zero vector where inactive).
struct SeldLabels {
    Tensor<double> activity;  // [T, N], values 0/1
    Tensor<double> doa;       // [T, N, 3]

    std::size_t frames() const { return activity.dim(0); }
    std::size_t num_classes() const { return activity.dim(1); }
};

/// First-order (SN3D-style, unit W) B-format panning gains.
struct BFormatGains {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
};

BFormatGains bformat_gains(double azimuth, double elevation);

/// Cartesian unit vector for (azimuth, elevation).
void direction_vector(double azimuth, double elevation, double out[3]);

/// Encodes a mono signal at a fixed direction into 4-channel B-format:
/// W = s, X = s cos(az) cos(el), Y = s sin(az) cos(el), Z = s sin(el).
AudioClip encode_bformat(const std::vector<double>& mono, double azimuth, double elevation,
                         double sample_rate);

/// The DOA grid used by the generator: azimuth -180..170 deg, elevation
/// -60..60 deg, both in 10 degree steps.
struct DoaGrid {
    std::vector<double> azimuths;    // rad
    std::vector<double> elevations;  // rad
};

DoaGrid default_doa_grid();

struct SynthConfig {
    std::size_t n_clips = 20;
    double clip_seconds = 2.0;
    double sample_rate = 8000.0;
    std::size_t num_classes = 3;
    int max_overlap = 1;  // O: max simultaneously active events
    std::uint64_t seed = 1234;
    std::size_t window_length = 64;  // M, fixes the label frame rate
    double test_fraction = 0.2;      // clips held out as the test split
    int threads = 1;

    // Event placement parameters.
    std::size_t min_events = 2;
    std::size_t max_events = 4;
    double min_event_seconds = 0.35;
    double max_event_seconds = 0.9;
};

/// One generated clip, before or after disk round-trip.
struct DatasetClip {
    std::string id;
    std::string split;  // "train" or "test"
    AudioClip audio;
    SeldLabels labels;
    std::vector<EventSpec> events;
};

struct Dataset {
    SynthConfig config;
    std::vector<DatasetClip> clips;
};

/// Generates the synthetic dataset in memory. Deterministic in the seed;
/// clips may be generated in parallel (per-clip derived seed streams).
Dataset synth_dataset(const SynthConfig& config);

/// Generates and writes a dataset directory:
///   <dir>/meta.json
///   <dir>/clips/<id>.wav     4-channel float32
///   <dir>/labels/<id>.csv    header frame,class,active,x,y,z
void write_dataset(const Dataset& dataset, const std::string& dir);

/// Loads a dataset directory written by write_dataset, validating labels
/// (activity/DOA invariants, frame counts for the recorded window length).
Dataset load_dataset(const std::string& dir);

/// Brute-force single-source direction decode: least-squares fit of the
/// (X, Y, Z)/W gain vector over the whole clip, then argmax over the DOA
/// grid. Returns indices into the grid.
struct GridDirection {
    std::size_t azimuth_index = 0;
    std::size_t elevation_index = 0;
};

GridDirection decode_direction_grid(const AudioClip& clip, const DoaGrid& grid);

}  // namespace qseld
