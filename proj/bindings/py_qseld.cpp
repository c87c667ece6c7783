// Python bindings for the main qseld operations: quaternion algebra, the
// feature front-end, dataset synthesis, metrics, and model train/predict.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <memory>

#include "qseld/checkpoint.hpp"
#include "qseld/dataset.hpp"
#include "qseld/metrics.hpp"
#include "qseld/model.hpp"
#include "qseld/optim.hpp"
#include "qseld/synth.hpp"
#include "qseld/train.hpp"

namespace py = pybind11;
using namespace qseld;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> tensor_from_array(const DoubleArray& arr) {
    std::vector<std::size_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) {
        shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arr.shape(i));
    }
    Tensor<double> t(shape);
    std::copy(arr.data(), arr.data() + arr.size(), t.data());
    return t;
}

DoubleArray array_from_tensor(const Tensor<double>& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    DoubleArray arr(shape);
    std::copy(t.data(), t.data() + t.numel(), arr.mutable_data());
    return arr;
}

Quaternion quat_from_tuple(const py::tuple& t) {
    if (t.size() != 4) throw py::value_error("quaternion needs 4 components (w, x, y, z)");
    return {t[0].cast<double>(), t[1].cast<double>(), t[2].cast<double>(), t[3].cast<double>()};
}

py::tuple tuple_from_quat(const Quaternion& q) { return py::make_tuple(q.w, q.x, q.y, q.z); }

AudioClip audio_from_array(const DoubleArray& arr, double sample_rate) {
    if (arr.ndim() != 2) throw py::value_error("audio must be [channels, samples]");
    AudioClip clip;
    clip.sample_rate = sample_rate;
    const std::size_t ch = static_cast<std::size_t>(arr.shape(0));
    const std::size_t n = static_cast<std::size_t>(arr.shape(1));
    clip.channels.assign(ch, std::vector<double>(n));
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t i = 0; i < n; ++i) clip.channels[c][i] = arr.at(c, i);
    }
    return clip;
}

py::dict report_to_dict(const MetricReport& r) {
    py::dict d;
    d["ER"] = r.er;
    d["F"] = r.f;
    d["DOA_err"] = r.doa_err;
    d["K"] = r.k;
    d["S_SED"] = r.s_sed;
    d["S_DOA"] = r.s_doa;
    d["S_SELD"] = r.s_seld;
    return d;
}

QseldConfig config_from_kwargs(std::size_t conv_filters, std::size_t conv_layers,
                               const std::vector<std::size_t>& pool_factors, std::size_t frames,
                               std::size_t window_length, std::size_t recurrent_size,
                               std::size_t dense_size, std::size_t num_classes,
                               double doa_weight) {
    QseldConfig c;
    c.conv_filters = conv_filters;
    c.conv_layers = conv_layers;
    c.pool_factors = pool_factors;
    c.frames = frames;
    c.window_length = window_length;
    c.recurrent_size = recurrent_size;
    c.dense_size = dense_size;
    c.num_classes = num_classes;
    c.doa_weight = doa_weight;
    c.validate();
    return c;
}

/// Thin double-precision model wrapper for inference from Python.
class PyModel {
public:
    explicit PyModel(QseldConfig cfg) : model_(std::move(cfg)) {}

    void init(std::uint64_t seed) { model_.init(seed); }

    py::tuple predict(const DoubleArray& features) {
        Tensor<double> f = tensor_from_array(features);
        Predictions<double> p = model_.forward(f, /*train=*/false);
        return py::make_tuple(array_from_tensor(p.sed), array_from_tensor(p.doa));
    }

    std::size_t param_count() { return model_.param_count(); }

    void save(const std::string& path) {
        save_checkpoint_file(path, checkpoint_from_model(model_, "qseld"));
    }

    static std::unique_ptr<PyModel> load(const std::string& path) {
        CheckpointFile ck = load_checkpoint_file(path);
        if (ck.manifest.value("model_kind", "qseld") != "qseld") {
            throw std::runtime_error("checkpoint holds the real baseline, not a qseld model");
        }
        auto m = std::make_unique<PyModel>(config_from_json(ck.manifest.at("config")));
        fill_model_from_checkpoint(m->model_, ck);
        return m;
    }

    QseldModel<double>& raw() { return model_; }

private:
    QseldModel<double> model_;
};

py::dict train_on_dataset(const std::string& dataset_dir, const std::string& checkpoint_path,
                          std::size_t epochs, std::size_t batch_size, double lr, double doa_weight,
                          std::uint64_t seed, bool baseline, std::size_t conv_filters,
                          std::size_t frames, std::size_t recurrent_size, std::size_t dense_size) {
    Dataset ds = load_dataset(dataset_dir);
    QseldConfig cfg = QseldConfig::desk();
    cfg.conv_filters = conv_filters;
    cfg.frames = frames;
    cfg.recurrent_size = recurrent_size;
    cfg.dense_size = dense_size;
    cfg.window_length = ds.config.window_length;
    cfg.num_classes = ds.config.num_classes;
    cfg.doa_weight = doa_weight;
    cfg.validate();

    SegmentSet train_set = build_segments(ds, "train", cfg.window_length, cfg.frames);
    SegmentSet val_set = build_segments(ds, "test", cfg.window_length, cfg.frames);
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.lr = lr;
    tc.doa_weight = doa_weight;
    tc.seed = seed;
    tc.metric_segment_frames = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(ds.config.sample_rate / (ds.config.window_length / 2.0))));

    nlohmann::json extra;
    extra["sample_rate"] = ds.config.sample_rate;
    TrainResult result;
    if (baseline) {
        RealSeldModel<double> model(cfg);
        model.init(tc.seed);
        result = train_model(model, train_set, val_set, tc, "real", extra);
    } else {
        QseldModel<double> model(cfg);
        model.init(tc.seed);
        result = train_model(model, train_set, val_set, tc, "qseld", extra);
    }
    save_checkpoint_file(checkpoint_path, result.best_checkpoint);

    py::dict out;
    out["best_epoch"] = result.best_epoch;
    out["best_s_seld"] = result.best_s_seld;
    out["epochs_run"] = result.log.size();
    out["diverged"] = result.diverged;
    return out;
}

py::dict evaluate_checkpoint(const std::string& checkpoint_path, const std::string& dataset_dir,
                             const std::string& split, double threshold) {
    Dataset ds = load_dataset(dataset_dir);
    CheckpointFile ck = load_checkpoint_file(checkpoint_path);
    const QseldConfig cfg = config_from_json(ck.manifest.at("config"));
    const std::size_t segment_frames = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(ds.config.sample_rate / (ds.config.window_length / 2.0))));
    SegmentSet set = build_segments(ds, split == "all" ? "" : split, cfg.window_length, cfg.frames);

    MetricReport report;
    if (ck.manifest.value("model_kind", "qseld") == "qseld") {
        QseldModel<double> model(cfg);
        fill_model_from_checkpoint(model, ck);
        report = evaluate_model(model, set, threshold, segment_frames, cfg.doa_weight).report;
    } else {
        RealSeldModel<double> model(cfg);
        fill_model_from_checkpoint(model, ck);
        report = evaluate_model(model, set, threshold, segment_frames, cfg.doa_weight).report;
    }
    return report_to_dict(report);
}

void synth_dataset_py(const std::string& out_dir, std::size_t n_clips, double clip_seconds,
                      double sample_rate, std::size_t num_classes, int overlap,
                      std::uint64_t seed, std::size_t window_length, double test_fraction,
                      std::size_t min_events, std::size_t max_events) {
    SynthConfig cfg;
    cfg.n_clips = n_clips;
    cfg.clip_seconds = clip_seconds;
    cfg.sample_rate = sample_rate;
    cfg.num_classes = num_classes;
    cfg.max_overlap = overlap;
    cfg.seed = seed;
    cfg.window_length = window_length;
    cfg.test_fraction = test_fraction;
    cfg.min_events = min_events;
    cfg.max_events = max_events;
    write_dataset(synth_dataset(cfg), out_dir);
}

}  // namespace

PYBIND11_MODULE(_qseld, m) {
    m.doc() = "Quaternion SELD: Hamilton-product convolution networks for 3D sound "
              "event localization and detection from B-format audio";

    m.def(
        "hamilton_product",
        [](const py::tuple& p, const py::tuple& q) {
            return tuple_from_quat(hamilton_product(quat_from_tuple(p), quat_from_tuple(q)));
        },
        py::arg("p"), py::arg("q"),
        "Hamilton product of two quaternions given as (w, x, y, z) tuples.");

    m.def(
        "conjugate_and_norm",
        [](const py::tuple& q) {
            auto [c, n] = conjugate_and_norm(quat_from_tuple(q));
            return py::make_tuple(tuple_from_quat(c), n);
        },
        py::arg("q"));

    m.def(
        "to_real_block",
        [](const DoubleArray& weights) {
            if (weights.ndim() != 3 || weights.shape(2) != 4) {
                throw py::value_error("expected weights [out, in, 4]");
            }
            const std::size_t out = static_cast<std::size_t>(weights.shape(0));
            const std::size_t in = static_cast<std::size_t>(weights.shape(1));
            QuatTensor<double> wq({out, in});
            for (std::size_t o = 0; o < out; ++o) {
                for (std::size_t i = 0; i < in; ++i) {
                    wq.set(o * in + i, {weights.at(o, i, 0), weights.at(o, i, 1),
                                        weights.at(o, i, 2), weights.at(o, i, 3)});
                }
            }
            return array_from_tensor(to_real_block(wq));
        },
        py::arg("weights"),
        "Real block-matrix representation of a quaternion weight matrix given "
        "as an [out, in, 4] array of (w, x, y, z) components.");

    m.def("sigma_he", &sigma_he, py::arg("n_i"),
          "He-criterion standard deviation 1/sqrt(2 n_i).");

    m.def(
        "sample_quaternion_weights",
        [](std::size_t count, long n_i, std::uint64_t seed) {
            Rng rng(seed);
            const double sigma = sigma_he(n_i);
            DoubleArray out({static_cast<py::ssize_t>(count), py::ssize_t{4}});
            for (std::size_t i = 0; i < count; ++i) {
                const Quaternion q = sample_quaternion_weight(rng, sigma).value;
                out.mutable_at(i, 0) = q.w;
                out.mutable_at(i, 1) = q.x;
                out.mutable_at(i, 2) = q.y;
                out.mutable_at(i, 3) = q.z;
            }
            return out;
        },
        py::arg("count"), py::arg("n_i"), py::arg("seed"),
        "Polar-form quaternion weight draws, returned as [count, 4].");

    m.def(
        "stft_features",
        [](const DoubleArray& audio, double sample_rate, std::size_t window_length,
           std::size_t frames) {
            FeatureClip clip =
                stft_features(audio_from_array(audio, sample_rate), window_length, frames);
            return array_from_tensor(clip.planes);
        },
        py::arg("audio"), py::arg("sample_rate"), py::arg("window_length"), py::arg("frames"),
        "Hamming STFT magnitude/phase features: audio [4, samples] -> [T, M/2, 8].");

    m.def(
        "encode_bformat",
        [](const DoubleArray& mono, double azimuth, double elevation, double sample_rate) {
            if (mono.ndim() != 1) throw py::value_error("mono must be 1-D");
            std::vector<double> samples(mono.data(), mono.data() + mono.size());
            AudioClip clip = encode_bformat(samples, azimuth, elevation, sample_rate);
            DoubleArray out({py::ssize_t{4}, static_cast<py::ssize_t>(samples.size())});
            for (std::size_t c = 0; c < 4; ++c) {
                for (std::size_t i = 0; i < samples.size(); ++i) {
                    out.mutable_at(c, i) = clip.channels[c][i];
                }
            }
            return out;
        },
        py::arg("mono"), py::arg("azimuth"), py::arg("elevation"), py::arg("sample_rate"),
        "First-order B-format encoding with SN3D-style gains (unit W).");

    m.def(
        "decode_direction",
        [](const DoubleArray& audio, double sample_rate) {
            const DoaGrid grid = default_doa_grid();
            const GridDirection d =
                decode_direction_grid(audio_from_array(audio, sample_rate), grid);
            return py::make_tuple(grid.azimuths[d.azimuth_index],
                                  grid.elevations[d.elevation_index]);
        },
        py::arg("audio"), py::arg("sample_rate"),
        "Brute-force grid decode of a single-source clip; returns (azimuth, elevation) rad.");

    m.def("synth_dataset", &synth_dataset_py, py::arg("out_dir"), py::arg("n_clips") = 20,
          py::arg("clip_seconds") = 2.0, py::arg("sample_rate") = 8000.0,
          py::arg("num_classes") = 3, py::arg("overlap") = 1, py::arg("seed") = 1234,
          py::arg("window_length") = 64, py::arg("test_fraction") = 0.2,
          py::arg("min_events") = 2, py::arg("max_events") = 4,
          "Writes a synthetic B-format SELD dataset directory.");

    m.def(
        "segment_sed_metrics",
        [](const DoubleArray& pred, const DoubleArray& gt, std::size_t segment_frames) {
            auto [er, f] =
                segment_sed_metrics(tensor_from_array(pred), tensor_from_array(gt), segment_frames);
            return py::make_tuple(er, f);
        },
        py::arg("pred_activity"), py::arg("gt_activity"), py::arg("segment_frames"));

    m.def(
        "doa_metrics",
        [](const DoubleArray& pred_doa, const DoubleArray& gt_doa, const DoubleArray& pred_act,
           const DoubleArray& gt_act) {
            auto [err, k] = doa_metrics(tensor_from_array(pred_doa), tensor_from_array(gt_doa),
                                        tensor_from_array(pred_act), tensor_from_array(gt_act));
            return py::make_tuple(err, k);
        },
        py::arg("pred_doa"), py::arg("gt_doa"), py::arg("pred_activity"), py::arg("gt_activity"));

    m.def(
        "seld_scores",
        [](double er, double f, double doa_err, double k) {
            double s_sed, s_doa, s_seld;
            seld_scores(er, f, doa_err, k, s_sed, s_doa, s_seld);
            return py::make_tuple(s_sed, s_doa, s_seld);
        },
        py::arg("er"), py::arg("f"), py::arg("doa_err"), py::arg("k"));

    py::class_<PyModel>(m, "QseldModel")
        .def(py::init([](std::size_t conv_filters, std::size_t conv_layers,
                         const std::vector<std::size_t>& pool_factors, std::size_t frames,
                         std::size_t window_length, std::size_t recurrent_size,
                         std::size_t dense_size, std::size_t num_classes, double doa_weight) {
                 return std::make_unique<PyModel>(config_from_kwargs(
                     conv_filters, conv_layers, pool_factors, frames, window_length,
                     recurrent_size, dense_size, num_classes, doa_weight));
             }),
             py::arg("conv_filters") = 2, py::arg("conv_layers") = 3,
             py::arg("pool_factors") = std::vector<std::size_t>{4, 2, 2}, py::arg("frames") = 8,
             py::arg("window_length") = 64, py::arg("recurrent_size") = 16,
             py::arg("dense_size") = 16, py::arg("num_classes") = 3, py::arg("doa_weight") = 5.0)
        .def("init", &PyModel::init, py::arg("seed"))
        .def("predict", &PyModel::predict, py::arg("features"),
             "features [B, T, M/2, 8] -> (sed probabilities [B, T, N], doa [B, T, 3N])")
        .def("param_count", &PyModel::param_count)
        .def("save", &PyModel::save, py::arg("path"))
        .def_static("load", &PyModel::load, py::arg("path"));

    m.def("train", &train_on_dataset, py::arg("dataset_dir"), py::arg("checkpoint_path"),
          py::arg("epochs") = 20, py::arg("batch_size") = 16, py::arg("lr") = 1e-3,
          py::arg("doa_weight") = 5.0, py::arg("seed") = 42, py::arg("baseline") = false,
          py::arg("conv_filters") = 2, py::arg("frames") = 8, py::arg("recurrent_size") = 16,
          py::arg("dense_size") = 16,
          "Trains on a dataset directory and writes the best checkpoint; returns a summary "
          "dict.");

    m.def("evaluate", &evaluate_checkpoint, py::arg("checkpoint_path"), py::arg("dataset_dir"),
          py::arg("split") = "test", py::arg("threshold") = 0.5,
          "Evaluates a checkpoint against a dataset split; returns the seven SELD metrics.");

    m.attr("__version__") = "0.1.0";
}
