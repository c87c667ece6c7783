#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "qseld/model.hpp"
#include "qseld/tensor.hpp"

namespace qseld {

enum class Dtype : std::uint8_t { kF64 = 0, kF32 = 1 };

template <typename T>
constexpr Dtype dtype_of() {
    return sizeof(T) == 8 ? Dtype::kF64 : Dtype::kF32;
}

inline const char* dtype_name(Dtype d) { return d == Dtype::kF64 ? "f64" : "f32"; }

struct NamedBlob {
    std::string name;
    Dtype dtype = Dtype::kF64;
    std::vector<std::size_t> shape;
    std::vector<unsigned char> bytes;  // little-endian IEEE-754 payload
};

/// Versioned checkpoint container: JSON manifest + named tensor blobs +
/// whole-file CRC32.
struct CheckpointFile {
    nlohmann::json manifest;
    std::vector<NamedBlob> tensors;

    const NamedBlob* find(const std::string& name) const {
        for (const auto& b : tensors) {
            if (b.name == name) return &b;
        }
        return nullptr;
    }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint_file(const std::string& path, const CheckpointFile& file);

/// Verifies magic, version and checksum before parsing; throws on failure
/// (no partial result).
CheckpointFile load_checkpoint_file(const std::string& path);

namespace detail {

void encode_f64(double v, unsigned char* out);
void encode_f32(float v, unsigned char* out);
double decode_f64(const unsigned char* in);
float decode_f32(const unsigned char* in);

}  // namespace detail

template <typename T>
NamedBlob tensor_to_blob(const std::string& name, const Tensor<T>& t) {
    NamedBlob blob;
    blob.name = name;
    blob.dtype = dtype_of<T>();
    blob.shape = t.shape();
    const std::size_t width = blob.dtype == Dtype::kF64 ? 8 : 4;
    blob.bytes.resize(t.numel() * width);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (blob.dtype == Dtype::kF64) {
            detail::encode_f64(static_cast<double>(t[i]), blob.bytes.data() + i * 8);
        } else {
            detail::encode_f32(static_cast<float>(t[i]), blob.bytes.data() + i * 4);
        }
    }
    return blob;
}

template <typename T>
Tensor<T> blob_to_tensor(const NamedBlob& blob, bool& cast) {
    Tensor<T> t(blob.shape);
    const std::size_t width = blob.dtype == Dtype::kF64 ? 8 : 4;
    if (blob.bytes.size() != t.numel() * width) {
        throw std::runtime_error("checkpoint: blob '" + blob.name + "' has wrong byte length");
    }
    cast = blob.dtype != dtype_of<T>();
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double v = blob.dtype == Dtype::kF64
                             ? detail::decode_f64(blob.bytes.data() + i * 8)
                             : static_cast<double>(detail::decode_f32(blob.bytes.data() + i * 4));
        t[i] = static_cast<T>(v);
    }
    return t;
}

nlohmann::json config_to_json(const QseldConfig& config);
QseldConfig config_from_json(const nlohmann::json& j);

nlohmann::json feature_stats_to_json(const FeatureStats& stats);
FeatureStats feature_stats_from_json(const nlohmann::json& j);

/// Serializes any model exposing params()/state()/config()/feature_stats().
template <typename Model>
CheckpointFile checkpoint_from_model(Model& model, const std::string& model_kind,
                                     nlohmann::json manifest_extra = {}) {
    using T = std::remove_pointer_t<decltype(std::declval<Model&>().params()[0].value)>::value_type;
    CheckpointFile file;
    file.manifest["format"] = "qseld-checkpoint";
    file.manifest["version"] = kCheckpointVersion;
    file.manifest["dtype"] = dtype_name(dtype_of<T>());
    file.manifest["model_kind"] = model_kind;
    file.manifest["config"] = config_to_json(model.config());
    file.manifest["feature_stats"] = feature_stats_to_json(model.feature_stats());
    file.manifest["warnings"] = nlohmann::json::array();
    if (!manifest_extra.is_null()) {
        for (auto& [k, v] : manifest_extra.items()) file.manifest[k] = v;
    }
    for (const auto& p : model.params()) file.tensors.push_back(tensor_to_blob(p.name, *p.value));
    for (const auto& s : model.state()) {
        file.tensors.push_back(tensor_to_blob("state." + s.name, *s.value));
    }
    return file;
}

/// Restores parameters and state into a freshly built model. Appends a
/// precision-cast warning to the manifest when dtypes differ.
template <typename Model>
void fill_model_from_checkpoint(Model& model, CheckpointFile& file) {
    bool any_cast = false;
    auto restore = [&](const std::string& name, auto* value) {
        const NamedBlob* blob = file.find(name);
        if (blob == nullptr) {
            throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        }
        bool cast = false;
        *value = blob_to_tensor<typename std::remove_pointer_t<decltype(value)>::value_type>(
            *blob, cast);
        any_cast = any_cast || cast;
    };
    for (auto& p : model.params()) restore(p.name, p.value);
    for (auto& s : model.state()) restore("state." + s.name, s.value);
    model.set_feature_stats(feature_stats_from_json(file.manifest.at("feature_stats")));
    if (any_cast) {
        using T =
            std::remove_pointer_t<decltype(std::declval<Model&>().params()[0].value)>::value_type;
        file.manifest["warnings"].push_back(
            std::string("precision cast: checkpoint tensors loaded as ") +
            dtype_name(dtype_of<T>()));
    }
}

}  // namespace qseld
