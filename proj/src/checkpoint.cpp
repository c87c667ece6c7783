#include "qseld/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace qseld {

namespace {

constexpr char kMagic[8] = {'Q', 'S', 'E', 'L', 'D', 'C', 'P', '1'};

std::uint32_t crc32_update(std::uint32_t crc, const unsigned char* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw std::runtime_error("checkpoint: " + path + ": truncated file");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
    std::vector<unsigned char> raw(std::size_t n) {
        need(n);
        std::vector<unsigned char> v(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                     buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return v;
    }
};

}  // namespace

namespace detail {

void encode_f64(double v, unsigned char* out) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
}

void encode_f32(float v, unsigned char* out) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    for (int i = 0; i < 4; ++i) out[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
}

double decode_f64(const unsigned char* in) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

float decode_f32(const unsigned char* in) {
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(in[i]) << (8 * i);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

void save_checkpoint_file(const std::string& path, const CheckpointFile& file) {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    const std::string manifest = file.manifest.dump();
    put_u64(out, manifest.size());
    out.insert(out.end(), manifest.begin(), manifest.end());
    put_u32(out, static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& blob : file.tensors) {
        put_u32(out, static_cast<std::uint32_t>(blob.name.size()));
        out.insert(out.end(), blob.name.begin(), blob.name.end());
        out.push_back(static_cast<unsigned char>(blob.dtype));
        put_u32(out, static_cast<std::uint32_t>(blob.shape.size()));
        for (std::size_t d : blob.shape) put_u64(out, d);
        put_u64(out, blob.bytes.size());
        out.insert(out.end(), blob.bytes.begin(), blob.bytes.end());
    }
    put_u32(out, crc32_update(0, out.data(), out.size()));

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointFile load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: " + path + ": not a qseld checkpoint");
    }
    const std::size_t body_len = buf.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) {
        stored |= static_cast<std::uint32_t>(buf[body_len + i]) << (8 * i);
    }
    const std::uint32_t actual = crc32_update(0, buf.data(), body_len);
    if (stored != actual) {
        throw std::runtime_error("checkpoint: " + path + ": checksum mismatch (corrupted file)");
    }

    Reader r{buf, 8, path};
    CheckpointFile file;
    const std::uint64_t manifest_len = r.u64();
    const std::string manifest = r.str(manifest_len);
    try {
        file.manifest = nlohmann::json::parse(manifest);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint: " + path + ": bad manifest: " + e.what());
    }
    if (file.manifest.value("format", "") != "qseld-checkpoint") {
        throw std::runtime_error("checkpoint: " + path + ": unknown format");
    }
    const std::uint32_t version = file.manifest.value("version", 0u);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: " + path + ": unsupported version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    }

    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t k = 0; k < n_tensors; ++k) {
        NamedBlob blob;
        blob.name = r.str(r.u32());
        r.need(1);
        blob.dtype = static_cast<Dtype>(buf[r.pos]);
        ++r.pos;
        const std::uint32_t ndim = r.u32();
        for (std::uint32_t d = 0; d < ndim; ++d) blob.shape.push_back(r.u64());
        blob.bytes = r.raw(r.u64());
        file.tensors.push_back(std::move(blob));
    }
    if (r.pos != body_len) {
        throw std::runtime_error("checkpoint: " + path + ": trailing bytes");
    }
    return file;
}

nlohmann::json config_to_json(const QseldConfig& config) {
    return {{"conv_filters", config.conv_filters},
            {"conv_layers", config.conv_layers},
            {"pool_factors", config.pool_factors},
            {"frames", config.frames},
            {"window_length", config.window_length},
            {"recurrent_size", config.recurrent_size},
            {"dense_size", config.dense_size},
            {"num_classes", config.num_classes},
            {"doa_weight", config.doa_weight}};
}

QseldConfig config_from_json(const nlohmann::json& j) {
    QseldConfig c;
    c.conv_filters = j.at("conv_filters").get<std::size_t>();
    c.conv_layers = j.at("conv_layers").get<std::size_t>();
    c.pool_factors = j.at("pool_factors").get<std::vector<std::size_t>>();
    c.frames = j.at("frames").get<std::size_t>();
    c.window_length = j.at("window_length").get<std::size_t>();
    c.recurrent_size = j.at("recurrent_size").get<std::size_t>();
    c.dense_size = j.at("dense_size").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.doa_weight = j.at("doa_weight").get<double>();
    c.validate();
    return c;
}

nlohmann::json feature_stats_to_json(const FeatureStats& stats) {
    return {{"mean", stats.mean}, {"std", stats.stddev}};
}

FeatureStats feature_stats_from_json(const nlohmann::json& j) {
    FeatureStats s;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto stddev = j.at("std").get<std::vector<double>>();
    if (mean.size() != 8 || stddev.size() != 8) {
        throw std::runtime_error("checkpoint: feature stats must have 8 planes");
    }
    for (std::size_t i = 0; i < 8; ++i) {
        s.mean[i] = mean[i];
        s.stddev[i] = stddev[i];
    }
    return s;
}

}  // namespace qseld
