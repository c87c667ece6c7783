#include "qseld/wav.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace qseld {

namespace {

// Little-endian readers over a byte buffer (container format is LE).
std::uint32_t rd_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void wr_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("wav: " + path + ": " + what);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44) fail(path, "truncated header");
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        fail(path, "not a RIFF/WAVE file");
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t len = rd_u32(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + len > bytes.size()) fail(path, "chunk overruns file");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) fail(path, "fmt chunk too short");
            format = rd_u16(bytes.data() + body);
            channels = rd_u16(bytes.data() + body + 2);
            sample_rate = rd_u32(bytes.data() + body + 4);
            bits = rd_u16(bytes.data() + body + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = len;
        }
        pos = body + len + (len % 2);  // chunks are word-aligned
    }
    if (channels == 0 || sample_rate == 0) fail(path, "missing fmt chunk");
    if (data == nullptr) fail(path, "missing data chunk");

    std::size_t bytes_per_sample = 0;
    if (format == 3 && bits == 32) {
        bytes_per_sample = 4;
    } else if (format == 1 && bits == 16) {
        bytes_per_sample = 2;
    } else {
        fail(path, "unsupported encoding (need IEEE float32 or PCM16), format=" +
                       std::to_string(format) + " bits=" + std::to_string(bits));
    }
    const std::size_t frame_bytes = bytes_per_sample * channels;
    if (data_len % frame_bytes != 0) fail(path, "data chunk not a whole number of frames");
    const std::size_t frames = data_len / frame_bytes;

    AudioClip clip;
    clip.sample_rate = static_cast<double>(sample_rate);
    clip.channels.assign(channels, std::vector<double>(frames));
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t c = 0; c < channels; ++c) {
            const unsigned char* p = data + (f * channels + c) * bytes_per_sample;
            double v = 0.0;
            if (bytes_per_sample == 4) {
                std::uint32_t u = rd_u32(p);
                float fv;
                std::memcpy(&fv, &u, 4);
                v = static_cast<double>(fv);
            } else {
                const std::int16_t s = static_cast<std::int16_t>(rd_u16(p));
                v = static_cast<double>(s) / 32768.0;
            }
            clip.channels[c][f] = v;
        }
    }
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    const std::size_t channels = clip.num_channels();
    const std::size_t frames = clip.num_samples();
    if (channels == 0) throw std::invalid_argument("write_wav: no channels");
    for (const auto& ch : clip.channels) {
        if (ch.size() != frames) throw std::invalid_argument("write_wav: channel length mismatch");
    }
    const std::uint32_t data_len = static_cast<std::uint32_t>(frames * channels * 4);

    std::vector<unsigned char> out;
    out.reserve(44 + data_len);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    wr_u32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    wr_u32(out, 16);
    wr_u16(out, 3);  // IEEE float
    wr_u16(out, static_cast<std::uint16_t>(channels));
    wr_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    wr_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * static_cast<std::uint32_t>(channels) * 4);
    wr_u16(out, static_cast<std::uint16_t>(channels * 4));
    wr_u16(out, 32);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    wr_u32(out, data_len);
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t c = 0; c < channels; ++c) {
            const float fv = static_cast<float>(clip.channels[c][f]);
            std::uint32_t u;
            std::memcpy(&u, &fv, 4);
            wr_u32(out, u);
        }
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_wav: cannot open " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("write_wav: write failed for " + path);
}

}  // namespace qseld
