#pragma once

#include <string>

#include "qseld/features.hpp"

namespace qseld {

/// Reads a RIFF/WAVE file; supports IEEE float32 and PCM16, any channel
/// count and sample rate. Throws with the file path on malformed input.
AudioClip read_wav(const std::string& path);

/// Writes IEEE float32 WAV.
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace qseld
