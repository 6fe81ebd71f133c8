#pragma once

#include <filesystem>
#include <vector>

namespace cirgest::wav {

enum class SampleFormat { pcm16, float32 };

struct Audio {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
};

/// Mono RIFF/WAVE. Samples are clipped to [-1, 1] before encoding.
void write(const std::filesystem::path& path, const std::vector<double>& samples,
           double sample_rate_hz, SampleFormat format = SampleFormat::float32);

/// Reads mono 16-bit PCM or 32-bit float WAV files.
Audio read(const std::filesystem::path& path);

}  // namespace cirgest::wav
