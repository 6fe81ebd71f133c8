#include "cirgest/wav.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "byteio.hpp"
#include "cirgest/error.hpp"

namespace cirgest::wav {

using detail::get_le;
using detail::put_le;

void write(const std::filesystem::path& path, const std::vector<double>& samples,
           double sample_rate_hz, SampleFormat format) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");

    const std::uint16_t bits = format == SampleFormat::pcm16 ? 16 : 32;
    const std::uint16_t tag = format == SampleFormat::pcm16 ? 1 : 3;
    const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(sample_rate_hz));
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * (bits / 8));

    os.write("RIFF", 4);
    put_le<std::uint32_t>(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_le<std::uint32_t>(os, 16);
    put_le<std::uint16_t>(os, tag);
    put_le<std::uint16_t>(os, 1);
    put_le<std::uint32_t>(os, rate);
    put_le<std::uint32_t>(os, rate * (bits / 8));
    put_le<std::uint16_t>(os, bits / 8);
    put_le<std::uint16_t>(os, bits);
    os.write("data", 4);
    put_le<std::uint32_t>(os, data_bytes);
    for (double s : samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        if (format == SampleFormat::pcm16) {
            put_le<std::int16_t>(os, static_cast<std::int16_t>(std::lround(c * 32767.0)));
        } else {
            put_le<float>(os, static_cast<float>(c));
        }
    }
    if (!os) fail(ErrorCode::io, "write failed for " + path.string());
}

Audio read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::io, "cannot open " + path.string());
    const auto bad = [&](const std::string& why) -> void {
        fail(ErrorCode::input, path.string() + ": " + why);
    };

    char id[4];
    std::uint32_t size = 0;
    if (!is.read(id, 4) || std::string(id, 4) != "RIFF") bad("not a RIFF file");
    get_le(is, size);
    if (!is.read(id, 4) || std::string(id, 4) != "WAVE") bad("not a WAVE file");

    std::uint16_t tag = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    while (is.read(id, 4)) {
        std::uint32_t chunk = 0;
        if (!get_le(is, chunk)) bad("truncated chunk header");
        const std::string name(id, 4);
        if (name == "fmt ") {
            std::uint32_t byte_rate = 0;
            std::uint16_t align = 0;
            get_le(is, tag);
            get_le(is, channels);
            get_le(is, rate);
            get_le(is, byte_rate);
            get_le(is, align);
            get_le(is, bits);
            if (chunk > 16) is.ignore(chunk - 16);
            have_fmt = true;
        } else if (name == "data") {
            if (!have_fmt) bad("data chunk before fmt chunk");
            if (channels != 1) bad("only mono files are supported");
            Audio a;
            a.sample_rate_hz = rate;
            if (tag == 1 && bits == 16) {
                a.samples.reserve(chunk / 2);
                for (std::uint32_t i = 0; i < chunk / 2; ++i) {
                    std::int16_t v = 0;
                    if (!get_le(is, v)) bad("truncated sample data");
                    a.samples.push_back(static_cast<double>(v) / 32767.0);
                }
            } else if (tag == 3 && bits == 32) {
                a.samples.reserve(chunk / 4);
                for (std::uint32_t i = 0; i < chunk / 4; ++i) {
                    float v = 0;
                    if (!get_le(is, v)) bad("truncated sample data");
                    a.samples.push_back(static_cast<double>(v));
                }
            } else {
                bad("unsupported sample format");
            }
            return a;
        } else {
            is.ignore(chunk + (chunk & 1));
        }
    }
    bad("missing data chunk");
    return {};
}

}  // namespace cirgest::wav
