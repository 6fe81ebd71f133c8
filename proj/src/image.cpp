#include "cirgest/image.hpp"

#include <png.h>

#include <fstream>
#include <iterator>
#include <string>

#include "cirgest/error.hpp"

namespace cirgest::image {

GrayImage from_interleaved(std::span<const std::uint8_t> data, std::size_t width,
                           std::size_t height, std::size_t channels) {
    if (width == 0 || height == 0 || channels == 0) fail(ErrorCode::input, "empty image");
    if (data.size() != width * height * channels) fail(ErrorCode::input, "pixel buffer size mismatch");
    GrayImage img{width, height, std::vector<std::uint8_t>(width * height)};
    for (std::size_t i = 0; i < width * height; ++i) {
        unsigned sum = 0;
        for (std::size_t c = 0; c < channels; ++c) sum += data[i * channels + c];
        img.pixels[i] = static_cast<std::uint8_t>((sum + channels / 2) / channels);
    }
    return img;
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
    if (img.empty() || img.pixels.size() != img.width * img.height) {
        fail(ErrorCode::input, "cannot encode an empty image");
    }
    png_image info{};
    info.version = PNG_IMAGE_VERSION;
    info.width = static_cast<png_uint_32>(img.width);
    info.height = static_cast<png_uint_32>(img.height);
    info.format = PNG_FORMAT_GRAY;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&info, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
        fail(ErrorCode::io, std::string("png encode failed: ") + info.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&info, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
        fail(ErrorCode::io, std::string("png encode failed: ") + info.message);
    }
    out.resize(size);
    return out;
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) fail(ErrorCode::input, "empty png buffer");
    png_image info{};
    info.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&info, bytes.data(), bytes.size())) {
        fail(ErrorCode::input, std::string("unreadable png: ") + info.message);
    }
    const bool colour = (info.format & PNG_FORMAT_FLAG_COLOR) != 0;
    info.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::size_t channels = colour ? 3 : 1;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(info));
    if (!png_image_finish_read(&info, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&info);
        fail(ErrorCode::input, std::string("png decode failed: ") + info.message);
    }
    return from_interleaved(buf, info.width, info.height, channels);
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
    const auto bytes = encode_png(img);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail(ErrorCode::io, "write failed for " + path.string());
}

GrayImage read_png(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::input, "cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace cirgest::image
