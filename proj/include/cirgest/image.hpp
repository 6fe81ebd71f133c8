#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cirgest::image {

/// 8-bit grayscale raster, row-major, row 0 at the top.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Averages interleaved channels (rounded to nearest) into one gray plane.
GrayImage from_interleaved(std::span<const std::uint8_t> data, std::size_t width,
                           std::size_t height, std::size_t channels);

std::vector<std::uint8_t> encode_png(const GrayImage& img);
GrayImage decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const GrayImage& img);
/// Colour files are reduced to gray by channel averaging.
GrayImage read_png(const std::filesystem::path& path);

}  // namespace cirgest::image
