#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dstyle {

/// 8-bit image, row-major from the top-left, interleaved channels (1 or 3).
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;
};

/// Rounds clamp(x, 0, 1) * 255.
Image8 quantize_rgb(std::span<const float> rgb, int width, int height);
std::vector<float> dequantize_rgb(const Image8& img);

void write_png(const std::filesystem::path& path, const Image8& img);
Image8 read_png(const std::filesystem::path& path);

/// Grayscale "Pf" PFM with scale -1 (little-endian). PFM stores the bottom
/// row first; `values` are top-left-origin row-major like every other buffer.
void write_pfm(const std::filesystem::path& path, std::span<const float> values, int width, int height);
std::vector<float> read_pfm(const std::filesystem::path& path, int& width, int& height);

/// Tiles equally sized RGB images into a grid of `columns` columns.
Image8 contact_sheet(const std::vector<Image8>& tiles, int columns);

} // namespace dstyle
