#include "dstyle/image_io.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace dstyle {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;


} // namespace

Image8 quantize_rgb(std::span<const float> rgb, int width, int height) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
        throw ShapeError("quantize_rgb: buffer size does not match resolution");
    }
    Image8 img{width, height, 3, std::vector<std::uint8_t>(rgb.size())};
    std::transform(rgb.begin(), rgb.end(), img.pixels.begin(), [](float v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0F, 1.0F) * 255.0F));
    });
    return img;
}

std::vector<float> dequantize_rgb(const Image8& img) {
    if (img.channels != 3) {
        throw ShapeError("dequantize_rgb expects an RGB image");
    }
    std::vector<float> out(img.pixels.size());
    std::transform(img.pixels.begin(), img.pixels.end(), out.begin(),
                   [](std::uint8_t v) { return static_cast<float>(v) / 255.0F; });
    return out;
}

namespace {

// libpng prints to stderr by default; failures surface as exceptions instead.
void png_silent_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_silent_warning(png_structp, png_const_charp) {}

// Plain C control flow only between setjmp and the libpng calls.
bool write_png_rows(std::FILE* file, const Image8& img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_silent_error, png_silent_warning);
    if (png == nullptr) {
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, file);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, img.pixels.data() + stride * static_cast<std::size_t>(y));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

// `img` must outlive the call; its pixel buffer is resized before rows are read.
bool read_png_rows(std::FILE* file, Image8& img) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_silent_error, png_silent_warning);
    if (png == nullptr) {
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, file);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = png_get_channels(png, info);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    const std::size_t stride = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
    for (int y = 0; y < img.height; ++y) {
        png_read_row(png, img.pixels.data() + stride * static_cast<std::size_t>(y), nullptr);
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

} // namespace

void write_png(const std::filesystem::path& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ShapeError("PNG writer supports 1 or 3 channels");
    }
    if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
        throw ShapeError("PNG buffer size does not match resolution");
    }
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file || !write_png_rows(file.get(), img)) {
        throw FormatError(fmt::format("cannot write PNG '{}'", path.string()));
    }
}

Image8 read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    Image8 img;
    if (!file || !read_png_rows(file.get(), img)) {
        throw FormatError(fmt::format("cannot read PNG '{}'", path.string()));
    }
    return img;
}

void write_pfm(const std::filesystem::path& path, std::span<const float> values, int width, int height) {
    if (values.size() != static_cast<std::size_t>(width) * height) {
        throw ShapeError("PFM buffer size does not match resolution");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError(fmt::format("cannot write '{}'", path.string()));
    }
    out << "Pf\n" << width << ' ' << height << "\n-1.0\n";
    std::vector<std::uint32_t> row(static_cast<std::size_t>(width));
    for (int y = height - 1; y >= 0; --y) {
        for (int x = 0; x < width; ++x) {
            auto bits = std::bit_cast<std::uint32_t>(values[static_cast<std::size_t>(y) * width + x]);
            if constexpr (std::endian::native == std::endian::big) {
                bits = __builtin_bswap32(bits);
            }
            row[static_cast<std::size_t>(x)] = bits;
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
}

std::vector<float> read_pfm(const std::filesystem::path& path, int& width, int& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(fmt::format("cannot open '{}'", path.string()));
    }
    std::string magic;
    double scale = 0.0;
    in >> magic >> width >> height >> scale;
    in.get();
    if (magic != "Pf" || width < 1 || height < 1) {
        throw FormatError(fmt::format("'{}' is not a grayscale PFM", path.string()));
    }
    const bool little = scale < 0.0;
    std::vector<float> values(static_cast<std::size_t>(width) * height);
    std::vector<std::uint32_t> row(static_cast<std::size_t>(width));
    for (int y = height - 1; y >= 0; --y) {
        if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4))) {
            throw FormatError(fmt::format("'{}' is truncated", path.string()));
        }
        for (int x = 0; x < width; ++x) {
            std::uint32_t bits = row[static_cast<std::size_t>(x)];
            if (little != (std::endian::native == std::endian::little)) {
                bits = __builtin_bswap32(bits);
            }
            values[static_cast<std::size_t>(y) * width + x] = std::bit_cast<float>(bits);
        }
    }
    return values;
}

Image8 contact_sheet(const std::vector<Image8>& tiles, int columns) {
    if (tiles.empty() || columns < 1) {
        throw ShapeError("contact sheet needs at least one tile and column");
    }
    const int w = tiles.front().width;
    const int h = tiles.front().height;
    const int rows = (static_cast<int>(tiles.size()) + columns - 1) / columns;
    Image8 sheet{w * columns, h * rows, 3, {}};
    sheet.pixels.assign(static_cast<std::size_t>(sheet.width) * sheet.height * 3, 255);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const Image8& tile = tiles[t];
        if (tile.width != w || tile.height != h || tile.channels != 3) {
            throw ShapeError("contact sheet tiles must share size and be RGB");
        }
        const int ox = static_cast<int>(t) % columns * w;
        const int oy = static_cast<int>(t) / columns * h;
        for (int y = 0; y < h; ++y) {
            std::memcpy(sheet.pixels.data() + (static_cast<std::size_t>(oy + y) * sheet.width + ox) * 3,
                        tile.pixels.data() + static_cast<std::size_t>(y) * w * 3, static_cast<std::size_t>(w) * 3);
        }
    }
    return sheet;
}

} // namespace dstyle
