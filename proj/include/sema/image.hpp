#pragma once

#include <csetjmp>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "sema/error.hpp"

namespace sema {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kRed{255, 0, 0};
inline constexpr Rgb kWhite{255, 255, 255};

/// Interleaved 8-bit RGB image, row-major, no padding between rows.
class Raster {
  public:
    Raster() = default;

    Raster(int width, int height, Rgb fill = {})
        : width_(width), height_(height) {
        if (width <= 0 || height <= 0) {
            throw ContractError("raster dimensions must be positive, got " +
                                std::to_string(width) + "x" + std::to_string(height));
        }
        pixels_.resize(static_cast<std::size_t>(width) * height * 3);
        for (std::size_t i = 0; i < pixels_.size(); i += 3) {
            pixels_[i] = fill.r;
            pixels_[i + 1] = fill.g;
            pixels_[i + 2] = fill.b;
        }
    }

    Raster(int width, int height, std::vector<std::uint8_t> pixels)
        : width_(width), height_(height), pixels_(std::move(pixels)) {
        if (width <= 0 || height <= 0 ||
            pixels_.size() != static_cast<std::size_t>(width) * height * 3) {
            throw ContractError("raster buffer does not match its dimensions");
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return pixels_.empty(); }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    Rgb at(int x, int y) const {
        const auto i = offset(x, y);
        return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
    }

    void set(int x, int y, Rgb c) {
        const auto i = offset(x, y);
        pixels_[i] = c.r;
        pixels_[i + 1] = c.g;
        pixels_[i + 2] = c.b;
    }

    std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }

    friend bool operator==(const Raster&, const Raster&) = default;

  private:
    std::size_t offset(int x, int y) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

struct ImageSize {
    int width = 0;
    int height = 0;
};

namespace detail {

inline bool is_png(std::span<const std::uint8_t> data) {
    return data.size() >= 8 && png_sig_cmp(data.data(), 0, 8) == 0;
}

inline bool is_jpeg(std::span<const std::uint8_t> data) {
    return data.size() >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr info) {
    auto* mgr = reinterpret_cast<JpegErrorManager*>(info->err);
    (*info->err->format_message)(info, mgr->message);
    std::longjmp(mgr->jump, 1);
}

// Only trivially destructible locals live between setjmp and the decompress
// calls; the output buffer is owned by the caller.
inline bool decode_jpeg_into(std::span<const std::uint8_t> data, bool header_only,
                             ImageSize& size, std::vector<std::uint8_t>* out,
                             char (&error)[JMSG_LENGTH_MAX]) {
    jpeg_decompress_struct info;
    JpegErrorManager err;
    info.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.message[0] = '\0';
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&info);
        std::snprintf(error, sizeof(error), "%s", err.message);
        return false;
    }
    jpeg_create_decompress(&info);
    jpeg_mem_src(&info, const_cast<unsigned char*>(data.data()),
                 static_cast<unsigned long>(data.size()));
    jpeg_read_header(&info, TRUE);
    size.width = static_cast<int>(info.image_width);
    size.height = static_cast<int>(info.image_height);
    if (header_only) {
        jpeg_destroy_decompress(&info);
        return true;
    }
    info.out_color_space = JCS_RGB;
    jpeg_start_decompress(&info);
    const std::size_t stride = static_cast<std::size_t>(info.output_width) * 3;
    out->resize(stride * info.output_height);
    while (info.output_scanline < info.output_height) {
        JSAMPROW row = out->data() + stride * info.output_scanline;
        jpeg_read_scanlines(&info, &row, 1);
    }
    jpeg_finish_decompress(&info);
    jpeg_destroy_decompress(&info);
    return true;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open file: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Decodes PNG or JPEG bytes to RGB.
inline Raster decode_image(std::span<const std::uint8_t> data) {
    if (detail::is_png(data)) {
        png_image image{};
        image.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
            throw DataError(std::string("undecodable PNG: ") + image.message);
        }
        image.format = PNG_FORMAT_RGB;
        std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
        if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
            png_image_free(&image);
            throw DataError(std::string("undecodable PNG: ") + image.message);
        }
        return Raster(static_cast<int>(image.width), static_cast<int>(image.height),
                      std::move(pixels));
    }
    if (detail::is_jpeg(data)) {
        ImageSize size;
        std::vector<std::uint8_t> pixels;
        char error[JMSG_LENGTH_MAX] = {};
        if (!detail::decode_jpeg_into(data, false, size, &pixels, error)) {
            throw DataError(std::string("undecodable JPEG: ") + error);
        }
        return Raster(size.width, size.height, std::move(pixels));
    }
    throw DataError("unsupported image format (expected PNG or JPEG)");
}

inline Raster read_image(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    try {
        return decode_image(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

/// Reads only the header to get the dimensions.
inline ImageSize probe_image_size(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    if (detail::is_png(bytes)) {
        png_image image{};
        image.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
            throw DataError(path.string() + ": undecodable PNG: " + image.message);
        }
        ImageSize size{static_cast<int>(image.width), static_cast<int>(image.height)};
        png_image_free(&image);
        return size;
    }
    if (detail::is_jpeg(bytes)) {
        ImageSize size;
        char error[JMSG_LENGTH_MAX] = {};
        if (!detail::decode_jpeg_into(bytes, true, size, nullptr, error)) {
            throw DataError(path.string() + ": undecodable JPEG: " + error);
        }
        return size;
    }
    throw DataError(path.string() + ": unsupported image format (expected PNG or JPEG)");
}

/// Lossless PNG encoding. Output is deterministic for a given raster.
inline std::vector<std::uint8_t> encode_png(const Raster& raster) {
    if (raster.empty()) {
        throw ContractError("cannot encode an empty raster");
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width());
    image.height = static_cast<png_uint_32>(raster.height());
    image.format = PNG_FORMAT_RGB;
    image.flags = PNG_IMAGE_FLAG_FAST;
    const auto* pixels = raster.bytes().data();
    png_alloc_size_t size = PNG_IMAGE_PNG_SIZE_MAX(image);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
        throw Error(std::string("PNG encoding failed: ") + image.message);
    }
    out.resize(size);
    return out;
}

inline void write_png(const std::filesystem::path& path, const Raster& raster) {
    const auto bytes = encode_png(raster);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write file: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace sema
