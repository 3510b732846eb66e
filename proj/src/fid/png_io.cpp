#include "fid/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

namespace fid {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed decoding PNG " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    // Normalize every input variant to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
    Tensor out = Tensor::zeros({3, std::int64_t(h), std::int64_t(w)});
    std::int64_t plane = std::int64_t(h) * w;
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out.data()[c * plane + std::int64_t(y) * w + x] =
                    static_cast<float>(row[std::size_t(x) * 3 + std::size_t(c)]) / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ShapeError("write_png expects [3,H,W], got " + shape_str(image.shape()));
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot create " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed encoding PNG " + path);
    }
    std::int64_t h = image.dim(1), w = image.dim(2), plane = h * w;
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(image.data()[c * plane + y * w + x], 0.0f, 1.0f);
                row[std::size_t(x) * 3 + std::size_t(c)] =
                    static_cast<png_byte>(std::lround(v * 255.0f));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor contact_sheet(const Tensor& input_rgb, const IntrinsicStack& stack) {
    const Tensor* panels[] = {&input_rgb,      &stack.albedo,       &stack.normal,
                              &stack.ao,       &stack.specular,     &stack.translucency,
                              &stack.raw_diffuse};
    std::int64_t h = input_rgb.dim(1), w = input_rgb.dim(2);
    const std::int64_t gutter = 2;
    std::int64_t n = std::int64_t(std::size(panels));
    std::int64_t total_w = n * w + (n - 1) * gutter;
    Tensor sheet = Tensor::zeros({3, h, total_w});
    for (std::int64_t i = 0; i < sheet.numel(); ++i) sheet.data()[i] = 1.0f;  // white gutters
    std::int64_t sheet_plane = h * total_w;
    for (std::int64_t p = 0; p < n; ++p) {
        const Tensor& t = *panels[p];
        if (t.dim(1) != h || t.dim(2) != w)
            throw ShapeError("contact_sheet: pass resolution mismatch");
        std::int64_t x0 = p * (w + gutter);
        std::int64_t plane = h * w;
        for (int c = 0; c < 3; ++c)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x)
                    sheet.data()[c * sheet_plane + y * total_w + x0 + x] =
                        t.data()[c * plane + y * w + x];
    }
    return sheet;
}

}  // namespace fid
