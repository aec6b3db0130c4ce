#include "sider/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace sider {

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
    if (!fp) throw std::runtime_error("read_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("read_png: init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("read_png: init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: decode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<png_byte> row((size_t)w * 3);
    Tensor img({3, (int)h, (int)w});
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at3(c, (int)y, (int)x) = row[(size_t)x * 3 + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const Tensor& img) {
    if (img.ndim() != 3 || img.dim(0) != 3) throw std::invalid_argument("write_png: need {3,H,W}");
    int h = img.dim(1), w = img.dim(2);

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("write_png: init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("write_png: init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: encode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, (png_uint_32)w, (png_uint_32)h, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row((size_t)w * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                real v = std::min(1.0, std::max(0.0, img.at3(c, y, x)));
                row[(size_t)x * 3 + c] = (png_byte)std::lround(v * 255.0);
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor quantize8(const Tensor& img) {
    Tensor out = img;
    for (auto& v : out.data) v = std::round(std::min(1.0, std::max(0.0, v)) * 255.0) / 255.0;
    return out;
}

Tensor crop_resize(const Tensor& img, int resolution) {
    int h = img.dim(1), w = img.dim(2);
    int side = std::min(h, w);
    int y0 = (h - side) / 2, x0 = (w - side) / 2;
    Tensor out({3, resolution, resolution});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < resolution; ++y) {
            real sy = (y + 0.5) * side / resolution - 0.5;
            int iy = (int)std::floor(sy);
            real fy = sy - iy;
            int y1 = std::min(std::max(iy, 0), side - 1);
            int y2 = std::min(y1 + 1, side - 1);
            for (int x = 0; x < resolution; ++x) {
                real sx = (x + 0.5) * side / resolution - 0.5;
                int ix = (int)std::floor(sx);
                real fx = sx - ix;
                int x1 = std::min(std::max(ix, 0), side - 1);
                int x2 = std::min(x1 + 1, side - 1);
                real v = (1 - fy) * ((1 - fx) * img.at3(c, y0 + y1, x0 + x1) + fx * img.at3(c, y0 + y1, x0 + x2)) +
                         fy * ((1 - fx) * img.at3(c, y0 + y2, x0 + x1) + fx * img.at3(c, y0 + y2, x0 + x2));
                out.at3(c, y, x) = std::min(1.0, std::max(0.0, v));
            }
        }
    }
    return out;
}

}  // namespace sider
