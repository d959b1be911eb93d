// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace splatir {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr std::uint32_t kFloatMapMagic = 0x31504D46u;  // "FMP1" little-endian

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img, PngDepth depth, bool srgb) {
    if (img.empty()) throw InputError("write_png: empty image");
    if (img.channels() != 1 && img.channels() != 3)
        throw InputError("write_png: only 1 or 3 channels supported");

    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw InputError("write_png: cannot open " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("write_png: libpng failure on " + path.string());
    }
    png_init_io(png, fp.get());

    const int w = img.width(), h = img.height(), c = img.channels();
    const int bits = depth == PngDepth::Bits8 ? 8 : 16;
    const int color = c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, w, h, bits, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const int maxv = depth == PngDepth::Bits8 ? 255 : 65535;
    std::vector<png_byte> row(static_cast<std::size_t>(w) * c * (bits / 8));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int k = 0; k < c; ++k) {
                double v = img.at(x, y, k);
                if (srgb) v = srgb_encode(v);
                auto q = static_cast<std::uint32_t>(std::nearbyint(clamp01(v) * maxv));
                if (bits == 8) {
                    row[static_cast<std::size_t>(x) * c + k] = static_cast<png_byte>(q);
                } else {
                    std::size_t i = (static_cast<std::size_t>(x) * c + k) * 2;
                    row[i] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
                    row[i + 1] = static_cast<png_byte>(q & 0xFF);
                }
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path, int* bit_depth_out) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw InputError("read_png: cannot open " + path.string());

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw InputError("read_png: not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("read_png: libpng failure on " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bits = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && bits < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    bits = png_get_bit_depth(png, info);
    int channels = png_get_channels(png, info);
    const int maxv = bits == 8 ? 255 : 65535;
    if (bit_depth_out) *bit_depth_out = bits;

    Image img(static_cast<int>(w), static_cast<int>(h), channels);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int k = 0; k < channels; ++k) {
                std::uint32_t q;
                if (bits == 8) {
                    q = row[static_cast<std::size_t>(x) * channels + k];
                } else {
                    std::size_t i = (static_cast<std::size_t>(x) * channels + k) * 2;
                    q = (static_cast<std::uint32_t>(row[i]) << 8) | row[i + 1];
                }
                img.at(static_cast<int>(x), static_cast<int>(y), k) = static_cast<double>(q) / maxv;
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_float_map(const std::filesystem::path& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("write_float_map: cannot open " + path.string());
    std::uint32_t hdr[4] = {kFloatMapMagic, static_cast<std::uint32_t>(img.width()),
                            static_cast<std::uint32_t>(img.height()),
                            static_cast<std::uint32_t>(img.channels())};
    f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    std::vector<float> buf(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) buf[i] = static_cast<float>(img.data()[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw InputError("write_float_map: write failed on " + path.string());
}

Image read_float_map(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("read_float_map: cannot open " + path.string());
    std::uint32_t hdr[4];
    f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (!f || hdr[0] != kFloatMapMagic)
        throw InputError("read_float_map: bad magic in " + path.string());
    Image img(static_cast<int>(hdr[1]), static_cast<int>(hdr[2]), static_cast<int>(hdr[3]));
    std::vector<float> buf(img.size());
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw InputError("read_float_map: truncated file " + path.string());
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = buf[i];
    return img;
}

}  // namespace splatir
