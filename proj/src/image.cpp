#include "f3kit/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "f3kit/error.hpp"

namespace f3kit {

namespace {

bool has_png_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0;
}

struct PngRead {
    png_image im{};
    std::vector<uint8_t> pixels;
};

PngRead read_png(const std::filesystem::path& path, png_uint_32 format) {
    PngRead r;
    r.im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&r.im, path.string().c_str())) {
        fail(ErrorKind::data_format, "corrupt PNG " + path.string() + ": " + r.im.message);
    }
    bool color = (r.im.format & PNG_FORMAT_FLAG_COLOR) != 0;
    if (format == PNG_FORMAT_GRAY && color) {
        png_image_free(&r.im);
        fail(ErrorKind::data_format, "expected a grayscale image, got color: " + path.string());
    }
    r.im.format = format;
    size_t stride = PNG_IMAGE_ROW_STRIDE(r.im);
    r.pixels.resize(PNG_IMAGE_BUFFER_SIZE(r.im, stride));
    if (!png_image_finish_read(&r.im, nullptr, r.pixels.data(), static_cast<png_int_32>(stride),
                               nullptr)) {
        fail(ErrorKind::data_format, "corrupt PNG " + path.string() + ": " + r.im.message);
    }
    return r;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, int h, int w,
               const uint8_t* pixels) {
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(w);
    im.height = static_cast<png_uint_32>(h);
    im.format = format;
    if (!png_image_write_to_file(&im, path.string().c_str(), 0, pixels, 0, nullptr)) {
        fail(ErrorKind::io, "cannot write " + path.string() + ": " + im.message);
    }
}

// PGM (P5) / PPM (P6), 8-bit binary
struct PnmHeader {
    char magic;
    int w, h;
};

PnmHeader read_pnm_header(std::ifstream& in, const std::filesystem::path& path) {
    auto next_token = [&]() -> std::string {
        std::string tok;
        int ch;
        while ((ch = in.get()) != EOF) {
            if (ch == '#') {
                while ((ch = in.get()) != EOF && ch != '\n') {
                }
            } else if (!std::isspace(ch)) {
                tok.push_back(static_cast<char>(ch));
                while ((ch = in.peek()) != EOF && !std::isspace(ch)) {
                    tok.push_back(static_cast<char>(in.get()));
                }
                return tok;
            }
        }
        fail(ErrorKind::data_format, "truncated PNM header in " + path.string());
    };
    std::string magic = next_token();
    if (magic != "P5" && magic != "P6") {
        fail(ErrorKind::data_format, "unsupported PNM magic '" + magic + "' in " + path.string());
    }
    int w = std::stoi(next_token());
    int h = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    if (w <= 0 || h <= 0 || maxval != 255) {
        fail(ErrorKind::data_format, "unsupported PNM geometry in " + path.string());
    }
    in.get();  // single whitespace before the raster
    return {magic[1], w, h};
}

std::vector<uint8_t> read_pnm_raster(std::ifstream& in, size_t count,
                                     const std::filesystem::path& path) {
    std::vector<uint8_t> data(count);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(in.gcount()) != count) {
        fail(ErrorKind::data_format, "truncated PNM raster in " + path.string());
    }
    return data;
}

bool is_pnm_ext(const std::filesystem::path& path) {
    auto e = path.extension().string();
    return e == ".pgm" || e == ".ppm";
}

}  // namespace

Gray8 load_gray8(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::io, "no such file: " + path.string());
    if (has_png_magic(path)) {
        PngRead r = read_png(path, PNG_FORMAT_GRAY);
        Gray8 img{static_cast<int>(r.im.height), static_cast<int>(r.im.width), std::move(r.pixels)};
        img.v.resize(static_cast<size_t>(img.h) * img.w);
        return img;
    }
    std::ifstream in(path, std::ios::binary);
    PnmHeader h = read_pnm_header(in, path);
    if (h.magic != '5') {
        fail(ErrorKind::data_format, "expected a grayscale image, got color: " + path.string());
    }
    Gray8 img{h.h, h.w, {}};
    img.v = read_pnm_raster(in, static_cast<size_t>(h.w) * h.h, path);
    return img;
}

Rgb8 load_rgb8(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::io, "no such file: " + path.string());
    if (has_png_magic(path)) {
        PngRead r = read_png(path, PNG_FORMAT_RGB);
        Rgb8 img{static_cast<int>(r.im.height), static_cast<int>(r.im.width), std::move(r.pixels)};
        img.v.resize(static_cast<size_t>(img.h) * img.w * 3);
        return img;
    }
    std::ifstream in(path, std::ios::binary);
    PnmHeader h = read_pnm_header(in, path);
    Rgb8 img{h.h, h.w, {}};
    if (h.magic == '6') {
        img.v = read_pnm_raster(in, static_cast<size_t>(h.w) * h.h * 3, path);
    } else {
        auto gray = read_pnm_raster(in, static_cast<size_t>(h.w) * h.h, path);
        img.v.resize(gray.size() * 3);
        for (size_t i = 0; i < gray.size(); ++i) {
            img.v[3 * i] = img.v[3 * i + 1] = img.v[3 * i + 2] = gray[i];
        }
    }
    return img;
}

void save_gray8(const Gray8& img, const std::filesystem::path& path) {
    if (is_pnm_ext(path)) {
        std::ofstream out(path, std::ios::binary);
        if (!out) fail(ErrorKind::io, "cannot write " + path.string());
        out << "P5\n" << img.w << " " << img.h << "\n255\n";
        out.write(reinterpret_cast<const char*>(img.v.data()),
                  static_cast<std::streamsize>(img.v.size()));
        if (!out) fail(ErrorKind::io, "write failed: " + path.string());
        return;
    }
    write_png(path, PNG_FORMAT_GRAY, img.h, img.w, img.v.data());
}

void save_rgb8(const Rgb8& img, const std::filesystem::path& path) {
    if (is_pnm_ext(path)) {
        std::ofstream out(path, std::ios::binary);
        if (!out) fail(ErrorKind::io, "cannot write " + path.string());
        out << "P6\n" << img.w << " " << img.h << "\n255\n";
        out.write(reinterpret_cast<const char*>(img.v.data()),
                  static_cast<std::streamsize>(img.v.size()));
        if (!out) fail(ErrorKind::io, "write failed: " + path.string());
        return;
    }
    write_png(path, PNG_FORMAT_RGB, img.h, img.w, img.v.data());
}

Gray to_unit(const Gray8& img) {
    Gray g{img.h, img.w, std::vector<double>(img.v.size())};
    for (size_t i = 0; i < img.v.size(); ++i) g.v[i] = img.v[i] / 255.0;
    return g;
}

Gray8 to_bytes(const Gray& img) {
    Gray8 g{img.h, img.w, std::vector<uint8_t>(img.v.size())};
    for (size_t i = 0; i < img.v.size(); ++i) {
        double q = std::floor(img.v[i] * 255.0 + 0.5);
        g.v[i] = static_cast<uint8_t>(std::clamp(q, 0.0, 255.0));
    }
    return g;
}

}  // namespace f3kit
