#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace f3kit {

struct Gray8 {
    int h = 0, w = 0;
    std::vector<uint8_t> v;  // h*w
};

struct Rgb8 {
    int h = 0, w = 0;
    std::vector<uint8_t> v;  // h*w*3, interleaved
};

// single-channel image with values in [0,1]
struct Gray {
    int h = 0, w = 0;
    std::vector<double> v;
};

// PNG or PGM/PPM, decided by file magic when reading and by extension when
// writing (.png vs .pgm/.ppm). Grayscale loads reject color inputs.
Gray8 load_gray8(const std::filesystem::path& path);
Rgb8 load_rgb8(const std::filesystem::path& path);  // grayscale inputs are expanded
void save_gray8(const Gray8& img, const std::filesystem::path& path);
void save_rgb8(const Rgb8& img, const std::filesystem::path& path);

Gray to_unit(const Gray8& img);
Gray8 to_bytes(const Gray& img);  // round half up

}  // namespace f3kit
