#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "f3kit/rng.hpp"
#include "f3kit/tensor.hpp"

namespace f3kit {

struct Sample {
    Tensor image;  // (1,3,h,w), values in [0,1]
    Tensor mask;   // (1,1,h,w), values in {0,1}
    std::string id;
};

struct ManifestEntry {
    std::filesystem::path image, mask;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::string split;
};

// Renders `count` images of anti-aliased shapes (ellipses, rounded
// rectangles, spiked stars) over low-frequency noise backgrounds with faint
// distractors, plus exact binary masks. Foreground fraction is kept inside
// [0.05, 0.6]. Layout: root/images/NNNNN.png, root/masks/NNNNN.png and a
// tab-separated manifest.tsv. Fully determined by the seed.
void generate_dataset(const std::filesystem::path& root, int count, int size, uint64_t seed);

DatasetManifest scan_dataset(const std::filesystem::path& root);
DatasetManifest read_manifest(const std::filesystem::path& file);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& file);

Sample load_pair(const std::filesystem::path& image, const std::filesystem::path& mask);

Sample hflip(const Sample& s);
// random window of the given linear ratio, resized back to the original size
Sample random_crop(const Sample& s, double ratio, Rng& rng);
// both maps resized to round32(scale * size); the mask is re-binarized at 0.5
Sample multiscale(const Sample& s, double scale);

Sample resize_sample(const Sample& s, int h, int w);

}  // namespace f3kit
