#pragma once

#include <array>

#include "f3kit/blocks.hpp"

namespace f3kit {

// Four feature levels with strictly halving resolution: for an input of
// H x W (divisible by 32) the levels sit at H/4, H/8, H/16 and H/32, all
// projected to a common channel width.
struct FeaturePyramid {
    Tensor f2, f3, f4, f5;
};

struct EncoderConfig {
    int stem_width = 16;
    std::array<int, 4> stage_widths{16, 32, 64, 64};
    int out_channels = 64;
};

// stem (stride 2) + 4 stages of [3x3 s2 conv-bn-relu, 3x3 s1 conv-bn-relu],
// each stage output projected to the common width by a 1x1 convolution
struct EncoderParams {
    EncoderConfig cfg;
    ConvBn stem;
    std::array<ConvBn, 4> down;   // stride-2 half of each stage
    std::array<ConvBn, 4> keep;   // stride-1 half
    std::array<Conv, 4> proj;
};

EncoderParams make_encoder(const EncoderConfig& cfg, Rng& rng);

FeaturePyramid encode(EncoderParams& enc, const Tensor& image, BnMode mode);

void collect(EncoderParams& e, std::vector<ParamRef>& out);
void collect_buffers(EncoderParams& e, std::vector<BufferRef>& out);

}  // namespace f3kit
