#pragma once

#include "f3kit/decoder.hpp"

namespace f3kit {

struct ModelConfig {
    int channels = 64;
    int stem_width = 16;
    std::array<int, 4> stage_widths{16, 32, 64, 64};
    int decoders = 2;
    FusionMode fusion = FusionMode::cross;
    bool share_decoders = false;
    int train_size = 96;
};

struct Model {
    ModelConfig cfg;
    EncoderParams encoder;
    DecoderParams decoder;
};

Model make_model(const ModelConfig& cfg, uint64_t seed);

DecodeResult forward(Model& m, const Tensor& image, BnMode mode);

// sigmoid of the last stage's map; eval mode, no history recorded
Tensor infer_map(Model& m, const Tensor& image);

std::vector<ParamRef> named_params(Model& m);
std::vector<BufferRef> named_buffers(Model& m);

}  // namespace f3kit
