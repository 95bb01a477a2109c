#pragma once

#include <array>
#include <vector>

#include "f3kit/encoder.hpp"
#include "f3kit/fusion.hpp"

namespace f3kit {

// One cascade stage: bottom-up aggregation of the pyramid through three
// fusion blocks plus a 3x3 single-channel head on the aggregate.
struct SubDecoder {
    CrossFuse fuse45, fuse34, fuse23;
    Conv head;
};

struct DecoderParams {
    std::vector<SubDecoder> subs;
    std::array<Conv, 4> aux_heads;  // multi-level supervision, 3x3 -> 1 channel
};

// Refined per-level features (at their native resolutions) and the
// aggregated feature at the finest pyramid resolution.
struct RefinedPyramid {
    Tensor f2, f3, f4, f5;
    Tensor agg;
};

struct DecodeResult {
    std::vector<Tensor> maps;    // one logit map per stage, input resolution
    std::array<Tensor, 4> aux;   // logit maps off stage 1's refined levels
    int fuse_calls = 0;
    int feedback_adds = 0;
};

DecoderParams make_decoder(int channels, int n_decoders, bool share, Rng& rng);

RefinedPyramid run_sub_decoder(SubDecoder& sd, const FeaturePyramid& f, BnMode mode,
                               FusionMode fusion, int* fuse_calls = nullptr);

// The cascade: stage 1 consumes the raw pyramid; every later stage adds the
// previous aggregate (downsampled per level) onto the refined features and
// runs again. Heads are upsampled to input resolution.
DecodeResult decode(DecoderParams& dec, const FeaturePyramid& f, int n_decoders, BnMode mode,
                    FusionMode fusion);

void collect(DecoderParams& d, std::vector<ParamRef>& out);
void collect_buffers(DecoderParams& d, std::vector<BufferRef>& out);

}  // namespace f3kit
