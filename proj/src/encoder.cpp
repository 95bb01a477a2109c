#include "f3kit/encoder.hpp"

#include "f3kit/error.hpp"

namespace f3kit {

EncoderParams make_encoder(const EncoderConfig& cfg, Rng& rng) {
    EncoderParams e;
    e.cfg = cfg;
    e.stem = make_conv_bn(3, cfg.stem_width, 3, 2, 1, rng);
    int ci = cfg.stem_width;
    for (int i = 0; i < 4; ++i) {
        int co = cfg.stage_widths[i];
        e.down[i] = make_conv_bn(ci, co, 3, 2, 1, rng);
        e.keep[i] = make_conv_bn(co, co, 3, 1, 1, rng);
        e.proj[i] = make_conv(co, cfg.out_channels, 1, 1, 0, rng);
        ci = co;
    }
    return e;
}

FeaturePyramid encode(EncoderParams& enc, const Tensor& image, BnMode mode) {
    const Shape& s = image.shape();
    if (s.c != 3) {
        fail(ErrorKind::usage, "encode: expected a 3-channel image, got " + s.str());
    }
    if (s.h % 32 != 0 || s.w % 32 != 0) {
        fail(ErrorKind::usage, "encode: input size " + std::to_string(s.h) + "x" +
                                   std::to_string(s.w) + " must be divisible by 32");
    }
    Tensor t = apply(enc.stem, image, mode);  // H/2
    FeaturePyramid p;
    Tensor* levels[4] = {&p.f2, &p.f3, &p.f4, &p.f5};
    for (int i = 0; i < 4; ++i) {
        t = apply(enc.down[i], t, mode);
        t = apply(enc.keep[i], t, mode);
        *levels[i] = apply(enc.proj[i], t);
    }
    return p;
}

void collect(EncoderParams& e, std::vector<ParamRef>& out) {
    collect(e.stem, "encoder.stem", ParamGroup::encoder, out);
    for (int i = 0; i < 4; ++i) {
        std::string p = "encoder.stage" + std::to_string(i + 1);
        collect(e.down[i], p + ".down", ParamGroup::encoder, out);
        collect(e.keep[i], p + ".keep", ParamGroup::encoder, out);
        collect(e.proj[i], p + ".proj", ParamGroup::encoder, out);
    }
}

void collect_buffers(EncoderParams& e, std::vector<BufferRef>& out) {
    collect_buffers(e.stem, "encoder.stem", out);
    for (int i = 0; i < 4; ++i) {
        std::string p = "encoder.stage" + std::to_string(i + 1);
        collect_buffers(e.down[i], p + ".down", out);
        collect_buffers(e.keep[i], p + ".keep", out);
    }
}

}  // namespace f3kit
