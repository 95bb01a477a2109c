#include "f3kit/model.hpp"

namespace f3kit {

Model make_model(const ModelConfig& cfg, uint64_t seed) {
    Model m;
    m.cfg = cfg;
    Rng rng(seed);
    EncoderConfig ec{cfg.stem_width, cfg.stage_widths, cfg.channels};
    m.encoder = make_encoder(ec, rng);
    m.decoder = make_decoder(cfg.channels, cfg.decoders, cfg.share_decoders, rng);
    return m;
}

DecodeResult forward(Model& m, const Tensor& image, BnMode mode) {
    FeaturePyramid pyr = encode(m.encoder, image, mode);
    return decode(m.decoder, pyr, m.cfg.decoders, mode, m.cfg.fusion);
}

Tensor infer_map(Model& m, const Tensor& image) {
    NoGradGuard guard;
    DecodeResult res = forward(m, image, BnMode::eval);
    return sigmoid(res.maps.back());
}

std::vector<ParamRef> named_params(Model& m) {
    std::vector<ParamRef> out;
    collect(m.encoder, out);
    collect(m.decoder, out);
    return out;
}

std::vector<BufferRef> named_buffers(Model& m) {
    std::vector<BufferRef> out;
    collect_buffers(m.encoder, out);
    collect_buffers(m.decoder, out);
    return out;
}

}  // namespace f3kit
