#include "f3kit/decoder.hpp"

#include "f3kit/error.hpp"

namespace f3kit {

DecoderParams make_decoder(int channels, int n_decoders, bool share, Rng& rng) {
    DecoderParams d;
    int copies = share ? 1 : n_decoders;
    d.subs.reserve(copies);
    for (int i = 0; i < copies; ++i) {
        SubDecoder sd;
        sd.fuse45 = make_cross_fuse(channels, rng);
        sd.fuse34 = make_cross_fuse(channels, rng);
        sd.fuse23 = make_cross_fuse(channels, rng);
        sd.head = make_conv(channels, 1, 3, 1, 1, rng);
        d.subs.push_back(std::move(sd));
    }
    for (auto& h : d.aux_heads) h = make_conv(channels, 1, 3, 1, 1, rng);
    return d;
}

RefinedPyramid run_sub_decoder(SubDecoder& sd, const FeaturePyramid& f, BnMode mode,
                               FusionMode fusion, int* fuse_calls) {
    auto [r4, a45] = cross_fuse(sd.fuse45, f.f4, f.f5, mode, fusion);
    auto [r3, a345] = cross_fuse(sd.fuse34, f.f3, a45, mode, fusion);
    auto [r2, p] = cross_fuse(sd.fuse23, f.f2, a345, mode, fusion);
    if (fuse_calls) *fuse_calls += 3;
    RefinedPyramid out;
    out.f2 = r2;
    out.f3 = r3;
    out.f4 = r4;
    out.f5 = bilinear_resize(a45, f.f5.shape().h, f.f5.shape().w);
    out.agg = p;
    return out;
}

DecodeResult decode(DecoderParams& dec, const FeaturePyramid& f, int n_decoders, BnMode mode,
                    FusionMode fusion) {
    if (n_decoders < 1) {
        fail(ErrorKind::usage,
             "decode: need at least one sub-decoder, got " + std::to_string(n_decoders));
    }
    if (dec.subs.empty()) fail(ErrorKind::usage, "decode: decoder has no parameters");
    int in_h = f.f2.shape().h * 4;
    int in_w = f.f2.shape().w * 4;

    DecodeResult out;
    RefinedPyramid r;
    for (int i = 0; i < n_decoders; ++i) {
        FeaturePyramid cur;
        if (i == 0) {
            cur = f;
        } else {
            // feed the previous aggregate back into every refined level
            cur.f2 = add(r.f2, bilinear_resize(r.agg, r.f2.shape().h, r.f2.shape().w));
            cur.f3 = add(r.f3, bilinear_resize(r.agg, r.f3.shape().h, r.f3.shape().w));
            cur.f4 = add(r.f4, bilinear_resize(r.agg, r.f4.shape().h, r.f4.shape().w));
            cur.f5 = add(r.f5, bilinear_resize(r.agg, r.f5.shape().h, r.f5.shape().w));
            out.feedback_adds += 4;
        }
        SubDecoder& sd = dec.subs[std::min<size_t>(i, dec.subs.size() - 1)];
        r = run_sub_decoder(sd, cur, mode, fusion, &out.fuse_calls);
        out.maps.push_back(bilinear_resize(apply(sd.head, r.agg), in_h, in_w));
        if (i == 0) {
            const Tensor* levels[4] = {&r.f2, &r.f3, &r.f4, &r.f5};
            for (int j = 0; j < 4; ++j) {
                out.aux[j] = bilinear_resize(apply(dec.aux_heads[j], *levels[j]), in_h, in_w);
            }
        }
    }
    return out;
}

void collect(DecoderParams& d, std::vector<ParamRef>& out) {
    for (size_t i = 0; i < d.subs.size(); ++i) {
        std::string p = "decoder.sub" + std::to_string(i + 1);
        collect(d.subs[i].fuse45, p + ".fuse45", out);
        collect(d.subs[i].fuse34, p + ".fuse34", out);
        collect(d.subs[i].fuse23, p + ".fuse23", out);
        collect(d.subs[i].head, p + ".head", ParamGroup::decoder, out);
    }
    for (int j = 0; j < 4; ++j) {
        collect(d.aux_heads[j], "decoder.aux" + std::to_string(j + 2), ParamGroup::decoder, out);
    }
}

void collect_buffers(DecoderParams& d, std::vector<BufferRef>& out) {
    for (size_t i = 0; i < d.subs.size(); ++i) {
        std::string p = "decoder.sub" + std::to_string(i + 1);
        collect_buffers(d.subs[i].fuse45, p + ".fuse45", out);
        collect_buffers(d.subs[i].fuse34, p + ".fuse34", out);
        collect_buffers(d.subs[i].fuse23, p + ".fuse23", out);
    }
}

}  // namespace f3kit
