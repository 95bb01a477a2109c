#include "f3kit/fusion.hpp"

#include "f3kit/error.hpp"

namespace f3kit {

CrossFuse make_cross_fuse(int channels, Rng& rng) {
    CrossFuse p;
    p.entry_low = make_conv(channels, channels, 3, 1, 1, rng);
    p.entry_high = make_conv(channels, channels, 3, 1, 1, rng);
    p.g_low = make_conv_bn(channels, channels, 3, 1, 1, rng);
    p.g_high = make_conv_bn(channels, channels, 3, 1, 1, rng);
    p.m_low = make_conv_bn(channels, channels, 3, 1, 1, rng);
    p.m_high = make_conv_bn(channels, channels, 3, 1, 1, rng);
    p.restore_low = make_conv(channels, channels, 3, 1, 1, rng);
    p.restore_high = make_conv(channels, channels, 3, 1, 1, rng);
    return p;
}

FusedPair cross_fuse(CrossFuse& p, const Tensor& f_low, const Tensor& f_high, BnMode mode,
                     FusionMode fusion) {
    const Shape& ls = f_low.shape();
    const Shape& hs = f_high.shape();
    if (ls.c != hs.c) {
        fail(ErrorKind::usage,
             "cross_fuse: channel mismatch " + ls.str() + " vs " + hs.str());
    }
    if (hs.h > ls.h || hs.w > ls.w) {
        fail(ErrorKind::usage, "cross_fuse: high-level input " + hs.str() +
                                   " must not exceed low-level resolution " + ls.str());
    }
    Tensor up = bilinear_resize(f_high, ls.h, ls.w);
    Tensor l0 = apply(p.entry_low, f_low);
    Tensor h0 = apply(p.entry_high, up);
    Tensor l1, h1;
    if (fusion == FusionMode::cross) {
        Tensor shared = mul(apply(p.g_low, l0, mode), apply(p.g_high, h0, mode));
        l1 = add(l0, apply(p.m_low, shared, mode));
        h1 = add(h0, apply(p.m_high, shared, mode));
    } else {
        Tensor s = add(l0, h0);
        l1 = s;
        h1 = s;
    }
    return {apply(p.restore_low, l1), apply(p.restore_high, h1)};
}

void collect(CrossFuse& p, const std::string& prefix, std::vector<ParamRef>& out) {
    collect(p.entry_low, prefix + ".entry_low", ParamGroup::decoder, out);
    collect(p.entry_high, prefix + ".entry_high", ParamGroup::decoder, out);
    collect(p.g_low, prefix + ".g_low", ParamGroup::decoder, out);
    collect(p.g_high, prefix + ".g_high", ParamGroup::decoder, out);
    collect(p.m_low, prefix + ".m_low", ParamGroup::decoder, out);
    collect(p.m_high, prefix + ".m_high", ParamGroup::decoder, out);
    collect(p.restore_low, prefix + ".restore_low", ParamGroup::decoder, out);
    collect(p.restore_high, prefix + ".restore_high", ParamGroup::decoder, out);
}

void collect_buffers(CrossFuse& p, const std::string& prefix, std::vector<BufferRef>& out) {
    collect_buffers(p.g_low, prefix + ".g_low", out);
    collect_buffers(p.g_high, prefix + ".g_high", out);
    collect_buffers(p.m_low, prefix + ".m_low", out);
    collect_buffers(p.m_high, prefix + ".m_high", out);
}

}  // namespace f3kit
