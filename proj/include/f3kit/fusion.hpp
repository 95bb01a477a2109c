#pragma once

#include "f3kit/blocks.hpp"

namespace f3kit {

enum class FusionMode { cross, add };

// Symmetric two-branch fusion block. The high-resolution branch keeps its
// grid; the other input is bilinearly upsampled onto it. After per-branch
// entry convolutions the branches exchange information through the
// elementwise product of their transformed features, added back residually,
// and a final per-branch convolution restores the representation:
//
//   l0 = E_l(f_low)            h0 = E_h(up(f_high))
//   s  = G_l(l0) * G_h(h0)
//   out_low  = R_l(l0 + M_l(s))
//   out_high = R_h(h0 + M_h(s))
//
// FusionMode::add replaces the product path with plain addition of the two
// entry features (the baseline this block is compared against).
struct CrossFuse {
    Conv entry_low, entry_high;
    ConvBn g_low, g_high;   // transform before the product
    ConvBn m_low, m_high;   // transform of the product, per branch
    Conv restore_low, restore_high;
};

struct FusedPair {
    Tensor low, high;  // both at f_low's resolution
};

CrossFuse make_cross_fuse(int channels, Rng& rng);

FusedPair cross_fuse(CrossFuse& p, const Tensor& f_low, const Tensor& f_high, BnMode mode,
                     FusionMode fusion = FusionMode::cross);

void collect(CrossFuse& p, const std::string& prefix, std::vector<ParamRef>& out);
void collect_buffers(CrossFuse& p, const std::string& prefix, std::vector<BufferRef>& out);

}  // namespace f3kit
