#pragma once

#include <cstring>
#include <vector>

#include "f3kit/kernels.hpp"

// Scratch-buffer plumbing shared by the kernel variants. Both variants build
// identical padded copies, so the only difference between them is the
// arithmetic loop itself.
namespace f3kit::kernels::detail {

struct Plane {
    double* data;
    int c, h, w, w_alloc;
    double* at(int ci, int row) { return data + (static_cast<int64_t>(ci) * h + row) * w_alloc; }
    const double* at(int ci, int row) const {
        return data + (static_cast<int64_t>(ci) * h + row) * w_alloc;
    }
};

inline std::vector<double>& scratch(int which) {
    static thread_local std::vector<double> bufs[4];
    return bufs[which];
}

// Zero-padded copy of one input image: (ci, hi+2p, wi+2p) plus `slack` spare
// zero columns so over-wide vector loads stay in-bounds.
inline Plane pad_input(const ConvDims& d, const double* x_n, int slack, int which) {
    int hp = d.hi + 2 * d.pad;
    int wp = d.wi + 2 * d.pad;
    int wa = wp + slack;
    auto& buf = scratch(which);
    buf.assign(static_cast<size_t>(d.ci) * hp * wa, 0.0);
    Plane p{buf.data(), d.ci, hp, wp, wa};
    for (int c = 0; c < d.ci; ++c) {
        const double* src = x_n + static_cast<int64_t>(c) * d.hi * d.wi;
        for (int r = 0; r < d.hi; ++r) {
            std::memcpy(p.at(c, r + d.pad) + d.pad, src + static_cast<int64_t>(r) * d.wi,
                        sizeof(double) * d.wi);
        }
    }
    return p;
}

// Zero-dilated, zero-padded copy of one gradient image, laid out so that
//   dx[ih,iw] = sum_{co,kh,kw} w[co,ci,kh,kw] * dyd[co, ih + k-1-kh, iw + k-1-kw]
// holds for any stride/pad combination.
inline Plane dilate_grad(const ConvDims& d, const double* dy_n, int slack, int which) {
    int hd = d.hi + d.k - 1;
    int wd = d.wi + d.k - 1;
    int wa = wd + slack;
    auto& buf = scratch(which);
    buf.assign(static_cast<size_t>(d.co) * hd * wa, 0.0);
    Plane p{buf.data(), d.co, hd, wd, wa};
    int off = d.k - 1 - d.pad;
    for (int c = 0; c < d.co; ++c) {
        const double* src = dy_n + static_cast<int64_t>(c) * d.ho * d.wo;
        for (int oh = 0; oh < d.ho; ++oh) {
            int row = oh * d.stride + off;
            if (row < 0 || row >= hd) continue;
            double* dst = p.at(c, row);
            for (int ow = 0; ow < d.wo; ++ow) {
                int col = ow * d.stride + off;
                if (col < 0 || col >= wd) continue;
                dst[col] = src[static_cast<int64_t>(oh) * d.wo + ow];
            }
        }
    }
    return p;
}

// Copy of one gradient image with rows zero-extended to a multiple of four,
// so the weight-gradient reduction needs no tail handling.
inline Plane rowpad_grad(const ConvDims& d, const double* dy_n, int which) {
    int wo4 = (d.wo + 3) & ~3;
    auto& buf = scratch(which);
    buf.assign(static_cast<size_t>(d.co) * d.ho * wo4, 0.0);
    Plane p{buf.data(), d.co, d.ho, d.wo, wo4};
    for (int c = 0; c < d.co; ++c) {
        const double* src = dy_n + static_cast<int64_t>(c) * d.ho * d.wo;
        for (int r = 0; r < d.ho; ++r) {
            std::memcpy(p.at(c, r), src + static_cast<int64_t>(r) * d.wo, sizeof(double) * d.wo);
        }
    }
    return p;
}

// Lane accumulators for reductions: four partial sums combined as
// (a0+a2)+(a1+a3), matching the vector variant's horizontal add.
inline double combine_lanes(const double a[4]) {
    return (a[0] + a[2]) + (a[1] + a[3]);
}

}  // namespace f3kit::kernels::detail
