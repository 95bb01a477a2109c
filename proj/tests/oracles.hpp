#pragma once

// Brute-force reference computations used only by tests. These are written
// independently of the library kernels: plain loops, no shared helpers, no
// fused multiply-adds.

#include <algorithm>
#include <cmath>
#include <vector>

#include "f3kit/rng.hpp"
#include "f3kit/tensor.hpp"

namespace oracle {

// direct 6-loop convolution
inline f3kit::Tensor conv2d(const f3kit::Tensor& x, const f3kit::Tensor& w,
                            const f3kit::Tensor& b, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    int k = ws.h;
    int ho = (xs.h + 2 * pad - k) / stride + 1;
    int wo = (xs.w + 2 * pad - k) / stride + 1;
    std::vector<double> out(static_cast<size_t>(xs.n) * ws.n * ho * wo);
    size_t o = 0;
    for (int n = 0; n < xs.n; ++n) {
        for (int co = 0; co < ws.n; ++co) {
            for (int oh = 0; oh < ho; ++oh) {
                for (int ow = 0; ow < wo; ++ow) {
                    double acc = b.data()[co];
                    for (int ci = 0; ci < xs.c; ++ci) {
                        for (int kh = 0; kh < k; ++kh) {
                            for (int kw = 0; kw < k; ++kw) {
                                int ih = oh * stride + kh - pad;
                                int iw = ow * stride + kw - pad;
                                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                                acc += w.at(co, ci, kh, kw) * x.at(n, ci, ih, iw);
                            }
                        }
                    }
                    out[o++] = acc;
                }
            }
        }
    }
    return f3kit::Tensor::from_vector({xs.n, ws.n, ho, wo}, std::move(out));
}

// scalar half-pixel-center bilinear interpolation
inline double bilinear_at(const std::vector<double>& v, int h, int w, double sy, double sx) {
    auto clampi = [](int i, int lo, int hi) { return std::max(lo, std::min(i, hi)); };
    int y0 = clampi(static_cast<int>(std::floor(sy)), 0, h - 1);
    int x0 = clampi(static_cast<int>(std::floor(sx)), 0, w - 1);
    int y1 = clampi(y0 + 1, 0, h - 1);
    int x1 = clampi(x0 + 1, 0, w - 1);
    double fy = std::clamp(sy - std::floor(sy), 0.0, 1.0);
    double fx = std::clamp(sx - std::floor(sx), 0.0, 1.0);
    if (sy < 0) fy = 0;
    if (sx < 0) fx = 0;
    if (std::floor(sy) >= h - 1) fy = 0;
    if (std::floor(sx) >= w - 1) fx = 0;
    double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
    double w10 = fy * (1 - fx), w11 = fy * fx;
    return w00 * v[static_cast<size_t>(y0) * w + x0] + w01 * v[static_cast<size_t>(y0) * w + x1] +
           w10 * v[static_cast<size_t>(y1) * w + x0] + w11 * v[static_cast<size_t>(y1) * w + x1];
}

inline std::vector<double> bilinear_resize(const std::vector<double>& v, int h, int w, int oh,
                                           int ow) {
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double sy = (y + 0.5) * (static_cast<double>(h) / oh) - 0.5;
            double sx = (x + 0.5) * (static_cast<double>(w) / ow) - 0.5;
            out[static_cast<size_t>(y) * ow + x] = bilinear_at(v, h, w, sy, sx);
        }
    }
    return out;
}

// clipped-window box mean by direct summation
inline std::vector<double> window_mean(const std::vector<double>& v, int h, int w, int k) {
    int r = k / 2;
    std::vector<double> out(v.size());
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double sum = 0.0;
            int cnt = 0;
            for (int m = std::max(0, i - r); m <= std::min(h - 1, i + r); ++m) {
                for (int n = std::max(0, j - r); n <= std::min(w - 1, j + r); ++n) {
                    sum += v[static_cast<size_t>(m) * w + n];
                    ++cnt;
                }
            }
            out[static_cast<size_t>(i) * w + j] = sum / cnt;
        }
    }
    return out;
}

inline std::vector<double> alpha_map(const std::vector<double>& gt, int h, int w, int k) {
    std::vector<double> wm = window_mean(gt, h, w, k);
    std::vector<double> a(gt.size());
    for (size_t i = 0; i < gt.size(); ++i) a[i] = std::fabs(wm[i] - gt[i]);
    return a;
}

inline double sigmoid(double z) {
    return 1.0 / (1.0 + std::exp(-z));
}

// per-pixel weighted BCE, direct summation, one image
inline double wbce(const std::vector<double>& z, const std::vector<double>& g,
                   const std::vector<double>& a, double gamma) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        double p = sigmoid(z[i]);
        double ce = -(g[i] * std::log(p) + (1.0 - g[i]) * std::log(1.0 - p));
        double w = 1.0 + gamma * a[i];
        num += w * ce;
        den += w;
    }
    return num / den;
}

inline double wiou(const std::vector<double>& z, const std::vector<double>& g,
                   const std::vector<double>& a, double gamma) {
    double inter = 0.0, uni = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        double p = sigmoid(z[i]);
        double w = 1.0 + gamma * a[i];
        inter += g[i] * p * w;
        uni += (g[i] + p - g[i] * p) * w;
    }
    return 1.0 - inter / uni;
}

// confusion counts at one threshold of the 8-bit quantized prediction
struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline int quantize(double p) {
    return static_cast<int>(std::min(255.0, std::max(0.0, std::floor(p * 255.0 + 0.5))));
}

inline Confusion confusion_at(const std::vector<double>& pred, const std::vector<double>& gt,
                              int t) {
    Confusion c;
    for (size_t i = 0; i < pred.size(); ++i) {
        bool hit = quantize(pred[i]) >= t;
        bool pos = gt[i] >= 0.5;
        if (hit && pos) {
            ++c.tp;
        } else if (hit) {
            ++c.fp;
        } else if (pos) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

inline f3kit::Tensor random_tensor(f3kit::Shape s, f3kit::Rng& rng, double lo = -1.0,
                                   double hi = 1.0, bool rg = false) {
    std::vector<double> v(s.numel());
    for (auto& x : v) x = rng.uniform(lo, hi);
    return f3kit::Tensor::from_vector(s, std::move(v), rg);
}

inline std::vector<double> random_binary(size_t n, f3kit::Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return v;
}

}  // namespace oracle
