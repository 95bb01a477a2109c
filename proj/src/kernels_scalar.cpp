// Reference kernels. These define the numeric contract: every other variant
// must reproduce them bit-for-bit. Reductions that vector units split across
// lanes (weight gradients, bias gradients) are written lane-split here too,
// with the combine order fixed by detail::combine_lanes.

#include <cmath>

#include "kernels_common.hpp"

namespace f3kit::kernels {
namespace {

using detail::combine_lanes;
using detail::pad_input;
using detail::dilate_grad;
using detail::scratch;

void conv2d_fwd(const ConvDims& d, const double* x, const double* w, const double* bias,
                double* y) {
    int kk = d.k * d.k;
    for (int n = 0; n < d.n; ++n) {
        auto xp = pad_input(d, x + static_cast<int64_t>(n) * d.ci * d.hi * d.wi, 0, 0);
        for (int co = 0; co < d.co; ++co) {
            const double* wco = w + static_cast<int64_t>(co) * d.ci * kk;
            for (int oh = 0; oh < d.ho; ++oh) {
                double* yrow = y + ((static_cast<int64_t>(n) * d.co + co) * d.ho + oh) * d.wo;
                for (int ow = 0; ow < d.wo; ++ow) {
                    double acc = bias[co];
                    for (int ci = 0; ci < d.ci; ++ci) {
                        const double* wci = wco + static_cast<int64_t>(ci) * kk;
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* xrow = xp.at(ci, oh * d.stride + kh);
                            const double* wk = wci + kh * d.k;
                            for (int kw = 0; kw < d.k; ++kw) {
                                acc = std::fma(wk[kw], xrow[ow * d.stride + kw], acc);
                            }
                        }
                    }
                    yrow[ow] = acc;
                }
            }
        }
    }
}

void conv2d_dx(const ConvDims& d, const double* dy, const double* w, double* dx) {
    int kk = d.k * d.k;
    for (int n = 0; n < d.n; ++n) {
        auto dyd = dilate_grad(d, dy + static_cast<int64_t>(n) * d.co * d.ho * d.wo, 0, 1);
        for (int ci = 0; ci < d.ci; ++ci) {
            for (int ih = 0; ih < d.hi; ++ih) {
                double* dxrow = dx + ((static_cast<int64_t>(n) * d.ci + ci) * d.hi + ih) * d.wi;
                for (int iw = 0; iw < d.wi; ++iw) {
                    double acc = 0.0;
                    for (int co = 0; co < d.co; ++co) {
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* drow = dyd.at(co, ih + d.k - 1 - kh);
                            const double* wk = w + ((static_cast<int64_t>(co) * d.ci + ci) * d.k + kh) * d.k;
                            for (int kw = 0; kw < d.k; ++kw) {
                                acc = std::fma(wk[kw], drow[iw + d.k - 1 - kw], acc);
                            }
                        }
                    }
                    dxrow[iw] += acc;
                }
            }
        }
    }
}

void conv2d_dw(const ConvDims& d, const double* dy, const double* x, double* dw, double* db) {
    int kk = d.k * d.k;
    auto& acc = scratch(3);
    acc.assign(static_cast<size_t>(d.co) * d.ci * kk * 4 + static_cast<size_t>(d.co) * 4, 0.0);
    double* wacc = acc.data();
    double* bacc = acc.data() + static_cast<size_t>(d.co) * d.ci * kk * 4;

    for (int n = 0; n < d.n; ++n) {
        auto xp = pad_input(d, x + static_cast<int64_t>(n) * d.ci * d.hi * d.wi, 0, 0);
        const double* dyn = dy + static_cast<int64_t>(n) * d.co * d.ho * d.wo;
        for (int co = 0; co < d.co; ++co) {
            double* ba = bacc + static_cast<size_t>(co) * 4;
            for (int oh = 0; oh < d.ho; ++oh) {
                const double* dyrow = dyn + (static_cast<int64_t>(co) * d.ho + oh) * d.wo;
                for (int ow = 0; ow < d.wo; ++ow) ba[ow & 3] += dyrow[ow];
            }
            for (int ci = 0; ci < d.ci; ++ci) {
                double* wa = wacc + (static_cast<size_t>(co) * d.ci + ci) * kk * 4;
                for (int oh = 0; oh < d.ho; ++oh) {
                    const double* dyrow = dyn + (static_cast<int64_t>(co) * d.ho + oh) * d.wo;
                    for (int ow = 0; ow < d.wo; ++ow) {
                        int lane = ow & 3;
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* xrow = xp.at(ci, oh * d.stride + kh);
                            for (int kw = 0; kw < d.k; ++kw) {
                                wa[(kh * d.k + kw) * 4 + lane] =
                                    std::fma(dyrow[ow], xrow[ow * d.stride + kw],
                                             wa[(kh * d.k + kw) * 4 + lane]);
                            }
                        }
                    }
                }
            }
        }
    }

    for (int co = 0; co < d.co; ++co) {
        db[co] += combine_lanes(bacc + static_cast<size_t>(co) * 4);
        for (int ci = 0; ci < d.ci; ++ci) {
            for (int t = 0; t < kk; ++t) {
                dw[(static_cast<int64_t>(co) * d.ci + ci) * kk + t] +=
                    combine_lanes(wacc + ((static_cast<size_t>(co) * d.ci + ci) * kk + t) * 4);
            }
        }
    }
}

void add(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void relu(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_dx(const double* x, const double* dy, double* dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

void mul_acc(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = std::fma(a[i], b[i], y[i]);
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace

const Table& scalar_table() {
    static const Table t{"scalar", conv2d_fwd, conv2d_dx, conv2d_dw,
                         add,      mul,       relu,      relu_dx,
                         mul_acc,  axpy};
    return t;
}

}  // namespace f3kit::kernels
