// AVX2+FMA kernels. Vectorization never changes the per-element accumulation
// sequence of the scalar reference: forward/input-gradient loops vectorize
// across independent output elements, and the weight/bias-gradient reduction
// uses the same four-lane split and combine order the reference does.

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

#include "kernels_common.hpp"

namespace f3kit::kernels {
namespace {

using detail::combine_lanes;
using detail::pad_input;
using detail::dilate_grad;
using detail::rowpad_grad;
using detail::scratch;

inline __m256d load_strided(const double* p, int s) {
    return s == 1 ? _mm256_loadu_pd(p) : _mm256_setr_pd(p[0], p[s], p[2 * s], p[3 * s]);
}

void conv2d_fwd(const ConvDims& d, const double* x, const double* w, const double* bias,
                double* y) {
    int kk = d.k * d.k;
    int s = d.stride;
    for (int n = 0; n < d.n; ++n) {
        auto xp = pad_input(d, x + static_cast<int64_t>(n) * d.ci * d.hi * d.wi, 0, 0);
        for (int co = 0; co < d.co; ++co) {
            const double* wco = w + static_cast<int64_t>(co) * d.ci * kk;
            __m256d bv = _mm256_set1_pd(bias[co]);
            for (int oh = 0; oh < d.ho; ++oh) {
                double* yrow = y + ((static_cast<int64_t>(n) * d.co + co) * d.ho + oh) * d.wo;
                int ow = 0;
                for (; ow + 8 <= d.wo; ow += 8) {
                    __m256d a0 = bv, a1 = bv;
                    for (int ci = 0; ci < d.ci; ++ci) {
                        const double* wci = wco + static_cast<int64_t>(ci) * kk;
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* xrow = xp.at(ci, oh * s + kh) + ow * s;
                            const double* wk = wci + kh * d.k;
                            for (int kw = 0; kw < d.k; ++kw) {
                                __m256d wv = _mm256_set1_pd(wk[kw]);
                                a0 = _mm256_fmadd_pd(wv, load_strided(xrow + kw, s), a0);
                                a1 = _mm256_fmadd_pd(wv, load_strided(xrow + 4 * s + kw, s), a1);
                            }
                        }
                    }
                    _mm256_storeu_pd(yrow + ow, a0);
                    _mm256_storeu_pd(yrow + ow + 4, a1);
                }
                for (; ow + 4 <= d.wo; ow += 4) {
                    __m256d a0 = bv;
                    for (int ci = 0; ci < d.ci; ++ci) {
                        const double* wci = wco + static_cast<int64_t>(ci) * kk;
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* xrow = xp.at(ci, oh * s + kh) + ow * s;
                            const double* wk = wci + kh * d.k;
                            for (int kw = 0; kw < d.k; ++kw) {
                                a0 = _mm256_fmadd_pd(_mm256_set1_pd(wk[kw]),
                                                     load_strided(xrow + kw, s), a0);
                            }
                        }
                    }
                    _mm256_storeu_pd(yrow + ow, a0);
                }
                for (; ow < d.wo; ++ow) {
                    double acc = bias[co];
                    for (int ci = 0; ci < d.ci; ++ci) {
                        const double* wci = wco + static_cast<int64_t>(ci) * kk;
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* xrow = xp.at(ci, oh * s + kh);
                            const double* wk = wci + kh * d.k;
                            for (int kw = 0; kw < d.k; ++kw) {
                                acc = std::fma(wk[kw], xrow[ow * s + kw], acc);
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
                int iw = 0;
                for (; iw + 4 <= d.wi; iw += 4) {
                    __m256d acc = _mm256_setzero_pd();
                    for (int co = 0; co < d.co; ++co) {
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* drow = dyd.at(co, ih + d.k - 1 - kh) + iw;
                            const double* wk =
                                w + ((static_cast<int64_t>(co) * d.ci + ci) * d.k + kh) * d.k;
                            for (int kw = 0; kw < d.k; ++kw) {
                                acc = _mm256_fmadd_pd(_mm256_set1_pd(wk[kw]),
                                                      _mm256_loadu_pd(drow + d.k - 1 - kw), acc);
                            }
                        }
                    }
                    _mm256_storeu_pd(dxrow + iw, _mm256_add_pd(_mm256_loadu_pd(dxrow + iw), acc));
                }
                for (; iw < d.wi; ++iw) {
                    double acc = 0.0;
                    for (int co = 0; co < d.co; ++co) {
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* drow = dyd.at(co, ih + d.k - 1 - kh);
                            const double* wk =
                                w + ((static_cast<int64_t>(co) * d.ci + ci) * d.k + kh) * d.k;
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
    int s = d.stride;
    int wo4 = (d.wo + 3) & ~3;
    auto& accbuf = scratch(3);
    accbuf.assign(static_cast<size_t>(d.co) * d.ci * kk * 4 + static_cast<size_t>(d.co) * 4, 0.0);
    double* wacc = accbuf.data();
    double* bacc = accbuf.data() + static_cast<size_t>(d.co) * d.ci * kk * 4;

    for (int n = 0; n < d.n; ++n) {
        // extra zero columns so over-wide strided loads stay in the buffer;
        // the padded-lane products are exact +0 and never change a lane sum
        auto xp = pad_input(d, x + static_cast<int64_t>(n) * d.ci * d.hi * d.wi, 4 * s + d.k, 0);
        auto dyp = rowpad_grad(d, dy + static_cast<int64_t>(n) * d.co * d.ho * d.wo, 2);
        for (int co = 0; co < d.co; ++co) {
            double* ba = bacc + static_cast<size_t>(co) * 4;
            __m256d bv = _mm256_loadu_pd(ba);
            for (int oh = 0; oh < d.ho; ++oh) {
                const double* dyrow = dyp.at(co, oh);
                for (int ow = 0; ow < wo4; ow += 4) {
                    bv = _mm256_add_pd(bv, _mm256_loadu_pd(dyrow + ow));
                }
            }
            _mm256_storeu_pd(ba, bv);
            for (int ci = 0; ci < d.ci; ++ci) {
                double* wa = wacc + (static_cast<size_t>(co) * d.ci + ci) * kk * 4;
                __m256d acc[9];
                for (int t = 0; t < kk; ++t) acc[t] = _mm256_loadu_pd(wa + t * 4);
                for (int oh = 0; oh < d.ho; ++oh) {
                    const double* dyrow = dyp.at(co, oh);
                    for (int ow = 0; ow < wo4; ow += 4) {
                        __m256d dyv = _mm256_loadu_pd(dyrow + ow);
                        for (int kh = 0; kh < d.k; ++kh) {
                            const double* xrow = xp.at(ci, oh * s + kh) + ow * s;
                            for (int kw = 0; kw < d.k; ++kw) {
                                acc[kh * d.k + kw] = _mm256_fmadd_pd(
                                    dyv, load_strided(xrow + kw, s), acc[kh * d.k + kw]);
                            }
                        }
                    }
                }
                for (int t = 0; t < kk; ++t) _mm256_storeu_pd(wa + t * 4, acc[t]);
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
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void relu(const double* x, double* y, int64_t n) {
    __m256d zero = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        // (v > 0) ? v : +0, matching the scalar reference at -0.0
        __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(y + i, _mm256_and_pd(mask, v));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_dx(const double* x, const double* dy, double* dx, int64_t n) {
    __m256d zero = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
        _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), g));
    }
    for (; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

void mul_acc(const double* a, const double* b, double* y, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                      _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, acc);
    }
    for (; i < n; ++i) y[i] = std::fma(a[i], b[i], y[i]);
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d acc = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, acc);
    }
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace

const Table* avx2_table() {
    if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
    static const Table t{"avx2",  conv2d_fwd, conv2d_dx, conv2d_dw, add,
                         mul,     relu,       relu_dx,   mul_acc,   axpy};
    return &t;
}

}  // namespace f3kit::kernels

#else

#include "f3kit/kernels.hpp"

namespace f3kit::kernels {
const Table* avx2_table() { return nullptr; }
}  // namespace f3kit::kernels

#endif
