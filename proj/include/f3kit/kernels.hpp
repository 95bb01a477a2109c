#pragma once

#include <cstdint>

namespace f3kit::kernels {

// Square-kernel 2-D convolution geometry, NCHW layout.
struct ConvDims {
    int n, ci, hi, wi;  // input
    int co, ho, wo;     // output
    int k, stride, pad;
};

// One kernel variant. Every variant must produce bitwise-identical results:
// per-element accumulation order is fixed (bias, then ci-major, kh, kw), all
// multiply-adds are fused (std::fma in scalar code, FMA intrinsics in vector
// code), and reductions that a vector unit would split across lanes are
// lane-split the same way in the scalar reference.
struct Table {
    const char* name;

    // y = conv(x, w) + bias, overwrites y
    void (*conv2d_fwd)(const ConvDims&, const double* x, const double* w,
                       const double* bias, double* y);
    // dx += conv-transpose(dy, w)
    void (*conv2d_dx)(const ConvDims&, const double* dy, const double* w, double* dx);
    // dw += correlate(x, dy); db += reduce(dy)
    void (*conv2d_dw)(const ConvDims&, const double* dy, const double* x,
                      double* dw, double* db);

    void (*add)(const double* a, const double* b, double* y, int64_t n);
    void (*mul)(const double* a, const double* b, double* y, int64_t n);
    void (*relu)(const double* x, double* y, int64_t n);
    // dx += dy where x > 0
    void (*relu_dx)(const double* x, const double* dy, double* dx, int64_t n);
    // y += a * b (elementwise)
    void (*mul_acc)(const double* a, const double* b, double* y, int64_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, int64_t n);
};

const Table& scalar_table();
const Table* avx2_table();  // nullptr when not built in or not supported by the CPU

// Runtime selection: best available variant, overridable with
// F3KIT_SIMD=scalar|avx2|auto (checked once per process).
const Table& active();

}  // namespace f3kit::kernels
