#pragma once

#include <string>
#include <vector>

#include "f3kit/rng.hpp"
#include "f3kit/tensor.hpp"

namespace f3kit {

// Plain convolution layer; weight (co,ci,k,k), bias (1,co,1,1).
struct Conv {
    Tensor w, b;
    int stride = 1;
    int pad = 0;
};

struct BatchNorm {
    Tensor gamma, beta;
    BnStats running;
    double momentum = 0.1;
    double eps = 1e-5;
};

// conv -> batch_norm -> relu
struct ConvBn {
    Conv conv;
    BatchNorm bn;
};

Conv make_conv(int ci, int co, int k, int stride, int pad, Rng& rng);
ConvBn make_conv_bn(int ci, int co, int k, int stride, int pad, Rng& rng);

Tensor apply(const Conv& c, const Tensor& x);
Tensor apply(ConvBn& c, const Tensor& x, BnMode mode);

enum class ParamGroup { encoder, decoder };

struct ParamRef {
    std::string name;
    Tensor tensor;
    bool decay;  // weight decay applies to conv weights only
    ParamGroup group;
};

struct BufferRef {
    std::string name;
    std::vector<double>* data;
};

void collect(Conv& c, const std::string& prefix, ParamGroup g, std::vector<ParamRef>& out);
void collect(ConvBn& c, const std::string& prefix, ParamGroup g, std::vector<ParamRef>& out);
void collect_buffers(ConvBn& c, const std::string& prefix, std::vector<BufferRef>& out);

}  // namespace f3kit
