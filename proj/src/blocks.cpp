#include "f3kit/blocks.hpp"

#include <cmath>

namespace f3kit {

Conv make_conv(int ci, int co, int k, int stride, int pad, Rng& rng) {
    // Kaiming fan-in scaling, zero bias
    double sigma = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
    Shape ws{co, ci, k, k};
    std::vector<double> w(ws.numel());
    for (auto& v : w) v = sigma * rng.normal();
    Conv c;
    c.w = Tensor::from_vector(ws, std::move(w), true);
    c.b = Tensor::zeros({1, co, 1, 1}, true);
    c.stride = stride;
    c.pad = pad;
    return c;
}

ConvBn make_conv_bn(int ci, int co, int k, int stride, int pad, Rng& rng) {
    ConvBn cb;
    cb.conv = make_conv(ci, co, k, stride, pad, rng);
    cb.bn.gamma = Tensor::full({1, co, 1, 1}, 1.0, true);
    cb.bn.beta = Tensor::zeros({1, co, 1, 1}, true);
    cb.bn.running = BnStats::make(co);
    return cb;
}

Tensor apply(const Conv& c, const Tensor& x) {
    return conv2d(x, c.w, c.b, c.stride, c.pad);
}

Tensor apply(ConvBn& c, const Tensor& x, BnMode mode) {
    Tensor y = conv2d(x, c.conv.w, c.conv.b, c.conv.stride, c.conv.pad);
    y = batch_norm(y, c.bn.gamma, c.bn.beta, mode, c.bn.running, c.bn.momentum, c.bn.eps);
    return relu(y);
}

void collect(Conv& c, const std::string& prefix, ParamGroup g, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", c.w, true, g});
    out.push_back({prefix + ".bias", c.b, false, g});
}

void collect(ConvBn& c, const std::string& prefix, ParamGroup g, std::vector<ParamRef>& out) {
    collect(c.conv, prefix + ".conv", g, out);
    out.push_back({prefix + ".bn.gamma", c.bn.gamma, false, g});
    out.push_back({prefix + ".bn.beta", c.bn.beta, false, g});
}

void collect_buffers(ConvBn& c, const std::string& prefix, std::vector<BufferRef>& out) {
    out.push_back({prefix + ".bn.running_mean", &c.bn.running.mean});
    out.push_back({prefix + ".bn.running_var", &c.bn.running.var});
}

}  // namespace f3kit
