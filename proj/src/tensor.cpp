#include "f3kit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "f3kit/error.hpp"
#include "f3kit/kernels.hpp"

namespace f3kit {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    uint64_t seq = 0;
    std::vector<double> grad;  // leaves only
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(OpContext&)> backward_rule;

    bool is_leaf() const { return !backward_rule; }
};

namespace {
thread_local uint64_t g_seq = 0;
thread_local bool g_grad_enabled = true;
}  // namespace

struct Access {
    static std::shared_ptr<Node> node(const Tensor& t) { return t.node_; }
    static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }

    static std::shared_ptr<Node> make_leaf(Shape s, std::vector<double> v, bool rg) {
        auto n = std::make_shared<Node>();
        n->shape = s;
        n->value = std::move(v);
        n->requires_grad = rg;
        n->seq = ++g_seq;
        return n;
    }

    static Tensor make_op(Shape s, std::vector<double> v, std::vector<Tensor> inputs,
                          std::function<void(OpContext&)> rule) {
        auto n = std::make_shared<Node>();
        n->shape = s;
        n->value = std::move(v);
        n->seq = ++g_seq;
        if (g_grad_enabled) {
            bool any = false;
            for (const auto& t : inputs) any = any || t.requires_grad();
            if (any) {
                n->requires_grad = true;
                n->parents.reserve(inputs.size());
                for (const auto& t : inputs) n->parents.push_back(node(t));
                n->backward_rule = std::move(rule);
            }
        }
        return wrap(n);
    }
};

}  // namespace detail

using detail::Access;

NoGradGuard::NoGradGuard() : prev_(detail::g_grad_enabled) {
    detail::g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() {
    detail::g_grad_enabled = prev_;
}
bool grad_enabled() {
    return detail::g_grad_enabled;
}

static void check_shape(const Shape& s) {
    if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
        fail(ErrorKind::usage, "tensor shape " + s.str() + " must be positive in every dimension");
    }
}

Tensor Tensor::zeros(Shape s, bool rg) {
    check_shape(s);
    return Access::wrap(Access::make_leaf(s, std::vector<double>(s.numel(), 0.0), rg));
}

Tensor Tensor::full(Shape s, double v, bool rg) {
    check_shape(s);
    return Access::wrap(Access::make_leaf(s, std::vector<double>(s.numel(), v), rg));
}

Tensor Tensor::from_vector(Shape s, std::vector<double> data, bool rg) {
    check_shape(s);
    if (static_cast<int64_t>(data.size()) != s.numel()) {
        fail(ErrorKind::usage, "data length " + std::to_string(data.size()) +
                                   " does not match shape " + s.str());
    }
    return Access::wrap(Access::make_leaf(s, std::move(data), rg));
}

Tensor Tensor::scalar(double v, bool rg) {
    return from_vector({1, 1, 1, 1}, {v}, rg);
}

static const detail::Node& deref(const std::shared_ptr<detail::Node>& n) {
    if (!n) fail(ErrorKind::usage, "operation on an undefined tensor");
    return *n;
}

const Shape& Tensor::shape() const {
    return deref(node_).shape;
}
int64_t Tensor::numel() const {
    return deref(node_).shape.numel();
}
bool Tensor::requires_grad() const {
    return deref(node_).requires_grad;
}
uint64_t Tensor::id() const {
    return deref(node_).seq;
}
const double* Tensor::data() const {
    return deref(node_).value.data();
}
double* Tensor::data_mut() {
    deref(node_);
    return node_->value.data();
}
std::span<const double> Tensor::values() const {
    const auto& n = deref(node_);
    return {n.value.data(), n.value.size()};
}
double Tensor::item() const {
    const auto& n = deref(node_);
    if (n.shape.numel() != 1) {
        fail(ErrorKind::usage, "item() on non-scalar tensor of shape " + n.shape.str());
    }
    return n.value[0];
}
double Tensor::at(int n, int c, int h, int w) const {
    const auto& nd = deref(node_);
    const Shape& s = nd.shape;
    return nd.value[((static_cast<int64_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

const std::vector<double>& Tensor::grad() const {
    static const std::vector<double> empty;
    const auto& n = deref(node_);
    return n.grad.empty() ? empty : n.grad;
}

void Tensor::zero_grad() {
    deref(node_);
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    const auto& n = deref(node_);
    return Access::wrap(Access::make_leaf(n.shape, n.value, false));
}

Tensor Tensor::clone(bool rg) const {
    const auto& n = deref(node_);
    return Access::wrap(Access::make_leaf(n.shape, n.value, rg));
}

Tensor custom_op(Shape s, std::vector<double> v, std::vector<Tensor> inputs,
                 std::function<void(OpContext&)> rule) {
    return Access::make_op(s, std::move(v), std::move(inputs), std::move(rule));
}

bool all_finite(const Tensor& t) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// elementwise ops

static void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) {
        fail(ErrorKind::usage, std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                                   b.shape().str());
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    int64_t n = a.numel();
    std::vector<double> out(n);
    kernels::active().add(a.data(), b.data(), out.data(), n);
    return custom_op(a.shape(), std::move(out), {a, b}, [n](OpContext& ctx) {
        for (int i = 0; i < 2; ++i) {
            if (ctx.input_grads[i]) {
                kernels::active().axpy(1.0, ctx.upstream.data(), ctx.input_grads[i]->data(), n);
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    int64_t n = a.numel();
    std::vector<double> out(n);
    kernels::active().mul(a.data(), b.data(), out.data(), n);
    return custom_op(a.shape(), std::move(out), {a, b}, [a, b, n](OpContext& ctx) {
        if (ctx.input_grads[0]) {
            kernels::active().mul_acc(ctx.upstream.data(), b.data(), ctx.input_grads[0]->data(), n);
        }
        if (ctx.input_grads[1]) {
            kernels::active().mul_acc(ctx.upstream.data(), a.data(), ctx.input_grads[1]->data(), n);
        }
    });
}

Tensor relu(const Tensor& x) {
    int64_t n = x.numel();
    std::vector<double> out(n);
    kernels::active().relu(x.data(), out.data(), n);
    return custom_op(x.shape(), std::move(out), {x}, [x, n](OpContext& ctx) {
        if (ctx.input_grads[0]) {
            kernels::active().relu_dx(x.data(), ctx.upstream.data(), ctx.input_grads[0]->data(), n);
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    int64_t n = x.numel();
    std::vector<double> out(n);
    const double* xd = x.data();
    for (int64_t i = 0; i < n; ++i) {
        double z = xd[i];
        if (z >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-z));
        } else {
            double e = std::exp(z);
            out[i] = e / (1.0 + e);
        }
    }
    std::vector<double> saved = out;
    return custom_op(x.shape(), std::move(out), {x}, [saved = std::move(saved), n](OpContext& ctx) {
        if (!ctx.input_grads[0]) return;
        double* g = ctx.input_grads[0]->data();
        for (int64_t i = 0; i < n; ++i) {
            g[i] += ctx.upstream[i] * saved[i] * (1.0 - saved[i]);
        }
    });
}

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (ws.h != ws.w || (ws.h != 1 && ws.h != 3)) {
        fail(ErrorKind::usage, "conv2d: kernel must be square 1x1 or 3x3, got " + ws.str());
    }
    if (xs.c != ws.c) {
        fail(ErrorKind::usage, "conv2d: input channels do not match weight: x " + xs.str() +
                                   " vs weight " + ws.str());
    }
    if (stride != 1 && stride != 2) {
        fail(ErrorKind::usage, "conv2d: stride must be 1 or 2, got " + std::to_string(stride));
    }
    if (padding < 0) {
        fail(ErrorKind::usage, "conv2d: padding must be non-negative");
    }
    if (bias.numel() != ws.n) {
        fail(ErrorKind::usage, "conv2d: bias length " + std::to_string(bias.numel()) +
                                   " does not match output channels " + std::to_string(ws.n));
    }
    int ho = (xs.h + 2 * padding - ws.h) / stride + 1;
    int wo = (xs.w + 2 * padding - ws.w) / stride + 1;
    if (xs.h + 2 * padding < ws.h || xs.w + 2 * padding < ws.w || ho < 1 || wo < 1) {
        fail(ErrorKind::usage, "conv2d: kernel " + ws.str() + " does not fit input " + xs.str() +
                                   " with padding " + std::to_string(padding));
    }
    kernels::ConvDims d{xs.n, xs.c, xs.h, xs.w, ws.n, ho, wo, ws.h, stride, padding};
    Shape out_shape{xs.n, ws.n, ho, wo};
    std::vector<double> out(out_shape.numel());
    kernels::active().conv2d_fwd(d, x.data(), weight.data(), bias.data(), out.data());
    return custom_op(out_shape, std::move(out), {x, weight, bias},
                     [x, weight, d](OpContext& ctx) {
                         if (ctx.input_grads[0]) {
                             kernels::active().conv2d_dx(d, ctx.upstream.data(), weight.data(),
                                                         ctx.input_grads[0]->data());
                         }
                         if (ctx.input_grads[1] || ctx.input_grads[2]) {
                             std::vector<double> tmp_w, tmp_b;
                             double* dw = ctx.input_grads[1] ? ctx.input_grads[1]->data() : nullptr;
                             double* db = ctx.input_grads[2] ? ctx.input_grads[2]->data() : nullptr;
                             if (!dw) {
                                 tmp_w.assign(weight.numel(), 0.0);
                                 dw = tmp_w.data();
                             }
                             if (!db) {
                                 tmp_b.assign(d.co, 0.0);
                                 db = tmp_b.data();
                             }
                             kernels::active().conv2d_dw(d, ctx.upstream.data(), x.data(), dw, db);
                         }
                     });
}

// ---------------------------------------------------------------------------
// batch_norm

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BnMode mode,
                  BnStats& running, double momentum, double eps) {
    const Shape& s = x.shape();
    if (eps <= 0.0) fail(ErrorKind::usage, "batch_norm: eps must be positive");
    if (gamma.numel() != s.c || beta.numel() != s.c) {
        fail(ErrorKind::usage, "batch_norm: gamma/beta length must equal channel count " +
                                   std::to_string(s.c));
    }
    if (static_cast<int>(running.mean.size()) != s.c ||
        static_cast<int>(running.var.size()) != s.c) {
        fail(ErrorKind::usage, "batch_norm: running stats sized for " +
                                   std::to_string(running.mean.size()) + " channels, input has " +
                                   std::to_string(s.c));
    }

    int64_t m = static_cast<int64_t>(s.n) * s.h * s.w;  // elements per channel
    int64_t plane = static_cast<int64_t>(s.h) * s.w;
    const double* xd = x.data();
    const double* g = gamma.data();
    const double* b = beta.data();

    std::vector<double> mean(s.c), inv_std(s.c);
    if (mode == BnMode::train) {
        for (int c = 0; c < s.c; ++c) {
            double sum = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const double* p = xd + (static_cast<int64_t>(n) * s.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) sum += p[i];
            }
            double mu = sum / static_cast<double>(m);
            double sq = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const double* p = xd + (static_cast<int64_t>(n) * s.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    double dvi = p[i] - mu;
                    sq += dvi * dvi;
                }
            }
            double var = sq / static_cast<double>(m);
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(var + eps);
            running.mean[c] = (1.0 - momentum) * running.mean[c] + momentum * mu;
            running.var[c] = (1.0 - momentum) * running.var[c] + momentum * var;
        }
    } else {
        for (int c = 0; c < s.c; ++c) {
            mean[c] = running.mean[c];
            inv_std[c] = 1.0 / std::sqrt(running.var[c] + eps);
        }
    }

    std::vector<double> xhat(s.numel());
    std::vector<double> out(s.numel());
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const double* p = xd + (static_cast<int64_t>(n) * s.c + c) * plane;
            double* xh = xhat.data() + (static_cast<int64_t>(n) * s.c + c) * plane;
            double* o = out.data() + (static_cast<int64_t>(n) * s.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mean[c]) * inv_std[c];
                o[i] = g[c] * xh[i] + b[c];
            }
        }
    }

    bool train = mode == BnMode::train;
    return custom_op(
        s, std::move(out), {x, gamma, beta},
        [s, m, plane, gamma, train, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](OpContext& ctx) {
            const double* up = ctx.upstream.data();
            const double* g = gamma.data();
            // per-channel reductions of dy and dy*xhat
            std::vector<double> sum_dy(s.c, 0.0), sum_dyx(s.c, 0.0);
            for (int c = 0; c < s.c; ++c) {
                double a0 = 0.0, a1 = 0.0;
                for (int n = 0; n < s.n; ++n) {
                    int64_t base = (static_cast<int64_t>(n) * s.c + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        a0 += up[base + i];
                        a1 += up[base + i] * xhat[base + i];
                    }
                }
                sum_dy[c] = a0;
                sum_dyx[c] = a1;
            }
            if (ctx.input_grads[1]) {
                double* dg = ctx.input_grads[1]->data();
                for (int c = 0; c < s.c; ++c) dg[c] += sum_dyx[c];
            }
            if (ctx.input_grads[2]) {
                double* db = ctx.input_grads[2]->data();
                for (int c = 0; c < s.c; ++c) db[c] += sum_dy[c];
            }
            if (ctx.input_grads[0]) {
                double* dx = ctx.input_grads[0]->data();
                double inv_m = 1.0 / static_cast<double>(m);
                for (int n = 0; n < s.n; ++n) {
                    for (int c = 0; c < s.c; ++c) {
                        int64_t base = (static_cast<int64_t>(n) * s.c + c) * plane;
                        double k = g[c] * inv_std[c];
                        if (train) {
                            double mdy = sum_dy[c] * inv_m;
                            double mdyx = sum_dyx[c] * inv_m;
                            for (int64_t i = 0; i < plane; ++i) {
                                dx[base + i] +=
                                    k * (up[base + i] - mdy - xhat[base + i] * mdyx);
                            }
                        } else {
                            for (int64_t i = 0; i < plane; ++i) {
                                dx[base + i] += k * up[base + i];
                            }
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// bilinear_resize: half-pixel sample centers, edges clamped

namespace {

struct Axis {
    std::vector<int> i0, i1;
    std::vector<double> f;
};

Axis make_axis(int in, int out) {
    Axis a;
    a.i0.resize(out);
    a.i1.resize(out);
    a.f.resize(out);
    double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        double fl = std::floor(src);
        int idx = static_cast<int>(fl);
        double frac = src - fl;
        if (idx < 0) {
            idx = 0;
            frac = 0.0;
        }
        if (idx >= in - 1) {
            idx = in - 1;
            frac = 0.0;
        }
        a.i0[o] = idx;
        a.i1[o] = std::min(idx + 1, in - 1);
        a.f[o] = frac;
    }
    return a;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    const Shape& s = x.shape();
    if (out_h < 1 || out_w < 1) {
        fail(ErrorKind::usage, "bilinear_resize: output size must be at least 1x1");
    }
    if (out_h == s.h && out_w == s.w) {
        // exact identity
        std::vector<double> out(x.values().begin(), x.values().end());
        int64_t n = s.numel();
        return custom_op(s, std::move(out), {x}, [n](OpContext& ctx) {
            if (ctx.input_grads[0]) {
                kernels::active().axpy(1.0, ctx.upstream.data(), ctx.input_grads[0]->data(), n);
            }
        });
    }

    Axis ay = make_axis(s.h, out_h);
    Axis ax = make_axis(s.w, out_w);
    Shape os{s.n, s.c, out_h, out_w};
    std::vector<double> out(os.numel());
    const double* xd = x.data();
    int64_t in_plane = static_cast<int64_t>(s.h) * s.w;
    int64_t out_plane = static_cast<int64_t>(out_h) * out_w;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const double* p = xd + (static_cast<int64_t>(n) * s.c + c) * in_plane;
            double* o = out.data() + (static_cast<int64_t>(n) * s.c + c) * out_plane;
            for (int oh = 0; oh < out_h; ++oh) {
                const double* r0 = p + static_cast<int64_t>(ay.i0[oh]) * s.w;
                const double* r1 = p + static_cast<int64_t>(ay.i1[oh]) * s.w;
                double fy = ay.f[oh];
                for (int ow = 0; ow < out_w; ++ow) {
                    double fx = ax.f[ow];
                    double t0 = r0[ax.i0[ow]], t1 = r0[ax.i1[ow]];
                    double b0 = r1[ax.i0[ow]], b1 = r1[ax.i1[ow]];
                    double top = t0 + fx * (t1 - t0);
                    double bot = b0 + fx * (b1 - b0);
                    o[static_cast<int64_t>(oh) * out_w + ow] = top + fy * (bot - top);
                }
            }
        }
    }

    return custom_op(os, std::move(out), {x},
                     [s, os, ay = std::move(ay), ax = std::move(ax), in_plane,
                      out_plane](OpContext& ctx) {
                         if (!ctx.input_grads[0]) return;
                         double* dx = ctx.input_grads[0]->data();
                         const double* up = ctx.upstream.data();
                         for (int n = 0; n < s.n; ++n) {
                             for (int c = 0; c < s.c; ++c) {
                                 double* dp = dx + (static_cast<int64_t>(n) * s.c + c) * in_plane;
                                 const double* u =
                                     up + (static_cast<int64_t>(n) * s.c + c) * out_plane;
                                 for (int oh = 0; oh < os.h; ++oh) {
                                     double fy = ay.f[oh];
                                     int64_t r0 = static_cast<int64_t>(ay.i0[oh]) * s.w;
                                     int64_t r1 = static_cast<int64_t>(ay.i1[oh]) * s.w;
                                     for (int ow = 0; ow < os.w; ++ow) {
                                         double fx = ax.f[ow];
                                         double g = u[static_cast<int64_t>(oh) * os.w + ow];
                                         dp[r0 + ax.i0[ow]] += g * (1.0 - fy) * (1.0 - fx);
                                         dp[r0 + ax.i1[ow]] += g * (1.0 - fy) * fx;
                                         dp[r1 + ax.i0[ow]] += g * fy * (1.0 - fx);
                                         dp[r1 + ax.i1[ow]] += g * fy * fx;
                                     }
                                 }
                             }
                         }
                     });
}

// ---------------------------------------------------------------------------
// window_mean: k x k box mean with windows clipped at the borders; the
// per-pixel divisor counts in-image pixels only.

namespace {

// summed-area table over one (h, w) plane: S has (h+1) x (w+1) entries
void integral(const double* v, int h, int w, std::vector<double>& sat) {
    sat.assign(static_cast<size_t>(h + 1) * (w + 1), 0.0);
    for (int i = 0; i < h; ++i) {
        const double* row = v + static_cast<int64_t>(i) * w;
        double* s1 = sat.data() + static_cast<size_t>(i + 1) * (w + 1);
        const double* s0 = sat.data() + static_cast<size_t>(i) * (w + 1);
        double rowsum = 0.0;
        for (int j = 0; j < w; ++j) {
            rowsum += row[j];
            s1[j + 1] = s0[j + 1] + rowsum;
        }
    }
}

inline double sat_window(const std::vector<double>& sat, int w, int i1, int i2, int j1, int j2) {
    const int W = w + 1;
    return sat[static_cast<size_t>(i2 + 1) * W + (j2 + 1)] -
           sat[static_cast<size_t>(i1) * W + (j2 + 1)] -
           sat[static_cast<size_t>(i2 + 1) * W + j1] + sat[static_cast<size_t>(i1) * W + j1];
}

}  // namespace

Tensor window_mean(const Tensor& x, int k) {
    if (k % 2 == 0) fail(ErrorKind::usage, "window_mean: k must be odd, got " + std::to_string(k));
    if (k < 3) fail(ErrorKind::usage, "window_mean: k must be at least 3, got " + std::to_string(k));
    const Shape& s = x.shape();
    int r = k / 2;
    int64_t plane = static_cast<int64_t>(s.h) * s.w;
    std::vector<double> out(s.numel());
    std::vector<double> sat;
    const double* xd = x.data();
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const double* p = xd + (static_cast<int64_t>(n) * s.c + c) * plane;
            double* o = out.data() + (static_cast<int64_t>(n) * s.c + c) * plane;
            integral(p, s.h, s.w, sat);
            for (int i = 0; i < s.h; ++i) {
                int i1 = std::max(0, i - r), i2 = std::min(s.h - 1, i + r);
                for (int j = 0; j < s.w; ++j) {
                    int j1 = std::max(0, j - r), j2 = std::min(s.w - 1, j + r);
                    double cnt = static_cast<double>((i2 - i1 + 1) * (j2 - j1 + 1));
                    o[static_cast<int64_t>(i) * s.w + j] =
                        sat_window(sat, s.w, i1, i2, j1, j2) / cnt;
                }
            }
        }
    }

    // dL/dx is the clipped box sum of dy/count: window membership is symmetric
    return custom_op(s, std::move(out), {x}, [s, r, plane](OpContext& ctx) {
        if (!ctx.input_grads[0]) return;
        double* dx = ctx.input_grads[0]->data();
        const double* up = ctx.upstream.data();
        std::vector<double> t(plane), sat;
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                const double* u = up + (static_cast<int64_t>(n) * s.c + c) * plane;
                double* d = dx + (static_cast<int64_t>(n) * s.c + c) * plane;
                for (int i = 0; i < s.h; ++i) {
                    int i1 = std::max(0, i - r), i2 = std::min(s.h - 1, i + r);
                    for (int j = 0; j < s.w; ++j) {
                        int j1 = std::max(0, j - r), j2 = std::min(s.w - 1, j + r);
                        double cnt = static_cast<double>((i2 - i1 + 1) * (j2 - j1 + 1));
                        t[static_cast<int64_t>(i) * s.w + j] =
                            u[static_cast<int64_t>(i) * s.w + j] / cnt;
                    }
                }
                integral(t.data(), s.h, s.w, sat);
                for (int i = 0; i < s.h; ++i) {
                    int i1 = std::max(0, i - r), i2 = std::min(s.h - 1, i + r);
                    for (int j = 0; j < s.w; ++j) {
                        int j1 = std::max(0, j - r), j2 = std::min(s.w - 1, j + r);
                        d[static_cast<int64_t>(i) * s.w + j] +=
                            sat_window(sat, s.w, i1, i2, j1, j2);
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// reductions

Tensor reduce_sum(const Tensor& x) {
    int64_t n = x.numel();
    const double* xd = x.data();
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) sum += xd[i];
    return custom_op({1, 1, 1, 1}, {sum}, {x}, [n](OpContext& ctx) {
        if (!ctx.input_grads[0]) return;
        double g = ctx.upstream[0];
        double* d = ctx.input_grads[0]->data();
        for (int64_t i = 0; i < n; ++i) d[i] += g;
    });
}

Tensor reduce_mean(const Tensor& x) {
    int64_t n = x.numel();
    const double* xd = x.data();
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) sum += xd[i];
    double inv = 1.0 / static_cast<double>(n);
    return custom_op({1, 1, 1, 1}, {sum * inv}, {x}, [n, inv](OpContext& ctx) {
        if (!ctx.input_grads[0]) return;
        double g = ctx.upstream[0] * inv;
        double* d = ctx.input_grads[0]->data();
        for (int64_t i = 0; i < n; ++i) d[i] += g;
    });
}

// ---------------------------------------------------------------------------
// backward engine

GradMap backward(const Tensor& loss) {
    auto root = Access::node(loss);
    if (!root) fail(ErrorKind::usage, "backward: undefined tensor");
    if (root->shape.numel() != 1) {
        fail(ErrorKind::usage,
             "backward: loss must be a single-element tensor, got " + root->shape.str());
    }
    GradMap result;
    if (!root->requires_grad) return result;

    // collect the reachable slice of the tape
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        detail::Node* nd = stack.back();
        stack.pop_back();
        order.push_back(nd);
        for (const auto& p : nd->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    // reverse execution order
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

    std::unordered_map<detail::Node*, std::vector<double>> scratch;
    scratch[root.get()] = {1.0};

    for (detail::Node* nd : order) {
        auto it = scratch.find(nd);
        if (it == scratch.end()) continue;
        if (nd->backward_rule) {
            OpContext ctx;
            ctx.upstream = {it->second.data(), it->second.size()};
            ctx.input_grads.reserve(nd->parents.size());
            for (const auto& p : nd->parents) {
                if (p->requires_grad) {
                    auto [pit, inserted] = scratch.try_emplace(p.get());
                    if (inserted) pit->second.assign(p->shape.numel(), 0.0);
                    ctx.input_grads.push_back(&pit->second);
                } else {
                    ctx.input_grads.push_back(nullptr);
                }
            }
            nd->backward_rule(ctx);
        } else {
            // leaf: fold into the persistent accumulator
            if (nd->grad.empty()) nd->grad.assign(nd->shape.numel(), 0.0);
            const auto& g = it->second;
            for (size_t i = 0; i < g.size(); ++i) nd->grad[i] += g[i];
            result[nd->seq] = nd->grad;
        }
        scratch.erase(it);
    }
    return result;
}

// ---------------------------------------------------------------------------
// gradient checking

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    if (eps <= 0.0) fail(ErrorKind::usage, "grad_check: eps must be positive");
    Tensor probe = x.clone(true);
    Tensor y = f(probe);
    if (y.numel() != 1) {
        fail(ErrorKind::usage, "grad_check: f must return a scalar, got " + y.shape().str());
    }
    backward(y);
    std::vector<double> analytic(probe.numel(), 0.0);
    if (!probe.grad().empty()) analytic = probe.grad();

    std::vector<double> base(x.values().begin(), x.values().end());
    double worst = 0.0;
    NoGradGuard guard;
    for (int64_t i = 0; i < x.numel(); ++i) {
        std::vector<double> vp = base, vm = base;
        vp[i] += eps;
        vm[i] -= eps;
        double fp = f(Tensor::from_vector(x.shape(), std::move(vp))).item();
        double fm = f(Tensor::from_vector(x.shape(), std::move(vm))).item();
        double numeric = (fp - fm) / (2.0 * eps);
        double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace f3kit
