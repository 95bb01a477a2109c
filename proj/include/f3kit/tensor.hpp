#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace f3kit {

struct Shape {
    int n = 0, c = 0, h = 0, w = 0;
    int64_t numel() const {
        return static_cast<int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

namespace detail {
struct Node;
struct Access;
}  // namespace detail

// Backward rule context: `upstream` is dL/d(output); `input_grads[i]` is the
// accumulator for dL/d(input i), or nullptr when that input needs no gradient.
// Rules must add into the accumulators, never overwrite.
struct OpContext {
    std::span<const double> upstream;
    std::vector<std::vector<double>*> input_grads;
};

// Dense 4-D double tensor with reverse-mode differentiation. Values are
// immutable once an operation has consumed them; data_mut() exists for
// parameter initialization and optimizer updates between tape episodes.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape s, bool requires_grad = false);
    static Tensor full(Shape s, double value, bool requires_grad = false);
    static Tensor from_vector(Shape s, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);  // shape (1,1,1,1)

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    bool requires_grad() const;
    uint64_t id() const;

    const double* data() const;
    double* data_mut();
    std::span<const double> values() const;
    double item() const;
    double at(int n, int c, int h, int w) const;

    // leaf gradient accumulator; additive across backward() calls
    const std::vector<double>& grad() const;
    void zero_grad();

    Tensor detach() const;
    Tensor clone(bool requires_grad) const;

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
    friend struct detail::Access;
};

// While a guard is alive, operations record no history (thread-local).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// tensor id -> accumulated leaf gradient
using GradMap = std::unordered_map<uint64_t, std::vector<double>>;

enum class BnMode { train, eval };

// Per-channel running statistics owned by a batch-norm layer; updated in
// place by train-mode forward passes.
struct BnStats {
    std::vector<double> mean, var;
    static BnStats make(int channels) {
        return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
    }
};

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BnMode mode,
                  BnStats& running, double momentum = 0.1, double eps = 1e-5);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);
Tensor window_mean(const Tensor& x, int k);
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);

// Replays backward rules in reverse execution order; accumulates into leaf
// .grad buffers and returns them. Calling twice without zero_grad doubles
// the accumulated gradients.
GradMap backward(const Tensor& loss);

// Max relative error between tape gradients and central finite differences,
// with max(|a|,|b|,1e-8) in the denominator. f must map x to a scalar.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

// Escape hatch for modules that fuse their own forward/backward (losses).
Tensor custom_op(Shape out_shape, std::vector<double> out_value, std::vector<Tensor> inputs,
                 std::function<void(OpContext&)> backward_rule);

bool all_finite(const Tensor& t);

}  // namespace f3kit
