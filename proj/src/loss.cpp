#include "f3kit/loss.hpp"

#include <cmath>

#include "f3kit/error.hpp"

namespace f3kit {

int default_window(int size) {
    int half = static_cast<int>(std::floor(31.0 * size / 352.0 / 2.0));
    return std::max(3, 2 * half + 1);
}

static void check_binary(const Tensor& gt) {
    for (double v : gt.values()) {
        if (std::fabs(v) > 1e-6 && std::fabs(v - 1.0) > 1e-6) {
            fail(ErrorKind::data_format,
                 "ground truth must be binary, found value " + std::to_string(v));
        }
    }
}

WeightMap alpha_map(const Tensor& gt, int k) {
    if (k % 2 == 0) fail(ErrorKind::usage, "alpha_map: k must be odd, got " + std::to_string(k));
    check_binary(gt);
    NoGradGuard guard;
    Tensor wm = window_mean(gt, k);
    std::vector<double> a(gt.numel());
    const double* m = wm.data();
    const double* g = gt.data();
    for (int64_t i = 0; i < gt.numel(); ++i) a[i] = std::fabs(m[i] - g[i]);
    return {Tensor::from_vector(gt.shape(), std::move(a)), k};
}

static void check_loss_inputs(const char* op, const Tensor& logits, const Tensor& gt,
                              const Tensor& alpha, double gamma) {
    if (!(logits.shape() == gt.shape()) || !(logits.shape() == alpha.shape())) {
        fail(ErrorKind::usage, std::string(op) + ": shape mismatch, logits " +
                                   logits.shape().str() + ", gt " + gt.shape().str() +
                                   ", alpha " + alpha.shape().str());
    }
    if (gamma < 0.0) fail(ErrorKind::usage, std::string(op) + ": gamma must be non-negative");
}

static std::vector<double> sigmoid_values(const Tensor& logits) {
    std::vector<double> p(logits.numel());
    const double* z = logits.data();
    for (int64_t i = 0; i < logits.numel(); ++i) {
        if (z[i] >= 0.0) {
            p[i] = 1.0 / (1.0 + std::exp(-z[i]));
        } else {
            double e = std::exp(z[i]);
            p[i] = e / (1.0 + e);
        }
    }
    return p;
}

Tensor wbce(const Tensor& logits, const Tensor& gt, const Tensor& alpha, double gamma,
            WbceNorm norm) {
    check_loss_inputs("wbce", logits, gt, alpha, gamma);
    const Shape& s = logits.shape();
    int64_t per = s.numel() / s.n;
    const double* z = logits.data();
    const double* g = gt.data();
    const double* a = alpha.data();

    std::vector<double> p = sigmoid_values(logits);
    std::vector<double> inv_den(s.n);
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        const int64_t base = n * per;
        double num = 0.0, den = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            int64_t t = base + i;
            double w = 1.0 + gamma * a[t];
            // stable: max(z,0) - z*g + log(1 + exp(-|z|))
            double ce = std::max(z[t], 0.0) - z[t] * g[t] + std::log1p(std::exp(-std::fabs(z[t])));
            num += w * ce;
            den += norm == WbceNorm::weighted_total ? w : gamma * a[t];
        }
        if (den == 0.0) {
            fail(ErrorKind::numeric,
                 "wbce: weight-only normalization has zero denominator (constant ground truth "
                 "or gamma = 0)");
        }
        inv_den[n] = 1.0 / den;
        total += num * inv_den[n];
    }
    total /= static_cast<double>(s.n);

    return custom_op(
        {1, 1, 1, 1}, {total}, {logits},
        [s, per, gt, alpha, gamma, p = std::move(p), inv_den = std::move(inv_den)](OpContext& c) {
            if (!c.input_grads[0]) return;
            double* dz = c.input_grads[0]->data();
            const double* g = gt.data();
            const double* a = alpha.data();
            double up = c.upstream[0] / static_cast<double>(s.n);
            for (int n = 0; n < s.n; ++n) {
                const int64_t base = n * per;
                for (int64_t i = 0; i < per; ++i) {
                    int64_t t = base + i;
                    double w = 1.0 + gamma * a[t];
                    dz[t] += up * w * (p[t] - g[t]) * inv_den[n];
                }
            }
        });
}

Tensor wiou(const Tensor& logits, const Tensor& gt, const Tensor& alpha, double gamma) {
    check_loss_inputs("wiou", logits, gt, alpha, gamma);
    const Shape& s = logits.shape();
    int64_t per = s.numel() / s.n;
    const double* g = gt.data();
    const double* a = alpha.data();

    std::vector<double> p = sigmoid_values(logits);
    std::vector<double> inter(s.n), uni(s.n);
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        const int64_t base = n * per;
        double num = 0.0, den = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            int64_t t = base + i;
            double w = 1.0 + gamma * a[t];
            double gp = g[t] * p[t];
            num += gp * w;
            den += (g[t] + p[t] - gp) * w;
        }
        inter[n] = num;
        uni[n] = den;
        total += den > 0.0 ? 1.0 - num / den : 0.0;  // empty gt and empty pred: no loss
    }
    total /= static_cast<double>(s.n);

    return custom_op({1, 1, 1, 1}, {total}, {logits},
                     [s, per, gt, alpha, gamma, p = std::move(p), inter = std::move(inter),
                      uni = std::move(uni)](OpContext& c) {
                         if (!c.input_grads[0]) return;
                         double* dz = c.input_grads[0]->data();
                         const double* g = gt.data();
                         const double* a = alpha.data();
                         double up = c.upstream[0] / static_cast<double>(s.n);
                         for (int n = 0; n < s.n; ++n) {
                             if (uni[n] <= 0.0) continue;
                             const int64_t base = n * per;
                             double inv_u2 = 1.0 / (uni[n] * uni[n]);
                             for (int64_t i = 0; i < per; ++i) {
                                 int64_t t = base + i;
                                 double w = 1.0 + gamma * a[t];
                                 double dldp =
                                     w * (inter[n] * (1.0 - g[t]) - g[t] * uni[n]) * inv_u2;
                                 dz[t] += up * dldp * p[t] * (1.0 - p[t]);
                             }
                         }
                     });
}

static LossParts mode_terms(const Tensor& logits, const Tensor& gt, const Tensor& alpha,
                            const LossConfig& cfg) {
    double gamma = cfg.mode == LossMode::ppa ? cfg.gamma : 0.0;
    LossParts parts;
    bool use_bce = cfg.mode != LossMode::iou;
    bool use_iou = cfg.mode != LossMode::bce;
    if (use_bce) parts.wbce = wbce(logits, gt, alpha, gamma, cfg.norm);
    if (use_iou) parts.wiou = wiou(logits, gt, alpha, gamma);
    if (use_bce && use_iou) {
        parts.total = add(parts.wbce, parts.wiou);
    } else {
        parts.total = use_bce ? parts.wbce : parts.wiou;
    }
    return parts;
}

LossParts ppa_loss(const Tensor& logits, const Tensor& gt, double gamma, int k, WbceNorm norm) {
    WeightMap wm = alpha_map(gt, k);
    LossParts parts;
    parts.wbce = wbce(logits, gt, wm.alpha, gamma, norm);
    parts.wiou = wiou(logits, gt, wm.alpha, gamma);
    parts.total = add(parts.wbce, parts.wiou);
    return parts;
}

LossBreakdown total_loss(const DecodeResult& out, const Tensor& gt, const LossConfig& cfg) {
    if (out.maps.empty()) fail(ErrorKind::usage, "total_loss: no stage maps");
    for (const Tensor& m : out.maps) {
        if (!(m.shape() == gt.shape())) {
            fail(ErrorKind::usage, "total_loss: map shape " + m.shape().str() +
                                       " does not match ground truth " + gt.shape().str());
        }
    }
    Tensor alpha;
    if (cfg.mode == LossMode::ppa) {
        alpha = alpha_map(gt, cfg.k).alpha;
    } else {
        check_binary(gt);
        alpha = Tensor::zeros(gt.shape());
    }

    LossBreakdown bd;
    Tensor stage_sum;
    for (const Tensor& m : out.maps) {
        LossParts parts = mode_terms(m, gt, alpha, cfg);
        stage_sum = stage_sum.defined() ? add(stage_sum, parts.total) : parts.total;
        bd.stage_terms.push_back(std::move(parts));
    }
    bd.total = mul(stage_sum, Tensor::scalar(1.0 / static_cast<double>(out.maps.size())));

    if (cfg.mls) {
        for (int j = 0; j < 4; ++j) {
            if (!out.aux[j].defined()) {
                fail(ErrorKind::usage, "total_loss: auxiliary map " + std::to_string(j + 2) +
                                           " missing with multi-level supervision on");
            }
            LossParts parts = mode_terms(out.aux[j], gt, alpha, cfg);
            double weight = 1.0 / static_cast<double>(1 << (j + 1));  // 1/2^(level-1)
            bd.total = add(bd.total, mul(parts.total, Tensor::scalar(weight)));
            bd.aux_terms[j] = std::move(parts);
        }
    }
    return bd;
}

}  // namespace f3kit
