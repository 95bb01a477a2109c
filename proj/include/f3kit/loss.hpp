#pragma once

#include "f3kit/decoder.hpp"
#include "f3kit/tensor.hpp"

namespace f3kit {

// Per-pixel importance weight: the absolute difference between a pixel's
// label and the mean label over its clipped k x k neighbourhood. Large on
// boundaries, thin structures and holes; identically zero on constant masks.
// Constant with respect to the tape (ground truth is data).
struct WeightMap {
    Tensor alpha;  // same shape as gt, values in [0,1]
    int k;
};

WeightMap alpha_map(const Tensor& gt, int k);

// Normalization of the weighted cross entropy: the sum of the full weights
// 1 + gamma*alpha (default, reduces to plain mean BCE at gamma = 0), or the
// sum of gamma*alpha alone.
enum class WbceNorm { weighted_total, weight_only };

// weighted binary cross entropy on sigmoid(logits), stable logit form,
// per-image normalization, mean over the batch
Tensor wbce(const Tensor& logits, const Tensor& gt, const Tensor& alpha, double gamma,
            WbceNorm norm = WbceNorm::weighted_total);

// weighted soft-IoU loss: 1 - sum(w*g*p) / sum(w*(g + p - g*p)), per image,
// mean over the batch
Tensor wiou(const Tensor& logits, const Tensor& gt, const Tensor& alpha, double gamma);

struct LossParts {
    Tensor wbce, wiou, total;
};

// both terms and their sum, with the weight map computed once
LossParts ppa_loss(const Tensor& logits, const Tensor& gt, double gamma = 5.0, int k = 9,
                   WbceNorm norm = WbceNorm::weighted_total);

enum class LossMode { bce, iou, bce_iou, ppa };

struct LossConfig {
    LossMode mode = LossMode::ppa;
    double gamma = 5.0;
    int k = 9;
    bool mls = true;  // auxiliary multi-level supervision
    WbceNorm norm = WbceNorm::weighted_total;
};

struct LossBreakdown {
    Tensor total;
    std::vector<LossParts> stage_terms;       // one per decoder stage map
    std::array<LossParts, 4> aux_terms;       // defined only when mls is on
};

// mean of the per-stage losses plus the auxiliary losses weighted
// 1/2, 1/4, 1/8, 1/16 for levels 2..5
LossBreakdown total_loss(const DecodeResult& out, const Tensor& gt, const LossConfig& cfg);

// default neighbourhood size: 31 at 352 pixels, scaled to the nearest odd
int default_window(int size);

}  // namespace f3kit
