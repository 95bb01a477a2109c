#include "f3kit/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "f3kit/checkpoint.hpp"
#include "f3kit/error.hpp"
#include "f3kit/metrics.hpp"

namespace f3kit {

double lr_at(const Schedule& s, int step, ParamGroup group) {
    if (step < 0 || step > s.total_steps) {
        fail(ErrorKind::usage, "lr_at: step " + std::to_string(step) + " outside [0, " +
                                   std::to_string(s.total_steps) + "]");
    }
    double max_lr = group == ParamGroup::encoder ? s.max_lr_encoder : s.max_lr_rest;
    if (step <= s.warmup_steps) {
        return s.warmup_steps == 0 ? max_lr
                                   : max_lr * static_cast<double>(step) / s.warmup_steps;
    }
    return max_lr * static_cast<double>(s.total_steps - step) /
           static_cast<double>(s.total_steps - s.warmup_steps);
}

SgdState make_sgd_state(const std::vector<ParamRef>& params, double momentum,
                        double weight_decay) {
    SgdState st;
    st.momentum = momentum;
    st.weight_decay = weight_decay;
    st.velocity.reserve(params.size());
    for (const auto& p : params) st.velocity.emplace_back(p.tensor.numel(), 0.0);
    return st;
}

void sgd_step(std::vector<ParamRef>& params, SgdState& state, double lr_encoder, double lr_rest) {
    if (state.velocity.size() != params.size()) {
        fail(ErrorKind::usage, "sgd_step: optimizer state does not match parameter list");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        ParamRef& p = params[i];
        std::vector<double>& v = state.velocity[i];
        int64_t n = p.tensor.numel();
        if (static_cast<int64_t>(v.size()) != n) {
            fail(ErrorKind::usage, "sgd_step: velocity shape mismatch for " + p.name);
        }
        const std::vector<double>& g = p.tensor.grad();
        double* w = p.tensor.data_mut();
        double lr = p.group == ParamGroup::encoder ? lr_encoder : lr_rest;
        double wd = p.decay ? state.weight_decay : 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double grad = g.empty() ? 0.0 : g[j];
            v[j] = state.momentum * v[j] + grad + wd * w[j];
            w[j] -= lr * v[j];
        }
    }
}

namespace {

struct Batch {
    Tensor images, masks;
};

Batch stack(const std::vector<Sample>& samples, const std::vector<int>& idx, size_t lo,
            size_t hi) {
    const Shape& is = samples[idx[lo]].image.shape();
    int b = static_cast<int>(hi - lo);
    std::vector<double> iv(static_cast<int64_t>(b) * 3 * is.h * is.w);
    std::vector<double> mv(static_cast<int64_t>(b) * is.h * is.w);
    int64_t iplane = static_cast<int64_t>(3) * is.h * is.w;
    int64_t mplane = static_cast<int64_t>(is.h) * is.w;
    for (size_t s = lo; s < hi; ++s) {
        const Sample& smp = samples[idx[s]];
        std::copy(smp.image.values().begin(), smp.image.values().end(),
                  iv.begin() + static_cast<int64_t>(s - lo) * iplane);
        std::copy(smp.mask.values().begin(), smp.mask.values().end(),
                  mv.begin() + static_cast<int64_t>(s - lo) * mplane);
    }
    return {Tensor::from_vector({b, 3, is.h, is.w}, std::move(iv)),
            Tensor::from_vector({b, 1, is.h, is.w}, std::move(mv))};
}

Gray tensor_to_gray(const Tensor& t) {
    const Shape& s = t.shape();
    return Gray{s.h, s.w, std::vector<double>(t.values().begin(), t.values().end())};
}

std::pair<double, double> validate(Model& model, const std::vector<Sample>& val, int size) {
    double sum_mae = 0.0, sum_mf = 0.0;
    for (const auto& s : val) {
        NoGradGuard guard;
        const Shape& ns = s.image.shape();
        Tensor input = (ns.h == size && ns.w == size)
                           ? s.image
                           : bilinear_resize(s.image, size, size).detach();
        Tensor map = infer_map(model, input);
        if (map.shape().h != ns.h || map.shape().w != ns.w) {
            map = bilinear_resize(map, ns.h, ns.w);
        }
        Gray pred = tensor_to_gray(map);
        Gray gt = tensor_to_gray(s.mask);
        sum_mae += mae(pred, gt);
        sum_mf += mean_f(pred, gt);
    }
    double n = static_cast<double>(val.size());
    return {sum_mae / n, sum_mf / n};
}

// size 0 keeps the native geometry
std::vector<Sample> load_all(const DatasetManifest& m, int size) {
    std::vector<Sample> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        Sample s = load_pair(e.image, e.mask);
        if (size > 0 && (s.image.shape().h != size || s.image.shape().w != size)) {
            s = resize_sample(s, size, size);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetManifest& train_data,
                  const std::optional<DatasetManifest>& val_data,
                  const std::filesystem::path& checkpoint_path,
                  const std::filesystem::path& log_path) {
    if (train_data.entries.empty()) fail(ErrorKind::usage, "train: empty dataset");
    if (cfg.batch < 1 || cfg.epochs < 1) {
        fail(ErrorKind::usage, "train: batch size and epoch count must be positive");
    }
    if (cfg.size % 32 != 0) {
        fail(ErrorKind::usage,
             "train: size " + std::to_string(cfg.size) + " must be divisible by 32");
    }

    ModelConfig mc;
    mc.channels = cfg.channels;
    mc.decoders = cfg.decoders;
    mc.fusion = cfg.fusion;
    mc.share_decoders = cfg.share_decoders;
    mc.train_size = cfg.size;
    Model model = make_model(mc, cfg.seed);

    auto params = named_params(model);
    SgdState opt = make_sgd_state(params, cfg.momentum, cfg.weight_decay);

    std::vector<Sample> samples = load_all(train_data, cfg.size);
    std::vector<Sample> val;
    if (val_data) val = load_all(*val_data, 0);

    int n = static_cast<int>(samples.size());
    int steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    int total_steps = steps_per_epoch * cfg.epochs;
    double lr_scale = static_cast<double>(cfg.batch) / 32.0;
    Schedule sched{cfg.max_lr_encoder * lr_scale, cfg.max_lr_rest * lr_scale,
                   std::max(1, static_cast<int>(std::lround(cfg.warmup_frac * total_steps))),
                   total_steps};

    LossConfig lc{cfg.loss, cfg.gamma, cfg.k, cfg.mls, WbceNorm::weighted_total};
    Rng data_rng = Rng(cfg.seed).fork(1);

    std::ofstream log(log_path);
    if (!log) fail(ErrorKind::io, "cannot write training log " + log_path.string());
    log << "epoch,step,loss,val_mae,val_mf,lr\n";

    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;

    TrainResult result;
    int step = 0;
    const double scales[3] = {0.75, 1.0, 1.25};
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (int i = n - 1; i >= 1; --i) {
            std::swap(idx[i], idx[data_rng.uniform_int(i + 1)]);
        }
        double epoch_loss = 0.0;
        int64_t epoch_samples = 0;
        for (size_t lo = 0; lo < static_cast<size_t>(n); lo += cfg.batch) {
            size_t hi = std::min<size_t>(lo + cfg.batch, n);
            double lr_e = lr_at(sched, step, ParamGroup::encoder);
            double lr_r = lr_at(sched, step, ParamGroup::decoder);

            std::vector<Sample> aug;
            aug.reserve(hi - lo);
            double scale = cfg.augment ? scales[data_rng.uniform_int(3)] : 1.0;
            for (size_t s = lo; s < hi; ++s) {
                Sample smp = samples[idx[s]];
                if (cfg.augment) {
                    if (data_rng.uniform() < 0.5) smp = hflip(smp);
                    smp = random_crop(smp, data_rng.uniform(0.75, 1.0), data_rng);
                    smp = multiscale(smp, scale);
                }
                aug.push_back(std::move(smp));
            }
            std::vector<int> aug_idx(aug.size());
            for (size_t s = 0; s < aug.size(); ++s) aug_idx[s] = static_cast<int>(s);
            Batch batch = stack(aug, aug_idx, 0, aug.size());

            DecodeResult out = forward(model, batch.images, BnMode::train);
            LossBreakdown loss = total_loss(out, batch.masks, lc);
            double loss_value = loss.total.item();
            if (!std::isfinite(loss_value)) {
                fail(ErrorKind::numeric, "training diverged at step " + std::to_string(step) +
                                             ": loss = " + std::to_string(loss_value));
            }
            backward(loss.total);
            sgd_step(params, opt, lr_e, lr_r);
            for (auto& p : params) p.tensor.zero_grad();

            epoch_loss += loss_value * static_cast<double>(hi - lo);
            epoch_samples += static_cast<int64_t>(hi - lo);
            ++step;
        }
        double mean_loss = epoch_loss / static_cast<double>(epoch_samples);
        double vmae = std::nan(""), vmf = std::nan("");
        if (!val.empty()) std::tie(vmae, vmf) = validate(model, val, cfg.size);
        double lr_now = lr_at(sched, std::min(step, sched.total_steps), ParamGroup::decoder);
        char line[160];
        std::snprintf(line, sizeof(line), "%d,%d,%.12g,%.12g,%.12g,%.12g\n", epoch, step,
                      mean_loss, vmae, vmf, lr_now);
        log << line;
        result.final_loss = mean_loss;
        result.val_mae = vmae;
        result.val_mf = vmf;
    }
    log.close();
    result.steps = step;
    save_checkpoint(model, checkpoint_path);
    return result;
}

}  // namespace f3kit
