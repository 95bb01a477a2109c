// f3kit command line: dataset generation, training, inference, evaluation
// and weight-map inspection.
//
// Exit codes: 0 ok, 2 usage, 3 I/O, 4 data format, 5 numeric divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <optional>

#include "f3kit/checkpoint.hpp"
#include "f3kit/data.hpp"
#include "f3kit/error.hpp"
#include "f3kit/image.hpp"
#include "f3kit/loss.hpp"
#include "f3kit/metrics.hpp"
#include "f3kit/train.hpp"

namespace {

using namespace f3kit;

struct GenArgs {
    std::string out;
    int count = 100;
    int size = 96;
    uint64_t seed = 1;
};

struct TrainArgs {
    std::string data, val, ckpt = "model.f3ck", log = "train_log.csv";
    TrainConfig cfg;
    int k = -1;  // -1: derive from size
    std::string loss = "ppa", fusion = "cross";
    bool no_mls = false, no_augment = false, share = false;
};

struct InferArgs {
    std::string ckpt, image, out;
};

struct EvalArgs {
    std::string pred, gt, report = "report.json", curves = "curves.csv";
};

struct WeightmapArgs {
    std::string mask, out, weighted_out;
    int k = 9;
    double gamma = 5.0;
};

Tensor gray_to_tensor(const Gray& g) {
    return Tensor::from_vector({1, 1, g.h, g.w}, g.v);
}

int run_gen(const GenArgs& a) {
    generate_dataset(a.out, a.count, a.size, a.seed);
    std::printf("wrote %d pairs of size %dx%d to %s\n", a.count, a.size, a.size, a.out.c_str());
    return 0;
}

int run_train(const TrainArgs& a) {
    TrainConfig cfg = a.cfg;
    cfg.k = a.k > 0 ? a.k : default_window(cfg.size);
    cfg.mls = !a.no_mls;
    cfg.augment = !a.no_augment;
    cfg.share_decoders = a.share;
    if (a.loss == "bce") {
        cfg.loss = LossMode::bce;
    } else if (a.loss == "iou") {
        cfg.loss = LossMode::iou;
    } else if (a.loss == "bce+iou") {
        cfg.loss = LossMode::bce_iou;
    } else if (a.loss == "ppa") {
        cfg.loss = LossMode::ppa;
    } else {
        fail(ErrorKind::usage, "unknown loss mode '" + a.loss + "'");
    }
    cfg.fusion = a.fusion == "add" ? FusionMode::add : FusionMode::cross;

    DatasetManifest train_data = scan_dataset(a.data);
    std::optional<DatasetManifest> val_data;
    if (!a.val.empty()) val_data = scan_dataset(a.val);

    TrainResult r = train(cfg, train_data, val_data, a.ckpt, a.log);
    std::printf("trained %d steps, final loss %.6f", r.steps, r.final_loss);
    if (!std::isnan(r.val_mae)) {
        std::printf(", val mae %.4f, val mF %.4f", r.val_mae, r.val_mf);
    }
    std::printf("\ncheckpoint: %s\nlog: %s\n", a.ckpt.c_str(), a.log.c_str());
    return 0;
}

int run_infer(const InferArgs& a) {
    Model model = load_checkpoint(a.ckpt);
    Rgb8 img = load_rgb8(a.image);
    int64_t plane = static_cast<int64_t>(img.h) * img.w;
    std::vector<double> iv(plane * 3);
    for (int64_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) iv[c * plane + i] = img.v[i * 3 + c] / 255.0;
    }
    Tensor input = Tensor::from_vector({1, 3, img.h, img.w}, std::move(iv));

    NoGradGuard guard;
    int s = model.cfg.train_size;
    Tensor resized = (img.h == s && img.w == s) ? input : bilinear_resize(input, s, s);
    Tensor map = infer_map(model, resized);
    if (map.shape().h != img.h || map.shape().w != img.w) {
        map = bilinear_resize(map, img.h, img.w);
    }
    Gray g{img.h, img.w, std::vector<double>(map.values().begin(), map.values().end())};
    save_gray8(to_bytes(g), a.out);
    std::printf("wrote saliency map %s (%dx%d)\n", a.out.c_str(), img.w, img.h);
    return 0;
}

int run_eval(const EvalArgs& a) {
    MetricReport r = evaluate_dataset(a.pred, a.gt);
    write_report_json(r, a.report);
    write_curves_csv(r, a.curves);
    std::printf("images %d  MAE %.4f  mF %.4f  S %.4f  E %.4f\n", r.count, r.mae, r.mean_f, r.s,
                r.e);
    return 0;
}

int run_weightmap(const WeightmapArgs& a) {
    Gray8 m8 = load_gray8(a.mask);
    for (uint8_t v : m8.v) {
        if (v != 0 && v != 255) {
            fail(ErrorKind::data_format, "mask is not binary (found value " + std::to_string(v) +
                                             "): " + a.mask);
        }
    }
    std::vector<double> mv(m8.v.size());
    for (size_t i = 0; i < m8.v.size(); ++i) mv[i] = m8.v[i] == 255 ? 1.0 : 0.0;
    Tensor gt = Tensor::from_vector({1, 1, m8.h, m8.w}, std::move(mv));
    WeightMap wm = alpha_map(gt, a.k);

    Gray alpha{m8.h, m8.w,
               std::vector<double>(wm.alpha.values().begin(), wm.alpha.values().end())};
    save_gray8(to_bytes(alpha), a.out);
    if (!a.weighted_out.empty()) {
        Gray wgt = alpha;
        for (auto& v : wgt.v) v = (1.0 + a.gamma * v) / (1.0 + a.gamma);
        save_gray8(to_bytes(wgt), a.weighted_out);
    }
    std::printf("wrote weight map %s\n", a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"f3kit: cross-feature salient object detection toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file; flags override it");

    GenArgs gen;
    auto* cgen = app.add_subcommand("gen-data", "render a synthetic shape dataset");
    cgen->add_option("--out", gen.out, "output directory")->required();
    cgen->add_option("--count", gen.count, "number of image/mask pairs")
        ->capture_default_str();
    cgen->add_option("--size", gen.size, "square image size, multiple of 32")
        ->capture_default_str();
    cgen->add_option("--seed", gen.seed, "generator seed")->capture_default_str();

    TrainArgs tr;
    auto* ctrain = app.add_subcommand("train", "train a model on an image/mask dataset");
    ctrain->add_option("--data", tr.data, "dataset root (images/ + masks/)")->required();
    ctrain->add_option("--val", tr.val, "validation dataset root");
    ctrain->add_option("--ckpt", tr.ckpt, "checkpoint output path")->capture_default_str();
    ctrain->add_option("--log", tr.log, "CSV log output path")->capture_default_str();
    ctrain->add_option("--size", tr.cfg.size, "training size, multiple of 32")
        ->capture_default_str();
    ctrain->add_option("--batch", tr.cfg.batch, "mini-batch size")->capture_default_str();
    ctrain->add_option("--epochs", tr.cfg.epochs, "training epochs")->capture_default_str();
    ctrain->add_option("--seed", tr.cfg.seed, "training seed")->capture_default_str();
    ctrain->add_option("--gamma", tr.cfg.gamma, "hard-pixel weight factor")
        ->capture_default_str();
    ctrain->add_option("--k", tr.k, "weight-map window size (odd; default scales with size)");
    ctrain->add_option("--decoders", tr.cfg.decoders, "number of cascade stages")
        ->capture_default_str();
    ctrain->add_option("--loss", tr.loss, "loss mode: bce, iou, bce+iou, ppa")
        ->capture_default_str();
    ctrain->add_option("--fusion", tr.fusion, "fusion mode: cross, add")->capture_default_str();
    ctrain->add_flag("--no-mls", tr.no_mls, "disable multi-level supervision");
    ctrain->add_flag("--no-augment", tr.no_augment, "disable data augmentation");
    ctrain->add_flag("--share-decoders", tr.share, "share parameters across cascade stages");
    ctrain->add_option("--lr-encoder", tr.cfg.max_lr_encoder, "peak encoder lr at batch 32")
        ->capture_default_str();
    ctrain->add_option("--lr-rest", tr.cfg.max_lr_rest, "peak lr for the rest at batch 32")
        ->capture_default_str();
    ctrain->add_option("--warmup-frac", tr.cfg.warmup_frac, "warm-up fraction of total steps")
        ->capture_default_str();

    InferArgs inf;
    auto* cinfer = app.add_subcommand("infer", "predict a saliency map for one image");
    cinfer->add_option("--ckpt", inf.ckpt, "checkpoint path")->required();
    cinfer->add_option("--image", inf.image, "input image (PNG/PPM)")->required();
    cinfer->add_option("--out", inf.out, "output grayscale map (PNG/PGM)")->required();

    EvalArgs ev;
    auto* ceval = app.add_subcommand("eval", "score predictions against ground truth");
    ceval->add_option("--pred", ev.pred, "directory of predicted maps")->required();
    ceval->add_option("--gt", ev.gt, "directory of ground-truth masks")->required();
    ceval->add_option("--report", ev.report, "metrics JSON output")->capture_default_str();
    ceval->add_option("--curves", ev.curves, "PR/F curves CSV output")->capture_default_str();

    WeightmapArgs wm;
    auto* cwm = app.add_subcommand("weightmap", "render the per-pixel loss weight map of a mask");
    cwm->add_option("--mask", wm.mask, "binary mask image")->required();
    cwm->add_option("--k", wm.k, "window size (odd)")->capture_default_str();
    cwm->add_option("--gamma", wm.gamma, "weight factor for the scaled output")
        ->capture_default_str();
    cwm->add_option("--out", wm.out, "alpha map output (PNG/PGM)")->required();
    cwm->add_option("--weighted-out", wm.weighted_out, "optional (1+gamma*alpha) map output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cgen->parsed()) return run_gen(gen);
        if (ctrain->parsed()) return run_train(tr);
        if (cinfer->parsed()) return run_infer(inf);
        if (ceval->parsed()) return run_eval(ev);
        if (cwm->parsed()) return run_weightmap(wm);
    } catch (const f3kit::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
