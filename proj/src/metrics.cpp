#include "f3kit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "f3kit/error.hpp"
#include "f3kit/tensor.hpp"

namespace f3kit {

namespace {

constexpr double kEps = 1e-8;
constexpr double kBeta2 = 0.3;

void check_pair(const char* op, const Gray& pred, const Gray& gt) {
    if (pred.h != gt.h || pred.w != gt.w) {
        fail(ErrorKind::usage, std::string(op) + ": size mismatch " + std::to_string(pred.h) + "x" +
                                   std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                                   std::to_string(gt.w));
    }
}

inline int quantize8(double p) {
    double q = std::floor(p * 255.0 + 0.5);
    return static_cast<int>(std::clamp(q, 0.0, 255.0));
}

inline bool fg(double g) {
    return g >= 0.5;
}

double fmeasure(double p, double r) {
    double den = kBeta2 * p + r;
    return den > 0.0 ? (1.0 + kBeta2) * p * r / den : 0.0;
}

// adaptive binarization: threshold min(2*mean, 1); an all-zero map stays empty
std::vector<uint8_t> adaptive_binarize(const Gray& pred) {
    double sum = 0.0;
    for (double v : pred.v) sum += v;
    double m = sum / static_cast<double>(pred.v.size());
    std::vector<uint8_t> b(pred.v.size(), 0);
    if (m == 0.0) return b;
    double t = std::min(2.0 * m, 1.0);
    for (size_t i = 0; i < pred.v.size(); ++i) b[i] = pred.v[i] >= t ? 1 : 0;
    return b;
}

}  // namespace

double mae(const Gray& pred, const Gray& gt) {
    check_pair("mae", pred, gt);
    double sum = 0.0;
    for (size_t i = 0; i < pred.v.size(); ++i) sum += std::fabs(pred.v[i] - gt.v[i]);
    return sum / static_cast<double>(pred.v.size());
}

PrCurve pr_curve(const Gray& pred, const Gray& gt) {
    check_pair("pr_curve", pred, gt);
    // histogram the quantized prediction separately over gt foreground and
    // background, then suffix-sum; exactly the per-threshold confusion counts
    int64_t hist_fg[256] = {};
    int64_t hist_bg[256] = {};
    for (size_t i = 0; i < pred.v.size(); ++i) {
        int q = quantize8(pred.v[i]);
        if (fg(gt.v[i])) {
            ++hist_fg[q];
        } else {
            ++hist_bg[q];
        }
    }
    int64_t total_fg = 0;
    for (int q = 0; q < 256; ++q) total_fg += hist_fg[q];

    PrCurve c;
    int64_t tp = 0, fp = 0;
    for (int t = 255; t >= 0; --t) {
        tp += hist_fg[t];
        fp += hist_bg[t];
        c.precision[t] = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
        c.recall[t] = total_fg > 0 ? static_cast<double>(tp) / static_cast<double>(total_fg) : 1.0;
    }
    return c;
}

std::array<double, 256> f_curve(const Gray& pred, const Gray& gt) {
    PrCurve c = pr_curve(pred, gt);
    std::array<double, 256> f{};
    for (int t = 0; t < 256; ++t) f[t] = fmeasure(c.precision[t], c.recall[t]);
    return f;
}

double mean_f(const Gray& pred, const Gray& gt) {
    check_pair("mean_f", pred, gt);
    std::vector<uint8_t> b = adaptive_binarize(pred);
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < b.size(); ++i) {
        bool g = fg(gt.v[i]);
        if (b[i]) {
            (g ? tp : fp) += 1;
        } else if (g) {
            ++fn;
        }
    }
    double p = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    double r = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
    return fmeasure(p, r);
}

namespace {

double object_score(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(xs.size()));
    return 2.0 * mean / (mean * mean + 1.0 + 2.0 * sd + kEps);
}

double block_ssim(const Gray& pred, const Gray& gt, int r0, int r1, int c0, int c1) {
    int64_t n = static_cast<int64_t>(r1 - r0) * (c1 - c0);
    double mx = 0.0, my = 0.0;
    for (int i = r0; i < r1; ++i) {
        for (int j = c0; j < c1; ++j) {
            mx += pred.v[static_cast<size_t>(i) * pred.w + j];
            my += gt.v[static_cast<size_t>(i) * gt.w + j];
        }
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (int i = r0; i < r1; ++i) {
        for (int j = c0; j < c1; ++j) {
            double dx = pred.v[static_cast<size_t>(i) * pred.w + j] - mx;
            double dy = gt.v[static_cast<size_t>(i) * gt.w + j] - my;
            sx += dx * dx;
            sy += dy * dy;
            sxy += dx * dy;
        }
    }
    double norm = static_cast<double>(n - 1) + kEps;
    sx /= norm;
    sy /= norm;
    sxy /= norm;
    double a = 4.0 * mx * my * sxy;
    double b = (mx * mx + my * my) * (sx + sy);
    if (a != 0.0) return a / (b + kEps);
    return b == 0.0 ? 1.0 : 0.0;
}

}  // namespace

double s_measure(const Gray& pred, const Gray& gt, double alpha) {
    check_pair("s_measure", pred, gt);
    int64_t total = static_cast<int64_t>(gt.h) * gt.w;
    int64_t nfg = 0;
    for (double g : gt.v) nfg += fg(g) ? 1 : 0;
    double pred_mean = 0.0;
    for (double v : pred.v) pred_mean += v;
    pred_mean /= static_cast<double>(total);

    if (nfg == 0) return std::clamp(1.0 - pred_mean, 0.0, 1.0);
    if (nfg == total) return std::clamp(pred_mean, 0.0, 1.0);

    double mu = static_cast<double>(nfg) / static_cast<double>(total);

    // object similarity: foreground on pred, background on 1 - pred
    std::vector<double> xs_fg, xs_bg;
    xs_fg.reserve(nfg);
    xs_bg.reserve(total - nfg);
    for (int64_t i = 0; i < total; ++i) {
        if (fg(gt.v[i])) {
            xs_fg.push_back(pred.v[i]);
        } else {
            xs_bg.push_back(1.0 - pred.v[i]);
        }
    }
    double s_obj = mu * object_score(xs_fg) + (1.0 - mu) * object_score(xs_bg);

    // region similarity: 4-way split at the (rounded) foreground centroid
    double rsum = 0.0, csum = 0.0;
    for (int i = 0; i < gt.h; ++i) {
        for (int j = 0; j < gt.w; ++j) {
            if (fg(gt.v[static_cast<size_t>(i) * gt.w + j])) {
                rsum += i;
                csum += j;
            }
        }
    }
    int cy = static_cast<int>(std::lround(rsum / static_cast<double>(nfg))) + 1;
    int cx = static_cast<int>(std::lround(csum / static_cast<double>(nfg))) + 1;
    cy = std::clamp(cy, 1, gt.h);
    cx = std::clamp(cx, 1, gt.w);

    double s_reg = 0.0;
    const int rs[3] = {0, cy, gt.h};
    const int cs[3] = {0, cx, gt.w};
    for (int bi = 0; bi < 2; ++bi) {
        for (int bj = 0; bj < 2; ++bj) {
            int64_t area = static_cast<int64_t>(rs[bi + 1] - rs[bi]) * (cs[bj + 1] - cs[bj]);
            if (area == 0) continue;
            double wgt = static_cast<double>(area) / static_cast<double>(total);
            s_reg += wgt * block_ssim(pred, gt, rs[bi], rs[bi + 1], cs[bj], cs[bj + 1]);
        }
    }

    return std::clamp(alpha * s_obj + (1.0 - alpha) * s_reg, 0.0, 1.0);
}

double e_measure(const Gray& pred, const Gray& gt) {
    check_pair("e_measure", pred, gt);
    std::vector<uint8_t> b = adaptive_binarize(pred);
    int64_t total = static_cast<int64_t>(gt.h) * gt.w;
    int64_t nfg = 0, nb = 0;
    for (int64_t i = 0; i < total; ++i) {
        nfg += fg(gt.v[i]) ? 1 : 0;
        nb += b[i];
    }
    if (nfg == 0) return 1.0 - static_cast<double>(nb) / static_cast<double>(total);
    if (nfg == total) return static_cast<double>(nb) / static_cast<double>(total);

    double mg = static_cast<double>(nfg) / static_cast<double>(total);
    double mb = static_cast<double>(nb) / static_cast<double>(total);
    double sum = 0.0;
    for (int64_t i = 0; i < total; ++i) {
        double pg = (fg(gt.v[i]) ? 1.0 : 0.0) - mg;
        double pb = static_cast<double>(b[i]) - mb;
        double align = 2.0 * pg * pb / (pg * pg + pb * pb + kEps);
        double enhanced = (align + 1.0) * (align + 1.0) / 4.0;
        sum += enhanced;
    }
    return sum / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// dataset evaluation

namespace {

int thread_budget() {
    if (const char* env = std::getenv("F3KIT_THREADS")) {
        int t = std::atoi(env);
        if (t >= 1) return t;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

template <typename Fn>
void parallel_for(int count, Fn&& fn) {
    int threads = std::min(thread_budget(), count);
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (int i = t; i < count; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

Gray binarize_gt(const Gray8& img) {
    Gray g{img.h, img.w, std::vector<double>(img.v.size())};
    for (size_t i = 0; i < img.v.size(); ++i) g.v[i] = img.v[i] >= 128 ? 1.0 : 0.0;
    return g;
}

Gray resize_gray(const Gray& g, int h, int w) {
    if (g.h == h && g.w == w) return g;
    NoGradGuard guard;
    Tensor t = Tensor::from_vector({1, 1, g.h, g.w}, g.v);
    Tensor r = bilinear_resize(t, h, w);
    return Gray{h, w, std::vector<double>(r.values().begin(), r.values().end())};
}

std::vector<std::string> list_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        fail(ErrorKind::io, "not a directory: " + dir.string());
    }
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

}  // namespace

MetricReport evaluate_dataset(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& gt_dir) {
    auto preds = list_files(pred_dir);
    auto gts = list_files(gt_dir);
    std::string missing;
    for (const auto& n : gts) {
        if (!std::binary_search(preds.begin(), preds.end(), n)) missing += " missing-pred:" + n;
    }
    for (const auto& n : preds) {
        if (!std::binary_search(gts.begin(), gts.end(), n)) missing += " extra-pred:" + n;
    }
    if (!missing.empty()) {
        fail(ErrorKind::io, "prediction/ground-truth file sets differ:" + missing);
    }
    if (gts.empty()) fail(ErrorKind::io, "no images found in " + gt_dir.string());

    int count = static_cast<int>(gts.size());
    std::vector<PerImageMetrics> per(count);
    std::vector<PrCurve> curves(count);
    std::vector<std::string> errors(count);
    parallel_for(count, [&](int i) {
        try {
            Gray gt = binarize_gt(load_gray8(gt_dir / gts[i]));
            Gray pred = to_unit(load_gray8(pred_dir / gts[i]));
            pred = resize_gray(pred, gt.h, gt.w);
            per[i] = {gts[i], mae(pred, gt), mean_f(pred, gt), s_measure(pred, gt),
                      e_measure(pred, gt)};
            curves[i] = pr_curve(pred, gt);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) fail(ErrorKind::data_format, e);
    }

    MetricReport r;
    r.count = count;
    r.per_image = per;
    for (const auto& m : per) {
        r.mae += m.mae;
        r.mean_f += m.mean_f;
        r.s += m.s;
        r.e += m.e;
    }
    r.mae /= count;
    r.mean_f /= count;
    r.s /= count;
    r.e /= count;
    for (int t = 0; t < 256; ++t) {
        double p = 0.0, rc = 0.0;
        for (const auto& c : curves) {
            p += c.precision[t];
            rc += c.recall[t];
        }
        r.curve.precision[t] = p / count;
        r.curve.recall[t] = rc / count;
        r.f[t] = fmeasure(r.curve.precision[t], r.curve.recall[t]);
    }
    return r;
}

void write_report_json(const MetricReport& r, const std::filesystem::path& path) {
    nlohmann::json j;
    j["count"] = r.count;
    j["mae"] = r.mae;
    j["mean_f"] = r.mean_f;
    j["s_measure"] = r.s;
    j["e_measure"] = r.e;
    auto images = nlohmann::json::array();
    for (const auto& m : r.per_image) {
        images.push_back({{"name", m.name},
                          {"mae", m.mae},
                          {"mean_f", m.mean_f},
                          {"s_measure", m.s},
                          {"e_measure", m.e}});
    }
    j["per_image"] = images;
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

void write_curves_csv(const MetricReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << "threshold,precision,recall,f\n";
    out.precision(17);
    for (int t = 0; t < 256; ++t) {
        out << t << "," << r.curve.precision[t] << "," << r.curve.recall[t] << "," << r.f[t]
            << "\n";
    }
    if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

}  // namespace f3kit
