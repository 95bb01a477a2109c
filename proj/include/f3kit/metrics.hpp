#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "f3kit/image.hpp"

namespace f3kit {

// Saliency evaluation. Predictions are [0,1] grayscale maps, ground truth is
// binary. Threshold curves quantize the prediction to 8 bits (round half up)
// and count a pixel as foreground when its quantized value is >= t.
// Conventions: precision and recall are 1 when they have no denominator,
// F is 0 when precision + recall is 0.

double mae(const Gray& pred, const Gray& gt);

struct PrCurve {
    std::array<double, 256> precision, recall;
};

PrCurve pr_curve(const Gray& pred, const Gray& gt);
std::array<double, 256> f_curve(const Gray& pred, const Gray& gt);

// F-measure (beta^2 = 0.3) at the adaptive threshold min(2*mean, 1);
// an all-zero prediction binarizes to empty
double mean_f(const Gray& pred, const Gray& gt);

// structure measure: alpha * object similarity + (1-alpha) * region
// similarity over a 4-way split at the ground-truth centroid
double s_measure(const Gray& pred, const Gray& gt, double alpha = 0.5);

// enhanced-alignment measure on the adaptively binarized prediction
double e_measure(const Gray& pred, const Gray& gt);

struct PerImageMetrics {
    std::string name;
    double mae, mean_f, s, e;
};

struct MetricReport {
    int count = 0;
    double mae = 0, mean_f = 0, s = 0, e = 0;  // dataset means
    PrCurve curve;                              // per-threshold averages
    std::array<double, 256> f{};                // from the averaged curve
    std::vector<PerImageMetrics> per_image;
};

// Evaluates matching filenames from two directories; predictions are resized
// to the ground-truth geometry when they differ. Unmatched files are errors.
// Honors F3KIT_THREADS for per-image parallelism; aggregation order is fixed.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& gt_dir);

void write_report_json(const MetricReport& r, const std::filesystem::path& path);
void write_curves_csv(const MetricReport& r, const std::filesystem::path& path);

}  // namespace f3kit
