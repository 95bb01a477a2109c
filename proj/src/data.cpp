#include "f3kit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "f3kit/error.hpp"
#include "f3kit/image.hpp"

namespace f3kit {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ShapeSpec {
    int kind;  // 0 ellipse, 1 rounded rectangle, 2 star
    double cx, cy, rot;
    double a, b, extra;  // semi-axes / corner radius / inner radius
    int spikes;
    double color[3];
};

bool inside(const ShapeSpec& s, double x, double y) {
    double dx = (x - s.cx) * std::cos(s.rot) + (y - s.cy) * std::sin(s.rot);
    double dy = -(x - s.cx) * std::sin(s.rot) + (y - s.cy) * std::cos(s.rot);
    switch (s.kind) {
        case 0: {
            double u = dx / s.a, v = dy / s.b;
            return u * u + v * v <= 1.0;
        }
        case 1: {
            double r = s.extra;
            double qx = std::fabs(dx) - (s.a - r);
            double qy = std::fabs(dy) - (s.b - r);
            double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
            double d = std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0) - r;
            return d <= 0.0;
        }
        default: {
            double rad = std::sqrt(dx * dx + dy * dy);
            if (rad <= s.extra) return true;
            if (rad > s.a) return false;
            double m = 2.0 * kPi / s.spikes;
            double ang = std::atan2(dy, dx);
            double phi = std::fmod(ang, m);
            if (phi < 0) phi += m;
            // fold so phi is the angle away from the nearest inner vertex
            phi = std::fabs(phi - m / 2.0);
            // boundary: segment from the inner vertex (extra, 0) to the outer
            // spike tip at angle m/2
            double ox = s.a * std::cos(m / 2.0), oy = s.a * std::sin(m / 2.0);
            double den = oy * std::cos(phi) - (ox - s.extra) * std::sin(phi);
            if (den <= 0.0) return false;
            double bound = oy * s.extra / den;
            return rad <= bound;
        }
    }
}

bool inside_any(const std::vector<ShapeSpec>& shapes, double x, double y) {
    for (const auto& s : shapes) {
        if (inside(s, x, y)) return true;
    }
    return false;
}

// 4x4 supersampled coverage of one pixel
double coverage(const std::vector<ShapeSpec>& shapes, int px, int py) {
    int hit = 0;
    for (int sy = 0; sy < 4; ++sy) {
        for (int sx = 0; sx < 4; ++sx) {
            double x = px + (sx + 0.5) / 4.0;
            double y = py + (sy + 0.5) / 4.0;
            hit += inside_any(shapes, x, y) ? 1 : 0;
        }
    }
    return hit / 16.0;
}

struct Background {
    int size;
    double base[3], gx[3], gy[3];
    double amp[3][2], fx[3][2], fy[3][2], ph[3][2];
    std::vector<double> noise_grid;  // (g+1)^2 shared value noise
    int g = 8;
    double namp;

    double at(int c, int x, int y) const {
        double u = static_cast<double>(x) / size;
        double v = static_cast<double>(y) / size;
        double val = base[c] + gx[c] * u + gy[c] * v;
        for (int q = 0; q < 2; ++q) {
            val += amp[c][q] * std::sin(2.0 * kPi * (fx[c][q] * u + fy[c][q] * v) + ph[c][q]);
        }
        // bilinear value noise
        double gu = u * g, gv = v * g;
        int i0 = std::min(static_cast<int>(gv), g - 1);
        int j0 = std::min(static_cast<int>(gu), g - 1);
        double fu = gu - j0, fv = gv - i0;
        auto n = [&](int i, int j) { return noise_grid[static_cast<size_t>(i) * (g + 1) + j]; };
        double top = n(i0, j0) + fu * (n(i0, j0 + 1) - n(i0, j0));
        double bot = n(i0 + 1, j0) + fu * (n(i0 + 1, j0 + 1) - n(i0 + 1, j0));
        return val + namp * (top + fv * (bot - top));
    }
};

Background make_background(int size, Rng& rng) {
    Background bg;
    bg.size = size;
    for (int c = 0; c < 3; ++c) {
        bg.base[c] = rng.uniform(0.2, 0.6);
        bg.gx[c] = rng.uniform(-0.15, 0.15);
        bg.gy[c] = rng.uniform(-0.15, 0.15);
        for (int q = 0; q < 2; ++q) {
            bg.amp[c][q] = rng.uniform(0.02, 0.08);
            bg.fx[c][q] = rng.uniform(0.5, 2.5);
            bg.fy[c][q] = rng.uniform(0.5, 2.5);
            bg.ph[c][q] = rng.uniform(0.0, 2.0 * kPi);
        }
    }
    bg.noise_grid.resize(static_cast<size_t>(bg.g + 1) * (bg.g + 1));
    for (auto& v : bg.noise_grid) v = rng.uniform(-1.0, 1.0);
    bg.namp = rng.uniform(0.02, 0.06);
    return bg;
}

ShapeSpec draw_shape(int size, Rng& rng, const double bg_base[3]) {
    ShapeSpec s{};
    s.kind = rng.uniform_int(3);
    s.cx = rng.uniform(0.22, 0.78) * size;
    s.cy = rng.uniform(0.22, 0.78) * size;
    s.rot = rng.uniform(0.0, kPi);
    double r = rng.uniform(0.10, 0.28) * size;
    switch (s.kind) {
        case 0:
            s.a = r;
            s.b = r * rng.uniform(0.45, 1.0);
            break;
        case 1:
            s.a = r;
            s.b = r * rng.uniform(0.4, 1.0);
            s.extra = std::min(s.a, s.b) * rng.uniform(0.2, 0.6);
            break;
        default:
            s.a = r;
            s.extra = r * rng.uniform(0.22, 0.42);
            s.spikes = 5 + rng.uniform_int(3);
            break;
    }
    // strong contrast against the background base in at least two channels
    for (int tries = 0; tries < 20; ++tries) {
        int good = 0;
        for (int c = 0; c < 3; ++c) {
            s.color[c] = rng.uniform(0.0, 1.0);
            if (std::fabs(s.color[c] - bg_base[c]) >= 0.3) ++good;
        }
        if (good >= 2) break;
    }
    return s;
}

}  // namespace

void generate_dataset(const std::filesystem::path& root, int count, int size, uint64_t seed) {
    if (size % 32 != 0) {
        fail(ErrorKind::usage,
             "dataset size " + std::to_string(size) + " must be divisible by 32");
    }
    if (count < 1) fail(ErrorKind::usage, "dataset count must be positive");
    std::error_code ec;
    std::filesystem::create_directories(root / "images", ec);
    std::filesystem::create_directories(root / "masks", ec);
    if (!std::filesystem::is_directory(root / "images") ||
        !std::filesystem::is_directory(root / "masks")) {
        fail(ErrorKind::io, "cannot create dataset directories under " + root.string());
    }

    Rng base(seed);
    DatasetManifest manifest;
    manifest.root = root;
    manifest.split = "synthetic";

    for (int idx = 0; idx < count; ++idx) {
        Rng rng = base.fork(static_cast<uint64_t>(idx));
        Background bg = make_background(size, rng);

        std::vector<ShapeSpec> shapes;
        double frac = 0.0;
        std::vector<uint8_t> mask(static_cast<size_t>(size) * size);
        for (int attempt = 0; attempt < 100; ++attempt) {
            shapes.clear();
            int n_obj = 1 + rng.uniform_int(3);
            for (int o = 0; o < n_obj; ++o) shapes.push_back(draw_shape(size, rng, bg.base));
            int64_t hits = 0;
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    bool in = inside_any(shapes, x + 0.5, y + 0.5);
                    mask[static_cast<size_t>(y) * size + x] = in ? 255 : 0;
                    hits += in ? 1 : 0;
                }
            }
            frac = static_cast<double>(hits) / (static_cast<double>(size) * size);
            if (frac >= 0.05 && frac <= 0.6) break;
        }

        // faint distractors, image only
        std::vector<ShapeSpec> distractors;
        std::vector<double> dalpha;
        int nd = rng.uniform_int(3);
        for (int o = 0; o < nd; ++o) {
            ShapeSpec d{};
            d.kind = 0;
            d.cx = rng.uniform(0.1, 0.9) * size;
            d.cy = rng.uniform(0.1, 0.9) * size;
            d.rot = rng.uniform(0.0, kPi);
            double r = rng.uniform(0.05, 0.15) * size;
            d.a = r;
            d.b = r * rng.uniform(0.5, 1.0);
            for (int c = 0; c < 3; ++c) d.color[c] = rng.uniform(0.0, 1.0);
            distractors.push_back(d);
            dalpha.push_back(rng.uniform(0.05, 0.15));
        }

        Rgb8 img{size, size, std::vector<uint8_t>(static_cast<size_t>(size) * size * 3)};
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                double px[3];
                for (int c = 0; c < 3; ++c) px[c] = bg.at(c, x, y);
                for (size_t o = 0; o < distractors.size(); ++o) {
                    std::vector<ShapeSpec> one{distractors[o]};
                    double cov = coverage(one, x, y);
                    if (cov > 0.0) {
                        for (int c = 0; c < 3; ++c) {
                            px[c] += cov * dalpha[o] * (distractors[o].color[c] - px[c]);
                        }
                    }
                }
                double cov = coverage(shapes, x, y);
                if (cov > 0.0) {
                    // nearest shape's color with mild radial shading
                    const ShapeSpec* owner = &shapes[0];
                    double best = 1e30;
                    for (const auto& s : shapes) {
                        double d2 = (x - s.cx) * (x - s.cx) + (y - s.cy) * (y - s.cy);
                        if (d2 < best && inside(s, x + 0.5, y + 0.5)) {
                            best = d2;
                            owner = &s;
                        }
                    }
                    double shade = 1.0 - 0.1 * std::sqrt(best) / (owner->a + 1e-9);
                    for (int c = 0; c < 3; ++c) {
                        px[c] += cov * (owner->color[c] * shade - px[c]);
                    }
                }
                for (int c = 0; c < 3; ++c) {
                    double v = px[c] + rng.uniform(-0.02, 0.02);
                    double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
                    img.v[(static_cast<size_t>(y) * size + x) * 3 + c] =
                        static_cast<uint8_t>(std::clamp(q, 0.0, 255.0));
                }
            }
        }

        char name[32];
        std::snprintf(name, sizeof(name), "%05d.png", idx);
        save_rgb8(img, root / "images" / name);
        save_gray8(Gray8{size, size, mask}, root / "masks" / name);
        manifest.entries.push_back({std::filesystem::path("images") / name,
                                    std::filesystem::path("masks") / name});
    }
    write_manifest(manifest, root / "manifest.tsv");
}

DatasetManifest scan_dataset(const std::filesystem::path& root) {
    auto img_dir = root / "images";
    auto mask_dir = root / "masks";
    if (!std::filesystem::is_directory(img_dir) || !std::filesystem::is_directory(mask_dir)) {
        fail(ErrorKind::io, "dataset root " + root.string() + " needs images/ and masks/");
    }
    std::map<std::string, std::filesystem::path> images, masks;
    for (const auto& e : std::filesystem::directory_iterator(img_dir)) {
        if (e.is_regular_file()) images[e.path().stem().string()] = e.path();
    }
    for (const auto& e : std::filesystem::directory_iterator(mask_dir)) {
        if (e.is_regular_file()) masks[e.path().stem().string()] = e.path();
    }
    DatasetManifest m;
    m.root = root;
    m.split = "scan";
    for (const auto& [stem, path] : images) {
        auto it = masks.find(stem);
        if (it == masks.end()) {
            fail(ErrorKind::io, "image " + path.string() + " has no matching mask");
        }
        m.entries.push_back({path, it->second});
    }
    if (m.entries.empty()) fail(ErrorKind::io, "no samples under " + root.string());
    return m;
}

DatasetManifest read_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorKind::io, "cannot open manifest " + file.string());
    DatasetManifest m;
    m.root = file.parent_path();
    m.split = "manifest";
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            fail(ErrorKind::data_format, "manifest line without tab separator: " + line);
        }
        m.entries.push_back({m.root / line.substr(0, tab), m.root / line.substr(tab + 1)});
    }
    if (m.entries.empty()) fail(ErrorKind::data_format, "empty manifest " + file.string());
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) fail(ErrorKind::io, "cannot write manifest " + file.string());
    for (const auto& e : m.entries) {
        out << e.image.generic_string() << "\t" << e.mask.generic_string() << "\n";
    }
    if (!out) fail(ErrorKind::io, "write failed: " + file.string());
}

Sample load_pair(const std::filesystem::path& image, const std::filesystem::path& mask) {
    Rgb8 img = load_rgb8(image);
    Gray8 msk = load_gray8(mask);
    if (img.h != msk.h || img.w != msk.w) {
        fail(ErrorKind::data_format, "image/mask size mismatch for " + image.string());
    }
    int64_t plane = static_cast<int64_t>(img.h) * img.w;
    std::vector<double> iv(plane * 3);
    for (int64_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) iv[c * plane + i] = img.v[i * 3 + c] / 255.0;
    }
    std::vector<double> mv(plane);
    for (int64_t i = 0; i < plane; ++i) mv[i] = msk.v[i] >= 128 ? 1.0 : 0.0;
    Sample s;
    s.image = Tensor::from_vector({1, 3, img.h, img.w}, std::move(iv));
    s.mask = Tensor::from_vector({1, 1, img.h, img.w}, std::move(mv));
    s.id = image.stem().string();
    return s;
}

Sample hflip(const Sample& s) {
    const Shape& is = s.image.shape();
    std::vector<double> iv(s.image.numel()), mv(s.mask.numel());
    const double* src = s.image.data();
    for (int c = 0; c < is.c; ++c) {
        for (int y = 0; y < is.h; ++y) {
            int64_t base = (static_cast<int64_t>(c) * is.h + y) * is.w;
            for (int x = 0; x < is.w; ++x) iv[base + x] = src[base + (is.w - 1 - x)];
        }
    }
    const double* msrc = s.mask.data();
    for (int y = 0; y < is.h; ++y) {
        int64_t base = static_cast<int64_t>(y) * is.w;
        for (int x = 0; x < is.w; ++x) mv[base + x] = msrc[base + (is.w - 1 - x)];
    }
    Sample out;
    out.image = Tensor::from_vector(is, std::move(iv));
    out.mask = Tensor::from_vector(s.mask.shape(), std::move(mv));
    out.id = s.id;
    return out;
}

namespace {

Tensor crop_tensor(const Tensor& t, int oy, int ox, int ch, int cw) {
    const Shape& s = t.shape();
    std::vector<double> v(static_cast<int64_t>(s.c) * ch * cw);
    const double* src = t.data();
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < ch; ++y) {
            const double* row = src + (static_cast<int64_t>(c) * s.h + oy + y) * s.w + ox;
            std::copy(row, row + cw, v.begin() + (static_cast<int64_t>(c) * ch + y) * cw);
        }
    }
    return Tensor::from_vector({1, s.c, ch, cw}, std::move(v));
}

Tensor binarize_mask(const Tensor& t) {
    std::vector<double> v(t.numel());
    const double* src = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) v[i] = src[i] >= 0.5 ? 1.0 : 0.0;
    return Tensor::from_vector(t.shape(), std::move(v));
}

}  // namespace

Sample resize_sample(const Sample& s, int h, int w) {
    if (s.image.shape().h == h && s.image.shape().w == w) return s;
    NoGradGuard guard;
    Sample out;
    out.image = bilinear_resize(s.image, h, w).detach();
    out.mask = binarize_mask(bilinear_resize(s.mask, h, w));
    out.id = s.id;
    return out;
}

Sample random_crop(const Sample& s, double ratio, Rng& rng) {
    if (!(ratio > 0.5) || ratio > 1.0) {
        fail(ErrorKind::usage, "crop ratio must lie in (0.5, 1], got " + std::to_string(ratio));
    }
    const Shape& is = s.image.shape();
    int ch = std::max(1, static_cast<int>(std::lround(ratio * is.h)));
    int cw = std::max(1, static_cast<int>(std::lround(ratio * is.w)));
    int oy = rng.uniform_int(is.h - ch + 1);
    int ox = rng.uniform_int(is.w - cw + 1);
    if (ch == is.h && cw == is.w) return s;
    NoGradGuard guard;
    Sample out;
    out.image = bilinear_resize(crop_tensor(s.image, oy, ox, ch, cw), is.h, is.w).detach();
    out.mask = binarize_mask(bilinear_resize(crop_tensor(s.mask, oy, ox, ch, cw), is.h, is.w));
    out.id = s.id;
    return out;
}

Sample multiscale(const Sample& s, double scale) {
    const Shape& is = s.image.shape();
    int th = std::max(32, 32 * static_cast<int>(std::lround(scale * is.h / 32.0)));
    int tw = std::max(32, 32 * static_cast<int>(std::lround(scale * is.w / 32.0)));
    if (th == is.h && tw == is.w) return s;
    return resize_sample(s, th, tw);
}

}  // namespace f3kit
