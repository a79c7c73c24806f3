#include "gnfr/eval.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace gnfr {

static void check_same_shape(const Image& a, const Image& b, const char* who) {
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw ShapeMismatch(std::string(who) + ": image shapes differ");
}

double psnr(const Image& a, const Image& b, const OccupancyMask* region) {
    check_same_shape(a, b, "psnr");
    if (region && (region->h != a.h || region->w != a.w))
        throw ShapeMismatch("psnr: region mask shape differs");
    double se = 0.0;
    size_t n = 0;
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
            if (region && !region->at(y, x)) continue;
            for (int c = 0; c < a.c; ++c) {
                double d = a.at(y, x, c) - b.at(y, x, c);
                se += d * d;
                ++n;
            }
        }
    if (n == 0) throw EmptyRegion("psnr: region mask selects no pixels");
    double mse = se / static_cast<double>(n);
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> luma(const Image& img) {
    std::vector<double> y(static_cast<size_t>(img.h) * img.w);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            y[static_cast<size_t>(r) * img.w + c] =
                img.c == 3 ? 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) +
                                 0.114 * img.at(r, c, 2)
                           : img.at(r, c, 0);
    return y;
}

// separable Gaussian blur with edge clamping
std::vector<double> gauss_blur(const std::vector<double>& src, int h, int w,
                               const std::vector<double>& kern) {
    int r = static_cast<int>(kern.size()) / 2;
    std::vector<double> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                int xx = std::clamp(x + k, 0, w - 1);
                s += kern[k + r] * src[static_cast<size_t>(y) * w + xx];
            }
            tmp[static_cast<size_t>(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                int yy = std::clamp(y + k, 0, h - 1);
                s += kern[k + r] * tmp[static_cast<size_t>(yy) * w + x];
            }
            out[static_cast<size_t>(y) * w + x] = s;
        }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    check_same_shape(a, b, "ssim");
    const int win = 11;
    const double sigma = 1.5, k1 = 0.01, k2 = 0.03;
    std::vector<double> kern(win);
    double ks = 0.0;
    for (int i = 0; i < win; ++i) {
        double d = i - win / 2;
        kern[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        ks += kern[i];
    }
    for (auto& v : kern) v /= ks;

    std::vector<double> x = luma(a), y = luma(b);
    size_t n = x.size();
    std::vector<double> xx(n), yy(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    auto mx = gauss_blur(x, a.h, a.w, kern);
    auto my = gauss_blur(y, a.h, a.w, kern);
    auto mxx = gauss_blur(xx, a.h, a.w, kern);
    auto myy = gauss_blur(yy, a.h, a.w, kern);
    auto mxy = gauss_blur(xy, a.h, a.w, kern);

    const double c1 = k1 * k1, c2 = k2 * k2;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double vx = mxx[i] - mx[i] * mx[i];
        double vy = myy[i] - my[i] * my[i];
        double cxy = mxy[i] - mx[i] * my[i];
        double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
        double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        acc += num / den;
    }
    return acc / static_cast<double>(n);
}

EvalSummary evaluate_renders(const SceneDataset& scene, const std::string& render_dir) {
    namespace fs = std::filesystem;
    EvalSummary sum;
    double psnr_acc = 0.0, ssim_acc = 0.0, flare_acc = 0.0;
    int flare_n = 0;
    for (const auto& view : scene.views) {
        fs::path p = fs::path(render_dir) / (view.id + ".png");
        if (!fs::exists(p)) continue;
        Image rendered = load_image_png(p.string());
        EvalResult r;
        r.view_id = view.id;
        r.psnr_full = psnr(rendered, view.image);
        r.ssim_full = ssim(rendered, view.image);
        if (view.mask && view.mask->occupancy > 0.0) {
            r.psnr_flare = psnr(rendered, view.image, &*view.mask);
            flare_acc += *r.psnr_flare;
            ++flare_n;
        }
        psnr_acc += r.psnr_full;
        ssim_acc += r.ssim_full;
        sum.per_view.push_back(std::move(r));
    }
    if (sum.per_view.empty())
        throw MissingFile("no rendered views found under " + render_dir);
    sum.mean_psnr = psnr_acc / sum.per_view.size();
    sum.mean_ssim = ssim_acc / sum.per_view.size();
    if (flare_n > 0) sum.mean_psnr_flare = flare_acc / flare_n;
    return sum;
}

std::string EvalSummary::to_json() const {
    nlohmann::json j;
    j["mean_psnr"] = mean_psnr;
    j["mean_ssim"] = mean_ssim;
    if (mean_psnr_flare) j["mean_psnr_flare"] = *mean_psnr_flare;
    j["views"] = nlohmann::json::array();
    for (const auto& r : per_view) {
        nlohmann::json v;
        v["id"] = r.view_id;
        v["psnr"] = r.psnr_full;
        v["ssim"] = r.ssim_full;
        if (r.psnr_flare) v["psnr_flare"] = *r.psnr_flare;
        j["views"].push_back(v);
    }
    return j.dump(2);
}

std::string ablation_markdown(const EvalSummary& masked, const EvalSummary& vanilla) {
    char buf[512];
    std::string out = "| metric | masked | vanilla | delta |\n|---|---|---|---|\n";
    auto row = [&](const char* name, double a, double b) {
        std::snprintf(buf, sizeof(buf), "| %s | %.4f | %.4f | %+.4f |\n", name, a, b, a - b);
        out += buf;
    };
    row("PSNR (dB)", masked.mean_psnr, vanilla.mean_psnr);
    row("SSIM", masked.mean_ssim, vanilla.mean_ssim);
    if (masked.mean_psnr_flare && vanilla.mean_psnr_flare)
        row("flare-region PSNR (dB)", *masked.mean_psnr_flare, *vanilla.mean_psnr_flare);
    return out;
}

void write_difference_heatmap(const Image& a, const Image& b, const std::string& path) {
    check_same_shape(a, b, "difference heatmap");
    Image out(a.h, a.w, 3);
    double peak = 1e-12;
    std::vector<double> mag(static_cast<size_t>(a.h) * a.w);
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
            double m = 0.0;
            for (int c = 0; c < a.c; ++c) m += std::abs(a.at(y, x, c) - b.at(y, x, c));
            m /= a.c;
            mag[static_cast<size_t>(y) * a.w + x] = m;
            peak = std::max(peak, m);
        }
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
            double t = mag[static_cast<size_t>(y) * a.w + x] / peak;  // 0 = black, 1 = red-hot
            out.at(y, x, 0) = t;
            out.at(y, x, 1) = t * t;
            out.at(y, x, 2) = t * t * t;
        }
    save_image_png(path, out);
}

}  // namespace gnfr
