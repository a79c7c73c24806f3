#include "gnfr/flare_synth.hpp"

#include "gnfr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace fs = std::filesystem;

namespace gnfr {

AffineParams sample_affine(uint64_t rng_seed) {
    Rng rng(rng_seed);
    AffineParams p;
    p.rotation = rng.uniform(-M_PI, M_PI);
    p.scale[0] = rng.uniform(0.5, 1.5);
    p.scale[1] = rng.uniform(0.5, 1.5);
    p.translation[0] = rng.uniform(-0.25, 0.25);
    p.translation[1] = rng.uniform(-0.25, 0.25);
    p.shear = rng.uniform(-0.2, 0.2);
    p.flip[0] = rng.bernoulli();
    p.flip[1] = rng.bernoulli();
    return p;
}

Eigen::Matrix3d affine_matrix(const AffineParams& p, int pat_h, int pat_w, int base_h,
                              int base_w) {
    Eigen::Matrix2d rot;
    rot << std::cos(p.rotation), -std::sin(p.rotation), std::sin(p.rotation),
        std::cos(p.rotation);
    Eigen::Matrix2d shear;
    shear << 1.0, std::tan(p.shear), 0.0, 1.0;
    Eigen::Matrix2d sc = Eigen::Vector2d(p.scale[0], p.scale[1]).asDiagonal();
    Eigen::Matrix2d fl =
        Eigen::Vector2d(p.flip[0] ? -1.0 : 1.0, p.flip[1] ? -1.0 : 1.0).asDiagonal();
    Eigen::Matrix2d lin = rot * shear * sc * fl;
    if (std::abs(lin.determinant()) < 1e-6)
        throw DegenerateTransform("affine determinant " + std::to_string(lin.determinant()));
    Eigen::Vector2d pat_c(pat_w / 2.0, pat_h / 2.0);
    Eigen::Vector2d base_c(base_w / 2.0 + p.translation[0] * base_w,
                           base_h / 2.0 + p.translation[1] * base_h);
    Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
    a.topLeftCorner<2, 2>() = lin;
    a.topRightCorner<2, 1>() = base_c - lin * pat_c;
    return a;
}

namespace {

// bilinear with zero padding, pixel centers at +0.5
void sample_pattern_bilinear(const Image& img, double px, double py, double* out) {
    double fx = px - 0.5, fy = py - 0.5;
    int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
    double wx = fx - x0, wy = fy - y0;
    for (int c = 0; c < img.c; ++c) out[c] = 0.0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            int x = x0 + dx, y = y0 + dy;
            if (x < 0 || x >= img.w || y < 0 || y >= img.h) continue;
            double w = (dx ? wx : 1 - wx) * (dy ? wy : 1 - wy);
            for (int c = 0; c < img.c; ++c) out[c] += w * img.at(y, x, c);
        }
}

uint8_t sample_pattern_nearest(const OccupancyMask& m, double px, double py) {
    int x = static_cast<int>(std::floor(px)), y = static_cast<int>(std::floor(py));
    if (x < 0 || x >= m.w || y < 0 || y >= m.h) return 0;
    return m.at(y, x);
}

double luminance(const Image& img, int y, int x) {
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

}  // namespace

std::pair<Image, OccupancyMask> composite_flare_image(const Image& base,
                                                      const FlarePattern& pattern,
                                                      const AffineParams& params) {
    Eigen::Matrix3d a =
        affine_matrix(params, pattern.image.h, pattern.image.w, base.h, base.w);
    Eigen::Matrix3d ainv = a.inverse();
    Image out = base;
    std::vector<uint8_t> bits(static_cast<size_t>(base.h) * base.w, 0);
    double flare[3];
    for (int y = 0; y < base.h; ++y)
        for (int x = 0; x < base.w; ++x) {
            Eigen::Vector3d p = ainv * Eigen::Vector3d(x + 0.5, y + 0.5, 1.0);
            sample_pattern_bilinear(pattern.image, p.x(), p.y(), flare);
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = std::min(1.0, std::max(0.0, out.at(y, x, c) + flare[c]));
            bits[static_cast<size_t>(y) * base.w + x] =
                sample_pattern_nearest(pattern.mask, p.x(), p.y());
        }
    return {std::move(out), OccupancyMask::from_bits(base.h, base.w, std::move(bits))};
}

std::pair<CameraView, OccupancyMask> composite_flare(const CameraView& base,
                                                     const FlarePattern& pattern,
                                                     const AffineParams& params) {
    auto [img, mask] = composite_flare_image(base.image, pattern, params);
    CameraView v = base;
    v.image = std::move(img);
    v.mask = mask;
    return {std::move(v), std::move(mask)};
}

// --- procedural content ----------------------------------------------------

Image generate_texture_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    struct Wave {
        double fx, fy, phase, amp;
    };
    Image img(h, w, 3);
    for (int c = 0; c < 3; ++c) {
        std::vector<Wave> waves;
        for (int i = 0; i < 4; ++i)
            waves.push_back({rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0),
                             rng.uniform(0.0, 2 * M_PI), rng.uniform(0.08, 0.22)});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = 0.5;
                for (const auto& wv : waves)
                    v += wv.amp * std::sin(2 * M_PI * (wv.fx * x / w + wv.fy * y / h) + wv.phase);
                img.at(y, x, c) = std::min(0.98, std::max(0.02, v));
            }
    }
    return img;
}

Eigen::Vector3d toy_plane_albedo(double x, double y, uint64_t seed) {
    Rng rng(seed);
    Eigen::Vector3d c;
    for (int i = 0; i < 3; ++i) {
        double f1 = rng.uniform(0.4, 1.4), f2 = rng.uniform(0.4, 1.4);
        double p1 = rng.uniform(0.0, 2 * M_PI), p2 = rng.uniform(0.0, 2 * M_PI);
        double a1 = rng.uniform(0.12, 0.25), a2 = rng.uniform(0.08, 0.18);
        double v = 0.5 + a1 * std::sin(2 * M_PI * f1 * x * 0.25 + p1) +
                   a2 * std::sin(2 * M_PI * f2 * y * 0.25 + p2) +
                   0.08 * std::sin(2 * M_PI * 0.6 * (x + y) * 0.25 + p1 + p2);
        c[i] = std::min(0.97, std::max(0.03, v));
    }
    return c;
}

namespace {

Eigen::Vector3d box_shade(const Eigen::Vector3d& hit, const Eigen::Vector3d& n, uint64_t seed) {
    // smooth per-face checker with face-tinted base
    Rng rng(seed ^ 0xb0f);
    double base_r = rng.uniform(0.35, 0.6), base_g = rng.uniform(0.35, 0.6),
           base_b = rng.uniform(0.35, 0.6);
    // coordinates within the face
    double u, v;
    if (std::abs(n.x()) > 0.5) {
        u = hit.y();
        v = hit.z();
    } else if (std::abs(n.y()) > 0.5) {
        u = hit.x();
        v = hit.z();
    } else {
        u = hit.x();
        v = hit.y();
    }
    double checker = std::sin(2 * M_PI * u / 0.7) * std::sin(2 * M_PI * v / 0.7);
    double mod = 0.22 * std::tanh(3.0 * checker);
    Eigen::Vector3d light = Eigen::Vector3d(0.4, -1.0, -0.5).normalized();
    double lam = 0.55 + 0.45 * std::max(0.0, n.dot(-light));
    Eigen::Vector3d col(base_r + mod, base_g + mod * 0.7, base_b - mod * 0.5);
    col *= lam;
    return col.cwiseMax(0.02).cwiseMin(0.98);
}

bool ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& half,
             double& t_hit, Eigen::Vector3d& n) {
    double t0 = 0.0, t1 = 1e30;
    int axis = -1;
    double sign = 0;
    for (int i = 0; i < 3; ++i) {
        double inv = 1.0 / d[i];
        double ta = (-half[i] - o[i]) * inv;
        double tb = (half[i] - o[i]) * inv;
        double s = -1;
        if (ta > tb) {
            std::swap(ta, tb);
            s = 1;
        }
        if (ta > t0) {
            t0 = ta;
            axis = i;
            sign = s;
        }
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    if (axis < 0 || t0 <= 0) return false;
    t_hit = t0;
    n = Eigen::Vector3d::Zero();
    n[axis] = sign;
    return true;
}

}  // namespace

SceneDataset generate_toy_scene(const ToySceneConfig& cfg, uint64_t rng_seed) {
    if (cfg.views < 3) throw BadSpec("toy scene needs at least 3 views");
    if (cfg.res < 8) throw BadSpec("toy scene resolution too small");
    SceneDataset scene;
    scene.scene_id = (cfg.preset == ToyPreset::plane ? "plane-" : "box-") +
                     std::to_string(rng_seed);
    int res = cfg.res;
    double r = cfg.radius;
    double half_arc = cfg.arc_degrees * M_PI / 360.0;
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = k(1, 1) = 0.8 * res;
    k(0, 2) = k(1, 2) = res / 2.0;
    uint64_t tex_seed = derive_seed(rng_seed, 7001);
    Eigen::Vector3d box_half(1.2, 0.8, 0.6);
    for (int i = 0; i < cfg.views; ++i) {
        double alpha = cfg.views == 1 ? 0.0
                                      : -half_arc + 2.0 * half_arc * i / (cfg.views - 1);
        double elev = 0.12 * r * std::sin(3.0 * alpha + 0.7);
        Eigen::Vector3d pos(r * std::sin(alpha), elev, -r * std::cos(alpha));
        Eigen::Vector3d fwd = (-pos).normalized();
        Eigen::Vector3d down_w(0, 1, 0);
        Eigen::Vector3d right = down_w.cross(fwd).normalized();
        Eigen::Vector3d down = fwd.cross(right);
        CameraView v;
        v.K = k;
        v.c2w.col(0) = right;
        v.c2w.col(1) = down;
        v.c2w.col(2) = fwd;
        v.c2w.col(3) = pos;
        v.near = 0.5 * r;
        v.far = 1.8 * r;
        v.image = Image(res, res, 3, 0.08);
        v.id = std::to_string(i);
        Eigen::Matrix3d kinv = k.inverse();
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                Eigen::Vector3d d =
                    (v.rotation() * (kinv * Eigen::Vector3d(x + 0.5, y + 0.5, 1.0)))
                        .normalized();
                Eigen::Vector3d col(0.08, 0.08, 0.08);
                if (cfg.preset == ToyPreset::plane) {
                    if (std::abs(d.z()) > 1e-12) {
                        double t = (kToyPlaneZ - pos.z()) / d.z();
                        if (t > 0) {
                            Eigen::Vector3d hit = pos + t * d;
                            col = toy_plane_albedo(hit.x(), hit.y(), tex_seed);
                        }
                    }
                } else {
                    double t;
                    Eigen::Vector3d n;
                    if (ray_box(pos, d, box_half, t, n))
                        col = box_shade(pos + t * d, n, tex_seed);
                }
                for (int c = 0; c < 3; ++c) v.image.at(y, x, c) = col[c];
            }
        scene.views.push_back(std::move(v));
    }
    return scene;
}

FlarePattern generate_flare_pattern(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, 3, 0.0);
    double cx = w * rng.uniform(0.3, 0.7), cy = h * rng.uniform(0.3, 0.7);
    double scale = std::min(h, w);
    double halo_sigma = scale * rng.uniform(0.035, 0.07);
    double halo_amp = rng.uniform(0.5, 0.9);
    int n_streaks = static_cast<int>(rng.uniform_int(2, 4));
    struct Streak {
        double theta, width, len, amp;
    };
    std::vector<Streak> streaks;
    for (int i = 0; i < n_streaks; ++i)
        streaks.push_back({rng.uniform(0, M_PI), scale * rng.uniform(0.008, 0.018),
                           scale * rng.uniform(0.15, 0.35), rng.uniform(0.35, 0.7)});
    double ring_r = scale * rng.uniform(0.09, 0.16);
    double ring_w = scale * rng.uniform(0.01, 0.022);
    double ring_amp = rng.uniform(0.15, 0.35);
    Eigen::Vector3d tint(rng.uniform(0.8, 1.0), rng.uniform(0.7, 1.0), rng.uniform(0.6, 1.0));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            double r2 = dx * dx + dy * dy;
            double v = halo_amp * std::exp(-r2 / (2 * halo_sigma * halo_sigma));
            for (const auto& s : streaks) {
                double px = dx * std::cos(s.theta) + dy * std::sin(s.theta);
                double pd = -dx * std::sin(s.theta) + dy * std::cos(s.theta);
                v += s.amp * std::exp(-pd * pd / (2 * s.width * s.width)) *
                     std::exp(-px * px / (2 * s.len * s.len));
            }
            double rr = std::sqrt(r2);
            v += ring_amp * std::exp(-(rr - ring_r) * (rr - ring_r) / (2 * ring_w * ring_w));
            if (v < 0.006) v = 0.0;  // cut faint tails so flare stays inside its mask
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::min(1.0, v * tint[c]);
        }
    std::vector<uint8_t> bits(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            bits[static_cast<size_t>(y) * w + x] = luminance(img, y, x) > 0.012 ? 1 : 0;
    FlarePattern p;
    p.image = std::move(img);
    p.mask = OccupancyMask::from_bits(h, w, std::move(bits));
    return p;
}

std::vector<FlarePattern> load_flare_patterns(const std::string& dir) {
    std::vector<fs::path> files;
    if (fs::exists(dir))
        for (const auto& e : fs::directory_iterator(dir)) {
            std::string name = e.path().filename().string();
            if (e.path().extension() == ".png" && name.find("_mask") == std::string::npos)
                files.push_back(e.path());
        }
    std::sort(files.begin(), files.end());
    std::vector<FlarePattern> out;
    for (const auto& f : files) {
        FlarePattern p;
        p.image = load_image_png(f.string());
        fs::path mp = f.parent_path() / (f.stem().string() + "_mask.png");
        if (fs::exists(mp)) {
            p.mask = load_mask_png(mp.string());
            if (p.mask.h != p.image.h || p.mask.w != p.image.w)
                throw ShapeMismatch(f.string() + ": pattern/mask size disagreement");
        } else {
            std::vector<uint8_t> bits(static_cast<size_t>(p.image.h) * p.image.w);
            for (int y = 0; y < p.image.h; ++y)
                for (int x = 0; x < p.image.w; ++x)
                    bits[static_cast<size_t>(y) * p.image.w + x] =
                        luminance(p.image, y, x) > 0.012 ? 1 : 0;
            p.mask = OccupancyMask::from_bits(p.image.h, p.image.w, std::move(bits));
        }
        out.push_back(std::move(p));
    }
    return out;
}

void add_flare_to_scene(SceneDataset& scene, const std::vector<FlarePattern>& patterns,
                        uint64_t seed, double flare_prob) {
    if (patterns.empty()) throw EmptyCorpus("no flare patterns");
    for (size_t i = 0; i < scene.views.size(); ++i) {
        Rng rng(derive_seed(seed, i));
        if (rng.uniform() >= flare_prob) {
            // flare-free view: attach an empty mask so samplers see occupancy 0
            scene.views[i].mask = OccupancyMask::from_bits(
                scene.views[i].image.h, scene.views[i].image.w,
                std::vector<uint8_t>(static_cast<size_t>(scene.views[i].image.h) *
                                         scene.views[i].image.w,
                                     0));
            continue;
        }
        const FlarePattern& pat = patterns[rng.next_u64() % patterns.size()];
        // retry extreme draws so scenes keep some trainable targets
        for (int attempt = 0; attempt < 8; ++attempt) {
            AffineParams params = sample_affine(derive_seed(seed, i * 131 + attempt + 1));
            auto [img, mask] = composite_flare_image(scene.views[i].image, pat, params);
            if (mask.occupancy > 0.30 && attempt + 1 < 8) continue;
            scene.views[i].image = std::move(img);
            scene.views[i].mask = std::move(mask);
            break;
        }
    }
}

void build_flare_corpus(const std::string& images_dir, const std::string& patterns_dir,
                        int n_out, uint64_t rng_seed, const std::string& out_dir) {
    std::vector<fs::path> bases;
    if (fs::exists(images_dir))
        for (const auto& e : fs::directory_iterator(images_dir))
            if (e.path().extension() == ".png" || e.path().extension() == ".jpg")
                bases.push_back(e.path());
    std::sort(bases.begin(), bases.end());
    if (bases.empty()) throw EmptyCorpus("no base images in " + images_dir);
    auto patterns = load_flare_patterns(patterns_dir);
    if (patterns.empty()) throw EmptyCorpus("no flare patterns in " + patterns_dir);
    fs::create_directories(fs::path(out_dir) / "flare");
    fs::create_directories(fs::path(out_dir) / "clean");
    fs::create_directories(fs::path(out_dir) / "mask");
    for (int i = 0; i < n_out; ++i) {
        Rng rng(derive_seed(rng_seed, i));
        const fs::path& base_path = bases[rng.next_u64() % bases.size()];
        const FlarePattern& pat = patterns[rng.next_u64() % patterns.size()];
        Image base = load_image_png(base_path.string());
        AffineParams params = sample_affine(derive_seed(rng_seed, 1000003ULL + i));
        auto [flared, mask] = composite_flare_image(base, pat, params);
        char name[16];
        std::snprintf(name, sizeof(name), "%05d.png", i);
        save_image_png((fs::path(out_dir) / "flare" / name).string(), flared);
        save_image_png((fs::path(out_dir) / "clean" / name).string(), base);
        save_mask_png((fs::path(out_dir) / "mask" / name).string(), mask);
    }
}

}  // namespace gnfr
