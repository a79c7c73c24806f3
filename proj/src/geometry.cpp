#include "gnfr/geometry.hpp"

#include <cmath>

namespace gnfr {

RayBundle rays_for_pixels(const CameraView& view, const std::vector<Eigen::Vector2i>& pixels) {
    RayBundle rays;
    rays.near = view.near;
    rays.far = view.far;
    Eigen::Matrix3d kinv = view.K.inverse();
    Eigen::Matrix3d rot = view.rotation();
    Eigen::Vector3d center = view.center();
    rays.origins.reserve(pixels.size());
    rays.directions.reserve(pixels.size());
    for (const auto& p : pixels) {
        if (p.x() < 0 || p.x() >= view.image.w || p.y() < 0 || p.y() >= view.image.h)
            throw OutOfBounds("pixel (" + std::to_string(p.x()) + "," + std::to_string(p.y()) +
                              ") outside image");
        Eigen::Vector3d cam = kinv * Eigen::Vector3d(p.x() + 0.5, p.y() + 0.5, 1.0);
        Eigen::Vector3d d = (rot * cam).normalized();
        rays.origins.push_back(center);
        rays.directions.push_back(d);
        rays.target_pixel.push_back(p);
        if (view.image.c == 3)
            rays.target_rgb.emplace_back(view.image.at(p.y(), p.x(), 0),
                                         view.image.at(p.y(), p.x(), 1),
                                         view.image.at(p.y(), p.x(), 2));
        else
            rays.target_rgb.emplace_back(0, 0, 0);
        rays.target_mask_bit.push_back(view.mask ? view.mask->at(p.y(), p.x()) : 0);
    }
    return rays;
}

std::vector<double> sample_depths(double near, double far, int m, DepthMode mode, Rng& rng) {
    if (m < 1 || !(near < far)) throw BadBounds("sample_depths: need m >= 1 and near < far");
    std::vector<double> t(m);
    double bin = (far - near) / m;
    for (int i = 0; i < m; ++i) {
        double u = mode == DepthMode::deterministic ? 0.5 : rng.uniform();
        t[i] = near + (i + u) * bin;
    }
    return t;
}

Projection project(const Eigen::Vector3d& x, const CameraView& view) {
    Projection pr;
    Eigen::Matrix3d rot = view.rotation();
    Eigen::Vector3d cam = rot.transpose() * (x - view.center());
    pr.depth = cam.z();
    if (pr.depth <= 0.0) {
        pr.uv.setZero();
        pr.valid = false;
        return pr;
    }
    Eigen::Vector3d p = view.K * cam;
    pr.uv = Eigen::Vector2d(p.x() / p.z(), p.y() / p.z());
    pr.valid = pr.uv.x() >= 0.0 && pr.uv.x() < view.image.w && pr.uv.y() >= 0.0 &&
               pr.uv.y() < view.image.h;
    return pr;
}

std::vector<double> bilinear(const FeatureGrid& grid, const Eigen::Vector2d& uv) {
    double x = uv.x(), y = uv.y();
    if (x < 0.0 || x > grid.w - 1 || y < 0.0 || y > grid.h - 1)
        throw OutOfBounds("bilinear uv outside grid");
    int x0 = std::min(static_cast<int>(x), grid.w - 2 >= 0 ? grid.w - 2 : 0);
    int y0 = std::min(static_cast<int>(y), grid.h - 2 >= 0 ? grid.h - 2 : 0);
    int x1 = std::min(x0 + 1, grid.w - 1);
    int y1 = std::min(y0 + 1, grid.h - 1);
    double fx = x - x0, fy = y - y0;
    const double *c00 = grid.cell(y0, x0), *c01 = grid.cell(y0, x1), *c10 = grid.cell(y1, x0),
                 *c11 = grid.cell(y1, x1);
    std::vector<double> out(grid.d);
    for (int c = 0; c < grid.d; ++c)
        out[c] = (1 - fy) * ((1 - fx) * c00[c] + fx * c01[c]) +
                 fy * ((1 - fx) * c10[c] + fx * c11[c]);
    return out;
}

Eigen::Vector2d image_to_grid(const Eigen::Vector2d& uv, int img_h, int img_w, int grid_h,
                              int grid_w) {
    double gx = uv.x() * grid_w / img_w - 0.5;
    double gy = uv.y() * grid_h / img_h - 0.5;
    gx = std::min(std::max(gx, 0.0), static_cast<double>(grid_w - 1));
    gy = std::min(std::max(gy, 0.0), static_cast<double>(grid_h - 1));
    return {gx, gy};
}

uint8_t sample_mask_bit(const OccupancyMask& mask, const Eigen::Vector2d& uv) {
    int x = static_cast<int>(std::floor(uv.x()));
    int y = static_cast<int>(std::floor(uv.y()));
    if (x < 0 || x >= mask.w || y < 0 || y >= mask.h)
        throw OutOfBounds("mask uv outside bounds");
    return mask.at(y, x);
}

}  // namespace gnfr
