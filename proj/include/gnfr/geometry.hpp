#ifndef GNFR_GEOMETRY_HPP
#define GNFR_GEOMETRY_HPP

#include "gnfr/scene_io.hpp"

#include <cstdint>
#include <vector>

namespace gnfr {

// Batched rays through target pixels, with per-ray depth samples.
struct RayBundle {
    std::vector<Eigen::Vector3d> origins;     // B
    std::vector<Eigen::Vector3d> directions;  // B, unit
    std::vector<std::vector<double>> depths;  // B x M, strictly increasing
    std::vector<Eigen::Vector2i> target_pixel;
    std::vector<Eigen::Vector3d> target_rgb;
    std::vector<uint8_t> target_mask_bit;
    double near = 0.0, far = 0.0;

    size_t size() const { return origins.size(); }
};

// Dense per-view feature map with sub-pixel bilinear lookup.
struct FeatureGrid {
    int h = 0, w = 0, d = 0;
    std::vector<double> values;  // h x w x d, row-major, channel-interleaved
    int view_index = -1;

    const double* cell(int y, int x) const {
        return values.data() + (static_cast<size_t>(y) * w + x) * d;
    }
};

struct Projection {
    Eigen::Vector2d uv;  // image pixel coordinates
    double depth = 0.0;
    bool valid = false;
};

enum class DepthMode { deterministic, stratified };

// o = camera center, d = normalized c2w * K^-1 * (u+0.5, v+0.5, 1)
RayBundle rays_for_pixels(const CameraView& view, const std::vector<Eigen::Vector2i>& pixels);

std::vector<double> sample_depths(double near, double far, int m, DepthMode mode, Rng& rng);

Projection project(const Eigen::Vector3d& x, const CameraView& view);

// uv in grid coordinates (caller maps image->grid scale); exact at lattice points
std::vector<double> bilinear(const FeatureGrid& grid, const Eigen::Vector2d& uv);

// image-pixel uv -> grid coords for a grid at reduced resolution
Eigen::Vector2d image_to_grid(const Eigen::Vector2d& uv, int img_h, int img_w, int grid_h,
                              int grid_w);

// nearest-neighbor lookup; uv in image pixel coordinates
uint8_t sample_mask_bit(const OccupancyMask& mask, const Eigen::Vector2d& uv);

}  // namespace gnfr

#endif
