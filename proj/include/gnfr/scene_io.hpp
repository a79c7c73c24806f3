#ifndef GNFR_SCENE_IO_HPP
#define GNFR_SCENE_IO_HPP

#include "gnfr/common.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace gnfr {

// Per-pixel binary flare map, 1 = flare-affected.
struct OccupancyMask {
    int h = 0, w = 0;
    std::vector<uint8_t> bits;
    double occupancy = 0.0;

    static OccupancyMask from_bits(int h, int w, std::vector<uint8_t> bits);
    uint8_t at(int y, int x) const { return bits[static_cast<size_t>(y) * w + x]; }
};

// One posed image. Pose is camera-to-world, x-right / y-down / z-forward.
struct CameraView {
    Image image;                       // linear RGB in [0,1]
    Eigen::Matrix3d K;                 // fx, fy, cx, cy, zero skew
    Eigen::Matrix<double, 3, 4> c2w;
    double near = 0.0, far = 0.0;
    std::optional<OccupancyMask> mask;
    std::string id;                    // image file stem

    Eigen::Vector3d center() const { return c2w.col(3); }
    Eigen::Matrix3d rotation() const { return c2w.leftCols<3>(); }
};

enum class Split { train, eval };

struct SceneDataset {
    std::vector<CameraView> views;
    std::string scene_id;
    Split split = Split::train;

    int height() const { return views.empty() ? 0 : views[0].image.h; }
    int width() const { return views.empty() ? 0 : views[0].image.w; }
};

// Throws BadPose / BadBounds / ShapeMismatch on invariant violations.
void validate_view(const CameraView& v, const std::string& name);

SceneDataset load_scene(const std::string& root);
void write_scene(const SceneDataset& scene, const std::string& root);

// Writes <out_dir>/<view_id>.png (8-bit, gamma encoded); returns the path.
std::string save_rendered(const std::string& view_id, const Image& image,
                          const std::string& out_dir);

// sRGB-like gamma 2.2 transfer used for all stored PNGs
uint8_t linear_to_byte(double v);
double byte_to_linear(uint8_t b);

Image load_image_png(const std::string& path);            // -> linear RGB
void save_image_png(const std::string& path, const Image& img);
OccupancyMask load_mask_png(const std::string& path);     // >= 128 -> 1
void save_mask_png(const std::string& path, const OccupancyMask& mask);

}  // namespace gnfr

#endif
