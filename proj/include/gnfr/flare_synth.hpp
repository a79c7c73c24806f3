#ifndef GNFR_FLARE_SYNTH_HPP
#define GNFR_FLARE_SYNTH_HPP

#include "gnfr/scene_io.hpp"

#include <utility>

namespace gnfr {

// Dark-background flare photograph plus its annotated binary mask.
struct FlarePattern {
    Image image;          // linear RGB
    OccupancyMask mask;   // 1 = flare
};

// Random affine applied jointly to a flare pattern and its mask.
// translation is a fraction of the base image extent per axis.
struct AffineParams {
    double rotation = 0.0;          // radians, [-pi, pi]
    double scale[2] = {1.0, 1.0};   // [0.5, 1.5] per axis
    double translation[2] = {0.0, 0.0};  // [-0.25, 0.25] of extent
    double shear = 0.0;             // radians, [-0.2, 0.2]
    bool flip[2] = {false, false};
};

AffineParams sample_affine(uint64_t rng_seed);

// Pattern -> base pixel mapping (pattern center to base center plus the
// sampled translation). Throws DegenerateTransform if |det| < 1e-6.
Eigen::Matrix3d affine_matrix(const AffineParams& p, int pat_h, int pat_w, int base_h,
                              int base_w);

// out image = clip(base + warp(pattern), 0, 1); mask warped by the identical
// transform with nearest-neighbor resampling. Out-of-bounds regions add zero.
std::pair<Image, OccupancyMask> composite_flare_image(const Image& base,
                                                      const FlarePattern& pattern,
                                                      const AffineParams& params);

std::pair<CameraView, OccupancyMask> composite_flare(const CameraView& base,
                                                     const FlarePattern& pattern,
                                                     const AffineParams& params);

// --- toy scenes ------------------------------------------------------------

enum class ToyPreset { plane, box };

struct ToySceneConfig {
    ToyPreset preset = ToyPreset::plane;
    int views = 8;
    int res = 64;
    double arc_degrees = 60.0;
    double radius = 4.0;
};

// The plane preset places its textured Lambertian plane at world z = 0;
// cameras sit on an arc at negative z looking at the origin. Geometry is
// analytic so reprojection oracles exist.
constexpr double kToyPlaneZ = 0.0;

SceneDataset generate_toy_scene(const ToySceneConfig& cfg, uint64_t rng_seed);

// Smooth procedural texture in [0,1] (multi-view-consistent plane albedo and
// stand-in for an external photo corpus).
Image generate_texture_image(int h, int w, uint64_t seed);
// Plane albedo at world (x, y); generate_toy_scene renders through this.
Eigen::Vector3d toy_plane_albedo(double x, double y, uint64_t seed);

// Procedural flare pattern (halo + streaks on dark background) with mask.
FlarePattern generate_flare_pattern(int h, int w, uint64_t seed);

// patterns_dir layout: NNN.png plus optional NNN_mask.png; without a mask
// file the mask is derived by luminance threshold.
std::vector<FlarePattern> load_flare_patterns(const std::string& dir);

// Composites one random pattern per view and attaches ground-truth masks.
// Each view is flared independently with probability flare_prob; skipped
// views get an all-zero mask (flare is view-dependent, so real captures mix
// clean and corrupted viewpoints).
void add_flare_to_scene(SceneDataset& scene, const std::vector<FlarePattern>& patterns,
                        uint64_t seed, double flare_prob = 1.0);

// Writes n_out (flare, clean, mask) triples to out/{flare,clean,mask}/NNNNN.png.
void build_flare_corpus(const std::string& images_dir, const std::string& patterns_dir,
                        int n_out, uint64_t rng_seed, const std::string& out_dir);

}  // namespace gnfr

#endif
