#ifndef GNFR_EVAL_HPP
#define GNFR_EVAL_HPP

#include "gnfr/scene_io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gnfr {

// PSNR in dB over linear RGB, capped at 99 dB for identical inputs. When a
// region mask is given, only pixels with bit 1 contribute; an empty region
// throws EmptyRegion.
double psnr(const Image& a, const Image& b,
            const OccupancyMask* region = nullptr);

// Mean SSIM on the luma plane (Rec.601 weights), 11x11 Gaussian window
// sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const Image& a, const Image& b);

struct EvalResult {
    std::string view_id;
    double psnr_full = 0.0;
    double ssim_full = 0.0;
    std::optional<double> psnr_flare;  // flare-region PSNR when a mask exists
};

struct EvalSummary {
    std::vector<EvalResult> per_view;
    double mean_psnr = 0.0, mean_ssim = 0.0;
    std::optional<double> mean_psnr_flare;

    std::string to_json() const;
};

// Pairs rendered images (dir/<view_id>.png) with scene ground truth; views
// without a rendered file are skipped. Flare-region PSNR uses the scene's
// annotated masks.
EvalSummary evaluate_renders(const SceneDataset& scene, const std::string& render_dir);

// Side-by-side ablation table plus |a-b| difference heatmaps written next to
// the report.
std::string ablation_markdown(const EvalSummary& masked, const EvalSummary& vanilla);
void write_difference_heatmap(const Image& a, const Image& b, const std::string& path);

}  // namespace gnfr

#endif
