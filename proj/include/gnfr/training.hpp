#ifndef GNFR_TRAINING_HPP
#define GNFR_TRAINING_HPP

#include "gnfr/renderer.hpp"
#include "gnfr/sampling.hpp"

#include <string>
#include <vector>

namespace gnfr {

struct TrainConfig {
    int iters = 2000;
    int rays_per_iter = 256;
    double lr = 1e-3, lr_final = 1e-5;  // cosine schedule
    uint64_t seed = 1;
    // masking loss: flare pixels contribute nothing to the objective
    bool use_masked_loss = true;
    // view sampler: restrict targets to low-occupancy views
    bool use_view_sampler = true;
    double occupancy_threshold = 0.10;
    // draw target pixels only where the mask bit is 0 (default trains through
    // masked pixels too; they carry zero loss but exercise novel regions)
    bool sample_unmasked_only = false;
    // view indices (per scene) excluded from targets and sources
    std::vector<int> heldout;
    SamplerRanges ranges;
    int log_every = 200;
    std::string checkpoint_out;  // empty = no checkpoint
    std::string manifest_json = "{}";
};

struct TrainReport {
    double final_loss = 0.0;
    double mean_tail_loss = 0.0;  // mean over the last 10% of iterations
    int dict_entries = 0;
    std::vector<std::string> skipped_scenes;
};

double cosine_lr(double lr0, double lr1, int it, int total);

// Per-iteration ray batch for one dictionary entry: pixels drawn uniformly
// over the whole target image, stratified depth samples.
RayBundle draw_ray_batch(const SceneDataset& scene, const ViewSelection& sel, int rays,
                         int m_samples, Rng& rng, bool unmasked_only = false);

TrainReport train_renderer(GnfrRenderer& net, const std::vector<SceneDataset>& scenes,
                           const TrainConfig& cfg);

}  // namespace gnfr

#endif
