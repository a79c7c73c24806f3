#ifndef GNFR_SAMPLING_HPP
#define GNFR_SAMPLING_HPP

#include "gnfr/scene_io.hpp"

namespace gnfr {

// One training dictionary entry: a target view and its occupancy-ranked
// source views drawn from the k*N nearest-camera pool.
struct ViewSelection {
    int target_index = -1;
    std::vector<int> source_indices;
    int pool_size = 0;
    double k = 0.0;
    int n = 0;
    std::string scene_id;
};

struct SamplerRanges {
    double k_min = 1.0, k_max = 2.0;  // paper scale: (1, 3)
    int n_min = 3, n_max = 6;         // paper scale: [8, 12]
};

// Indices of views with occupancy <= threshold, in dataset order.
// Every view must carry a mask (real or inferred); throws NoMask otherwise.
std::vector<int> eligible_targets(const SceneDataset& scene, double threshold = 0.10);

// pool = ceil(k*N) nearest views by camera-center distance (target excluded);
// the N lowest-occupancy pool members win, ties broken by distance then index.
ViewSelection select_sources(const SceneDataset& scene, int target, int n, double k);

// Source selection for rendering an arbitrary target, with optional view
// exclusions (e.g. held-out evaluation views).
ViewSelection select_sources_excluding(const SceneDataset& scene, int target, int n, double k,
                                       const std::vector<int>& exclude,
                                       bool ignore_occupancy = false);

// One entry per eligible target per scene; per-entry (k, N) drawn from
// `ranges` with a seed derived per entry. Scenes with no eligible target are
// skipped (recorded in `skipped_scenes` when non-null).
std::vector<ViewSelection> build_dictionary(const std::vector<SceneDataset>& scenes,
                                            uint64_t seed, const SamplerRanges& ranges = {},
                                            std::vector<std::string>* skipped_scenes = nullptr,
                                            double occupancy_threshold = 0.10,
                                            bool ignore_occupancy = false,
                                            const std::vector<int>& exclude = {});

}  // namespace gnfr

#endif
