#include "gnfr/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace gnfr {

std::vector<int> eligible_targets(const SceneDataset& scene, double threshold) {
    std::vector<int> out;
    for (size_t i = 0; i < scene.views.size(); ++i) {
        const auto& v = scene.views[i];
        if (!v.mask)
            throw NoMask(scene.scene_id + ": view " + std::to_string(i) + " has no mask");
        if (v.mask->occupancy <= threshold) out.push_back(static_cast<int>(i));
    }
    return out;
}

namespace {

struct Candidate {
    int index;
    double dist;
    double occupancy;
};

ViewSelection select_impl(const SceneDataset& scene, int target, int n, double k,
                          const std::vector<int>& exclude, bool ignore_occupancy,
                          bool clamp_to_available) {
    std::vector<Candidate> cands;
    Eigen::Vector3d tc = scene.views[target].center();
    for (size_t i = 0; i < scene.views.size(); ++i) {
        if (static_cast<int>(i) == target) continue;
        if (std::find(exclude.begin(), exclude.end(), static_cast<int>(i)) != exclude.end())
            continue;
        double occ = 0.0;
        if (!ignore_occupancy) {
            if (!scene.views[i].mask)
                throw NoMask(scene.scene_id + ": view " + std::to_string(i) + " has no mask");
            occ = scene.views[i].mask->occupancy;
        }
        cands.push_back({static_cast<int>(i), (scene.views[i].center() - tc).norm(), occ});
    }
    int pool_size = static_cast<int>(std::ceil(k * n));
    if (clamp_to_available) {
        pool_size = std::min(pool_size, static_cast<int>(cands.size()));
        n = std::min(n, pool_size);
    }
    if (static_cast<int>(cands.size()) < pool_size || n < 1)
        throw TooFewViews(scene.scene_id + ": need " + std::to_string(pool_size) +
                          " candidate views, have " + std::to_string(cands.size()));
    // pool: nearest by camera-center distance, ties by index
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.index < b.index;
    });
    cands.resize(pool_size);
    // pick N lowest occupancy; ties by smaller distance, then smaller index
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.occupancy != b.occupancy) return a.occupancy < b.occupancy;
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.index < b.index;
    });
    ViewSelection sel;
    sel.target_index = target;
    sel.pool_size = pool_size;
    sel.k = k;
    sel.n = n;
    sel.scene_id = scene.scene_id;
    for (int i = 0; i < n; ++i) sel.source_indices.push_back(cands[i].index);
    return sel;
}

}  // namespace

ViewSelection select_sources(const SceneDataset& scene, int target, int n, double k) {
    return select_impl(scene, target, n, k, {}, false, false);
}

ViewSelection select_sources_excluding(const SceneDataset& scene, int target, int n, double k,
                                       const std::vector<int>& exclude, bool ignore_occupancy) {
    return select_impl(scene, target, n, k, exclude, ignore_occupancy, true);
}

std::vector<ViewSelection> build_dictionary(const std::vector<SceneDataset>& scenes,
                                            uint64_t seed, const SamplerRanges& ranges,
                                            std::vector<std::string>* skipped_scenes,
                                            double occupancy_threshold, bool ignore_occupancy,
                                            const std::vector<int>& exclude) {
    std::vector<ViewSelection> dict;
    for (size_t s = 0; s < scenes.size(); ++s) {
        const auto& scene = scenes[s];
        std::vector<int> targets;
        if (ignore_occupancy) {
            for (size_t i = 0; i < scene.views.size(); ++i)
                targets.push_back(static_cast<int>(i));
        } else {
            targets = eligible_targets(scene, occupancy_threshold);
        }
        std::erase_if(targets, [&](int t) {
            return std::find(exclude.begin(), exclude.end(), t) != exclude.end();
        });
        if (targets.empty()) {
            if (skipped_scenes) skipped_scenes->push_back(scene.scene_id);
            continue;
        }
        uint64_t scene_seed = derive_seed(seed, s);
        for (size_t ti = 0; ti < targets.size(); ++ti) {
            Rng rng(derive_seed(scene_seed, ti));
            double k = rng.uniform(ranges.k_min, ranges.k_max);
            int n = static_cast<int>(rng.uniform_int(ranges.n_min, ranges.n_max));
            dict.push_back(
                select_impl(scene, targets[ti], n, k, exclude, ignore_occupancy, true));
        }
    }
    if (dict.empty()) throw NoTrainableTargets("no scene contributed dictionary entries");
    return dict;
}

}  // namespace gnfr
