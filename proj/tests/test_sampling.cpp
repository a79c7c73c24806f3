#include "gnfr/sampling.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>

using namespace gnfr;

namespace {

CameraView stub_view(const Eigen::Vector3d& center, int set_bits) {
    CameraView v;
    v.image = Image(4, 4, 3, 0.5);
    v.K = Eigen::Matrix3d::Identity();
    v.K(0, 0) = v.K(1, 1) = 4.0;
    v.K(0, 2) = v.K(1, 2) = 2.0;
    v.c2w.setZero();
    v.c2w.leftCols<3>() = Eigen::Matrix3d::Identity();
    v.c2w.col(3) = center;
    v.near = 0.1;
    v.far = 10.0;
    std::vector<uint8_t> bits(16, 0);
    for (int i = 0; i < set_bits; ++i) bits[i] = 1;
    v.mask = OccupancyMask::from_bits(4, 4, bits);
    return v;
}

SceneDataset random_scene(Rng& rng, int n_views) {
    SceneDataset s;
    s.scene_id = "stub";
    for (int i = 0; i < n_views; ++i)
        s.views.push_back(stub_view({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)},
                                    static_cast<int>(rng.uniform_int(0, 8))));
    return s;
}

}  // namespace

TEST_CASE("eligible targets use an inclusive occupancy threshold") {
    SceneDataset s;
    s.scene_id = "t";
    s.views.push_back(stub_view({0, 0, 0}, 0));   // 0
    s.views.push_back(stub_view({1, 0, 0}, 2));   // 0.125
    s.views.push_back(stub_view({2, 0, 0}, 8));   // 0.5
    auto el = eligible_targets(s, 0.125);
    REQUIRE(el.size() == 2);
    CHECK(el[0] == 0);
    CHECK(el[1] == 1);
    s.views[1].mask.reset();
    CHECK_THROWS_AS(eligible_targets(s, 0.125), NoMask);
}

TEST_CASE("hand-checked pool and occupancy ranking") {
    SceneDataset s;
    s.scene_id = "hand";
    // target at origin; distances 1, 2, 3, 4, 5 with occupancies chosen so
    // the nearest view loses to cleaner pool members
    s.views.push_back(stub_view({0, 0, 0}, 0));  // target
    s.views.push_back(stub_view({1, 0, 0}, 8));  // dist 1, occ 0.5
    s.views.push_back(stub_view({2, 0, 0}, 0));  // dist 2, occ 0
    s.views.push_back(stub_view({3, 0, 0}, 2));  // dist 3, occ 0.125
    s.views.push_back(stub_view({4, 0, 0}, 1));  // dist 4, occ 0.0625
    s.views.push_back(stub_view({5, 0, 0}, 0));  // dist 5, outside pool
    // N=2, k=2 -> pool = 4 nearest = views 1..4; best two by occupancy: 2, 4
    ViewSelection sel = select_sources(s, 0, 2, 2.0);
    CHECK(sel.pool_size == 4);
    REQUIRE(sel.source_indices.size() == 2);
    CHECK(sel.source_indices[0] == 2);
    CHECK(sel.source_indices[1] == 4);
}

TEST_CASE("selection agrees with the exhaustive subset oracle") {
    Rng rng(31);
    for (int rep = 0; rep < 100; ++rep) {
        int n_views = static_cast<int>(rng.uniform_int(6, 12));
        SceneDataset s = random_scene(rng, n_views);
        int target = static_cast<int>(rng.uniform_int(0, n_views - 1));
        int n = static_cast<int>(rng.uniform_int(2, 4));
        double k = rng.uniform(1.0, 2.0);
        int pool_size = static_cast<int>(std::ceil(k * n));
        if (pool_size > n_views - 1) continue;
        ViewSelection sel = select_sources(s, target, n, k);

        // oracle pool: the pool_size nearest candidates (independent sort)
        std::vector<int> cands;
        for (int i = 0; i < n_views; ++i)
            if (i != target) cands.push_back(i);
        auto dist = [&](int i) {
            return (s.views[i].center() - s.views[target].center()).norm();
        };
        std::stable_sort(cands.begin(), cands.end(),
                         [&](int a, int b) { return dist(a) < dist(b); });
        std::vector<int> pool(cands.begin(), cands.begin() + pool_size);
        for (int idx : sel.source_indices)
            CHECK(std::find(pool.begin(), pool.end(), idx) != pool.end());

        // exhaustive minimum total occupancy over all N-subsets of the pool
        double best = 1e9;
        std::vector<int> pick(pool.size(), 0);
        std::fill(pick.begin(), pick.begin() + n, 1);
        std::sort(pick.begin(), pick.end());
        do {
            double tot = 0.0;
            for (size_t i = 0; i < pool.size(); ++i)
                if (pick[i]) tot += s.views[pool[i]].mask->occupancy;
            best = std::min(best, tot);
        } while (std::next_permutation(pick.begin(), pick.end()));
        double got = 0.0;
        for (int idx : sel.source_indices) got += s.views[idx].mask->occupancy;
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
        CHECK(static_cast<int>(sel.source_indices.size()) == n);
    }
}

TEST_CASE("too few candidate views throws") {
    SceneDataset s;
    s.scene_id = "few";
    for (int i = 0; i < 3; ++i) s.views.push_back(stub_view({double(i), 0, 0}, 0));
    CHECK_THROWS_AS(select_sources(s, 0, 3, 1.5), TooFewViews);
}

TEST_CASE("excluded views never appear as sources") {
    Rng rng(33);
    SceneDataset s = random_scene(rng, 8);
    ViewSelection sel = select_sources_excluding(s, 0, 3, 1.5, {2, 5}, false);
    for (int idx : sel.source_indices) {
        CHECK(idx != 0);
        CHECK(idx != 2);
        CHECK(idx != 5);
    }
}

TEST_CASE("dictionary construction is deterministic and respects ranges") {
    Rng rng(35);
    std::vector<SceneDataset> scenes;
    for (int i = 0; i < 3; ++i) {
        scenes.push_back(random_scene(rng, 8));
        scenes.back().scene_id = "s" + std::to_string(i);
    }
    SamplerRanges ranges;
    auto a = build_dictionary(scenes, 7, ranges, nullptr, 0.2);
    auto b = build_dictionary(scenes, 7, ranges, nullptr, 0.2);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].target_index == b[i].target_index);
        CHECK(a[i].source_indices == b[i].source_indices);
        CHECK(a[i].k >= ranges.k_min);
        CHECK(a[i].k <= ranges.k_max);
        CHECK(a[i].n >= 1);
        CHECK(a[i].n <= ranges.n_max);
    }
    auto c = build_dictionary(scenes, 8, ranges, nullptr, 0.2);
    bool differs = c.size() != a.size();
    for (size_t i = 0; !differs && i < a.size(); ++i)
        differs = a[i].source_indices != c[i].source_indices || a[i].k != c[i].k;
    CHECK(differs);
}

TEST_CASE("scenes with no eligible target are skipped, empty dictionaries throw") {
    Rng rng(37);
    SceneDataset all_flared = random_scene(rng, 6);
    for (auto& v : all_flared.views)
        v.mask = OccupancyMask::from_bits(4, 4, std::vector<uint8_t>(16, 1));
    all_flared.scene_id = "flared";
    SceneDataset ok = random_scene(rng, 6);
    ok.scene_id = "ok";
    std::vector<std::string> skipped;
    auto dict = build_dictionary({all_flared, ok}, 3, {}, &skipped, 0.10);
    REQUIRE(skipped.size() == 1);
    CHECK(skipped[0] == "flared");
    for (const auto& e : dict) CHECK(e.scene_id == "ok");
    CHECK_THROWS_AS(build_dictionary({all_flared}, 3, {}, nullptr, 0.10), NoTrainableTargets);
}
