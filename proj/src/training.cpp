#include "gnfr/training.hpp"

#include <cmath>
#include <cstdio>

namespace gnfr {

double cosine_lr(double lr0, double lr1, int it, int total) {
    if (total <= 1) return lr0;
    double t = static_cast<double>(it) / static_cast<double>(total - 1);
    return lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(M_PI * t));
}

RayBundle draw_ray_batch(const SceneDataset& scene, const ViewSelection& sel, int rays,
                         int m_samples, Rng& rng, bool unmasked_only) {
    const CameraView& target = scene.views[sel.target_index];
    std::vector<Eigen::Vector2i> pixels;
    pixels.reserve(rays);
    long attempts = 0, budget = static_cast<long>(rays) * 1000;
    while (static_cast<int>(pixels.size()) < rays) {
        int x = static_cast<int>(rng.uniform_int(0, target.image.w - 1));
        int y = static_cast<int>(rng.uniform_int(0, target.image.h - 1));
        if (unmasked_only && target.mask && target.mask->at(y, x)) {
            if (++attempts > budget)
                throw NoTrainableTargets("target view has too few unmasked pixels");
            continue;
        }
        pixels.emplace_back(x, y);
    }
    RayBundle bundle = rays_for_pixels(target, pixels);
    bundle.depths.reserve(rays);
    for (int i = 0; i < rays; ++i)
        bundle.depths.push_back(
            sample_depths(target.near, target.far, m_samples, DepthMode::stratified, rng));
    return bundle;
}

TrainReport train_renderer(GnfrRenderer& net, const std::vector<SceneDataset>& scenes,
                           const TrainConfig& cfg) {
    TrainReport report;
    std::vector<ViewSelection> dict =
        build_dictionary(scenes, derive_seed(cfg.seed, 0xd1c7), cfg.ranges,
                         &report.skipped_scenes, cfg.occupancy_threshold,
                         /*ignore_occupancy=*/!cfg.use_view_sampler, cfg.heldout);
    report.dict_entries = static_cast<int>(dict.size());

    auto scene_of = [&](const ViewSelection& sel) -> const SceneDataset& {
        for (const auto& s : scenes)
            if (s.scene_id == sel.scene_id) return s;
        throw BadSpec("dictionary entry references unknown scene " + sel.scene_id);
    };

    Rng rng(derive_seed(cfg.seed, 0x7a15));
    nn::Adam opt;
    int tail_start = cfg.iters - std::max(1, cfg.iters / 10);
    double tail_sum = 0.0;
    int tail_n = 0;
    for (int it = 0; it < cfg.iters; ++it) {
        const ViewSelection& sel = dict[rng.uniform_int(0, static_cast<int>(dict.size()) - 1)];
        const SceneDataset& scene = scene_of(sel);
        RayBundle rays = draw_ray_batch(scene, sel, cfg.rays_per_iter, net.config().m_samples,
                                        rng, cfg.sample_unmasked_only);

        std::vector<const CameraView*> srcs;
        for (int i : sel.source_indices) srcs.push_back(&scene.views[i]);

        std::vector<double> target(rays.size() * 3);
        std::vector<double> keep(rays.size(), 1.0);
        for (size_t i = 0; i < rays.size(); ++i) {
            for (int c = 0; c < 3; ++c) target[i * 3 + c] = rays.target_rgb[i][c];
            if (cfg.use_masked_loss && rays.target_mask_bit[i]) keep[i] = 0.0;
        }

        net.params().zero_grad();
        nn::Var pred = net.render_rays_var(rays, srcs);
        nn::Var loss = nn::masked_mse(pred, target, keep, 3);
        double lv = loss->val.v[0];
        if (!std::isfinite(lv))
            throw DivergedLoss("render loss became non-finite at iter " + std::to_string(it));
        nn::backward(loss);
        opt.step(net.params(), cosine_lr(cfg.lr, cfg.lr_final, it, cfg.iters));

        report.final_loss = lv;
        if (it >= tail_start) {
            tail_sum += lv;
            ++tail_n;
        }
        if (cfg.log_every > 0 && (it + 1) % cfg.log_every == 0)
            std::printf("[train] iter %d/%d loss %.6f\n", it + 1, cfg.iters, lv);
    }
    report.mean_tail_loss = tail_n > 0 ? tail_sum / tail_n : report.final_loss;

    if (!cfg.checkpoint_out.empty())
        nn::save_checkpoint(cfg.checkpoint_out, cfg.manifest_json, net.params());
    return report;
}

}  // namespace gnfr
