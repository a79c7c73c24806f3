#include "gnfr/renderer.hpp"

#include <cmath>

namespace gnfr {

using nn::FMap;
using nn::Var;

void RendererConfig::validate() const {
    if (feature_dim < 4 || feature_dim % n_heads != 0)
        throw BadSpec("feature_dim must be >= 4 and divisible by n_heads");
    if (n_blocks < 1) throw BadSpec("n_blocks must be >= 1");
    if (n_heads < 1) throw BadSpec("n_heads must be >= 1");
    if (m_samples < 1) throw BadSpec("m_samples must be >= 1");
    if (pos_enc_freqs < 1) throw BadSpec("pos_enc_freqs must be >= 1");
    if (mlp_hidden < 1) throw BadSpec("mlp_hidden must be >= 1");
}

// ---------------------------------------------------------------------------
// parameter blocks
// ---------------------------------------------------------------------------

struct GnfrRenderer::Blocks {
    // residual-UNet encoder
    nn::Conv2d stem, down1, down2, down3, fuse, head;
    nn::ResBlock res0, res1, res2, res3, res_f;
    int c0, c1, c2, c3;

    // epipolar feature + direction embedding, initial point feature
    nn::Dense init_embed;

    struct ViewBlock {
        nn::LayerNormM ln_q, ln_f;
        nn::Dense dq, dk, dv, dout, f1, f2;
    };
    struct RayBlock {
        nn::LayerNormM ln_q, ln_f;
        nn::Dense dq, dk, dv, dout, f1, f2;
    };
    std::vector<ViewBlock> view_blocks;
    std::vector<RayBlock> ray_blocks;
    nn::Dense pos_embed;

    nn::LayerNormM ln_out;
    nn::Dense dec1, dec2;
};

GnfrRenderer::GnfrRenderer(const RendererConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    blocks_ = std::make_shared<Blocks>();
    auto& b = *blocks_;
    int d = cfg_.feature_dim;
    b.c0 = std::max(8, d / 2);
    b.c1 = std::max(12, 3 * d / 4);
    b.c2 = d;
    b.c3 = d + d / 2;
    b.stem = nn::Conv2d(store_, "enc.stem", 3, b.c0, 3, 1, 1, rng);
    b.res0 = nn::ResBlock(store_, "enc.res0", b.c0, rng);
    b.down1 = nn::Conv2d(store_, "enc.down1", b.c0, b.c1, 3, 2, 1, rng);
    b.res1 = nn::ResBlock(store_, "enc.res1", b.c1, rng);
    b.down2 = nn::Conv2d(store_, "enc.down2", b.c1, b.c2, 3, 2, 1, rng);
    b.res2 = nn::ResBlock(store_, "enc.res2", b.c2, rng);
    b.down3 = nn::Conv2d(store_, "enc.down3", b.c2, b.c3, 3, 2, 1, rng);
    b.res3 = nn::ResBlock(store_, "enc.res3", b.c3, rng);
    b.fuse = nn::Conv2d(store_, "enc.fuse", b.c3 + b.c2, b.c2, 3, 1, 1, rng);
    b.res_f = nn::ResBlock(store_, "enc.resf", b.c2, rng);
    b.head = nn::Conv2d(store_, "enc.head", b.c2, d, 1, 1, 0, rng);

    b.init_embed = nn::Dense(store_, "init_embed", d + 4, d, rng);
    b.pos_embed = nn::Dense(store_, "pos_embed", 2 * cfg_.pos_enc_freqs, d, rng);

    for (int i = 0; i < cfg_.n_blocks; ++i) {
        std::string p = "view" + std::to_string(i);
        Blocks::ViewBlock vb;
        vb.ln_q = nn::LayerNormM(store_, p + ".lnq", d);
        vb.dq = nn::Dense(store_, p + ".dq", d, d, rng);
        vb.dk = nn::Dense(store_, p + ".dk", d + 4, d, rng);
        vb.dv = nn::Dense(store_, p + ".dv", d + 4, d, rng);
        vb.dout = nn::Dense(store_, p + ".do", d, d, rng);
        vb.ln_f = nn::LayerNormM(store_, p + ".lnf", d);
        vb.f1 = nn::Dense(store_, p + ".f1", d, cfg_.mlp_hidden, rng);
        vb.f2 = nn::Dense(store_, p + ".f2", cfg_.mlp_hidden, d, rng);
        b.view_blocks.push_back(std::move(vb));

        p = "ray" + std::to_string(i);
        Blocks::RayBlock rb;
        rb.ln_q = nn::LayerNormM(store_, p + ".lnq", d);
        rb.dq = nn::Dense(store_, p + ".dq", d, d, rng);
        rb.dk = nn::Dense(store_, p + ".dk", d, d, rng);
        rb.dv = nn::Dense(store_, p + ".dv", d, d, rng);
        rb.dout = nn::Dense(store_, p + ".do", d, d, rng);
        rb.ln_f = nn::LayerNormM(store_, p + ".lnf", d);
        rb.f1 = nn::Dense(store_, p + ".f1", d, cfg_.mlp_hidden, rng);
        rb.f2 = nn::Dense(store_, p + ".f2", cfg_.mlp_hidden, d, rng);
        b.ray_blocks.push_back(std::move(rb));
    }
    b.ln_out = nn::LayerNormM(store_, "dec.ln", d);
    b.dec1 = nn::Dense(store_, "dec.d1", d, cfg_.mlp_hidden, rng);
    b.dec2 = nn::Dense(store_, "dec.d2", cfg_.mlp_hidden, 3, rng);
}

// ---------------------------------------------------------------------------
// encoder
// ---------------------------------------------------------------------------

FMap GnfrRenderer::encode_one(const Image& img) const {
    const auto& b = *blocks_;
    nn::Tensor t({img.h * img.w, 3});
    t.v.assign(img.data.begin(), img.data.end());
    FMap x{nn::constant(std::move(t)), img.h, img.w, 3};
    x = b.stem.forward(x);
    x.t = nn::relu(x.t);
    x = b.res0.forward(x);
    FMap l1 = b.down1.forward(x);
    l1.t = nn::relu(l1.t);
    l1 = b.res1.forward(l1);
    FMap l2 = b.down2.forward(l1);
    l2.t = nn::relu(l2.t);
    l2 = b.res2.forward(l2);
    FMap l3 = b.down3.forward(l2);
    l3.t = nn::relu(l3.t);
    l3 = b.res3.forward(l3);
    FMap up = nn::upsample_bilinear(l3, l2.h, l2.w);
    FMap cat = nn::concat_channels({up, l2});
    FMap f = b.fuse.forward(cat);
    f.t = nn::relu(f.t);
    f = b.res_f.forward(f);
    return b.head.forward(f);
}

std::vector<FeatureGrid> GnfrRenderer::encode_views(
    const std::vector<const CameraView*>& views) const {
    nn::NoGradGuard ng;
    std::vector<FeatureGrid> grids;
    for (size_t i = 0; i < views.size(); ++i) {
        FMap f = encode_one(views[i]->image);
        FeatureGrid g;
        g.h = f.h;
        g.w = f.w;
        g.d = f.c;
        g.values.assign(f.t->val.v.begin(), f.t->val.v.end());
        g.view_index = static_cast<int>(i);
        grids.push_back(std::move(g));
    }
    return grids;
}

// ---------------------------------------------------------------------------
// epipolar geometry plan (shared by the plain and differentiable paths)
// ---------------------------------------------------------------------------

namespace {

struct GatherPlan {
    int b = 0, m = 0, n = 0;
    std::vector<uint8_t> point_mask;  // flare OR invalid
    std::vector<uint8_t> invalid;
    std::vector<double> view_dirs;     // *4
    std::shared_ptr<nn::RowTaps> taps;  // rows (b,m,n) -> cells in stacked grids
};

GatherPlan build_plan(const RayBundle& rays, const std::vector<const CameraView*>& views,
                      int grid_h, int grid_w) {
    GatherPlan plan;
    plan.b = static_cast<int>(rays.size());
    plan.m = rays.depths.empty() ? 0 : static_cast<int>(rays.depths[0].size());
    plan.n = static_cast<int>(views.size());
    size_t total = static_cast<size_t>(plan.b) * plan.m * plan.n;
    plan.point_mask.assign(total, 0);
    plan.invalid.assign(total, 0);
    plan.view_dirs.assign(total * 4, 0.0);
    plan.taps = std::make_shared<nn::RowTaps>();
    plan.taps->offsets.reserve(total + 1);
    plan.taps->offsets.push_back(0);
    for (int bi = 0; bi < plan.b; ++bi) {
        if (static_cast<int>(rays.depths[bi].size()) != plan.m)
            throw ShapeMismatch("ragged depth sample counts in ray bundle");
        const Eigen::Vector3d& o = rays.origins[bi];
        const Eigen::Vector3d& dir = rays.directions[bi];
        for (int mi = 0; mi < plan.m; ++mi) {
            Eigen::Vector3d x = o + rays.depths[bi][mi] * dir;
            for (int vi = 0; vi < plan.n; ++vi) {
                const CameraView& view = *views[vi];
                size_t s = (static_cast<size_t>(bi) * plan.m + mi) * plan.n + vi;
                Projection pr = project(x, view);
                bool flare = false;
                if (pr.valid && view.mask) flare = sample_mask_bit(*view.mask, pr.uv) != 0;
                plan.invalid[s] = pr.valid ? 0 : 1;
                plan.point_mask[s] = (!pr.valid || flare) ? 1 : 0;
                if (pr.valid) {
                    Eigen::Vector2d g =
                        image_to_grid(pr.uv, view.image.h, view.image.w, grid_h, grid_w);
                    int x0 = std::min(static_cast<int>(g.x()), grid_w - 2 >= 0 ? grid_w - 2 : 0);
                    int y0 = std::min(static_cast<int>(g.y()), grid_h - 2 >= 0 ? grid_h - 2 : 0);
                    double fx = g.x() - x0, fy = g.y() - y0;
                    int base = vi * grid_h * grid_w;
                    int x1 = std::min(x0 + 1, grid_w - 1), y1 = std::min(y0 + 1, grid_h - 1);
                    plan.taps->cells.push_back(base + y0 * grid_w + x0);
                    plan.taps->wts.push_back((1 - fy) * (1 - fx));
                    plan.taps->cells.push_back(base + y0 * grid_w + x1);
                    plan.taps->wts.push_back((1 - fy) * fx);
                    plan.taps->cells.push_back(base + y1 * grid_w + x0);
                    plan.taps->wts.push_back(fy * (1 - fx));
                    plan.taps->cells.push_back(base + y1 * grid_w + x1);
                    plan.taps->wts.push_back(fy * fx);
                    // relative direction of target ray vs source ray
                    Eigen::Vector3d sd = (x - view.center()).normalized();
                    plan.view_dirs[s * 4 + 0] = dir.x() - sd.x();
                    plan.view_dirs[s * 4 + 1] = dir.y() - sd.y();
                    plan.view_dirs[s * 4 + 2] = dir.z() - sd.z();
                    plan.view_dirs[s * 4 + 3] = dir.dot(sd);
                }
                plan.taps->offsets.push_back(static_cast<int>(plan.taps->cells.size()));
            }
        }
    }
    return plan;
}

// flat row-concat of equally shaped [rows, cols] vars
Var pack_rows(const std::vector<Var>& parts, int rows_each, int cols) {
    size_t total = static_cast<size_t>(parts.size()) * rows_each * cols;
    Var combined;
    size_t off = 0;
    for (const auto& p : parts) {
        auto m = std::make_shared<std::vector<int64_t>>(total, -1);
        for (size_t i = 0; i < static_cast<size_t>(rows_each) * cols; ++i)
            (*m)[off + i] = static_cast<int64_t>(i);
        Var padded = nn::permute_gather(
            p, m, {static_cast<int>(parts.size()) * rows_each, cols});
        combined = combined ? nn::add(combined, padded) : padded;
        off += static_cast<size_t>(rows_each) * cols;
    }
    return combined;
}

std::shared_ptr<std::vector<int64_t>> heads_split_map(int p, int n, int h, int dh) {
    // [p*n, h*dh] -> [p*h, n, dh]
    auto m = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(p) * n * h * dh);
    size_t o = 0;
    for (int pi = 0; pi < p; ++pi)
        for (int hi = 0; hi < h; ++hi)
            for (int ni = 0; ni < n; ++ni)
                for (int c = 0; c < dh; ++c)
                    (*m)[o++] = (static_cast<int64_t>(pi) * n + ni) * (h * dh) + hi * dh + c;
    return m;
}

std::shared_ptr<std::vector<int64_t>> heads_merge_map(int p, int h, int dh) {
    // [p*h, dh] -> [p, h*dh]
    auto m = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(p) * h * dh);
    size_t o = 0;
    for (int pi = 0; pi < p; ++pi)
        for (int hi = 0; hi < h; ++hi)
            for (int c = 0; c < dh; ++c)
                (*m)[o++] = (static_cast<int64_t>(pi) * h + hi) * dh + c;
    return m;
}

}  // namespace

EpipolarSamples GnfrRenderer::gather_epipolar(const RayBundle& rays,
                                              const std::vector<const CameraView*>& views,
                                              const std::vector<FeatureGrid>& grids) const {
    if (views.size() != grids.size())
        throw ShapeMismatch("gather_epipolar: views and grids count disagree");
    int gh = grids[0].h, gw = grids[0].w, d = grids[0].d;
    GatherPlan plan = build_plan(rays, views, gh, gw);
    EpipolarSamples s;
    s.b = plan.b;
    s.m = plan.m;
    s.n_views = plan.n;
    s.d = d;
    s.point_mask = std::move(plan.point_mask);
    s.invalid = std::move(plan.invalid);
    s.view_dirs = std::move(plan.view_dirs);
    size_t total = static_cast<size_t>(s.b) * s.m * s.n_views;
    s.features.assign(total * d, 0.0);
    for (size_t r = 0; r < total; ++r) {
        int vi = static_cast<int>(r % s.n_views);
        const FeatureGrid& g = grids[vi];
        int base = vi * gh * gw;
        for (int t = plan.taps->offsets[r]; t < plan.taps->offsets[r + 1]; ++t) {
            const double* cell =
                g.values.data() + static_cast<size_t>(plan.taps->cells[t] - base) * d;
            double w = plan.taps->wts[t];
            for (int c = 0; c < d; ++c) s.features[r * d + c] += w * cell[c];
        }
    }
    return s;
}

std::vector<double> masked_attention_weights(const std::vector<double>& logits,
                                             const std::vector<uint8_t>& mask,
                                             const std::vector<uint8_t>& invalid,
                                             AttnMaskMode mode) {
    size_t n = logits.size();
    std::vector<double> w(n);
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        w[i] = std::exp(logits[i] - mx);
        sum += w[i];
    }
    double kept = 0.0;
    for (size_t i = 0; i < n; ++i) {
        w[i] = mask[i] ? 0.0 : w[i] / sum;
        kept += w[i];
    }
    if (kept < 1e-300) {
        int n_valid = 0;
        for (uint8_t iv : invalid)
            if (!iv) ++n_valid;
        for (size_t i = 0; i < n; ++i)
            w[i] = n_valid > 0 ? (invalid[i] ? 0.0 : 1.0 / n_valid)
                               : 1.0 / static_cast<double>(n);
        return w;
    }
    if (mode == AttnMaskMode::multiply_renormalize)
        for (auto& x : w) x /= kept;
    return w;
}

// ---------------------------------------------------------------------------
// differentiable forward
// ---------------------------------------------------------------------------

namespace {

// attention keep/fallback rows replicated per head
void build_keep_fallback(const std::vector<uint8_t>& mask, const std::vector<uint8_t>& invalid,
                         int p, int n, int heads, std::vector<double>& keep,
                         std::vector<double>& fallback) {
    keep.assign(static_cast<size_t>(p) * heads * n, 0.0);
    fallback.assign(static_cast<size_t>(p) * heads * n, 0.0);
    for (int pi = 0; pi < p; ++pi) {
        int n_valid = 0;
        for (int ni = 0; ni < n; ++ni)
            if (!invalid[static_cast<size_t>(pi) * n + ni]) ++n_valid;
        for (int hi = 0; hi < heads; ++hi)
            for (int ni = 0; ni < n; ++ni) {
                size_t src = static_cast<size_t>(pi) * n + ni;
                size_t dst = (static_cast<size_t>(pi) * heads + hi) * n + ni;
                keep[dst] = mask[src] ? 0.0 : 1.0;
                fallback[dst] = n_valid > 0
                                    ? (invalid[src] ? 0.0 : 1.0 / n_valid)
                                    : 1.0 / static_cast<double>(n);
            }
    }
}

}  // namespace

Var GnfrRenderer::forward(const RayBundle& rays,
                          const std::vector<const CameraView*>& views) const {
    const auto& blk = *blocks_;
    int d = cfg_.feature_dim;
    int heads = cfg_.n_heads;
    int dh = d / heads;
    int n = static_cast<int>(views.size());
    if (n < 1) throw TooFewViews("render needs at least one source view");

    // encode sources
    std::vector<Var> grids;
    int gh = 0, gw = 0;
    for (const CameraView* v : views) {
        FMap f = encode_one(v->image);
        gh = f.h;
        gw = f.w;
        grids.push_back(f.t);
    }
    Var all_grids = pack_rows(grids, gh * gw, d);

    GatherPlan plan = build_plan(rays, views, gh, gw);
    int b = plan.b, m = plan.m;
    int p = b * m;

    Var feats = nn::gather_rows(all_grids, plan.taps, d);  // [p*n, d]
    nn::Tensor dirs_t({p * n, 4});
    dirs_t.v.assign(plan.view_dirs.begin(), plan.view_dirs.end());
    FMap kv_cat = nn::concat_channels(
        {{feats, p * n, 1, d}, {nn::constant(std::move(dirs_t)), p * n, 1, 4}});
    Var kv_in = kv_cat.t;  // [p*n, d+4]

    // attention bookkeeping
    const std::vector<uint8_t>& attn_mask =
        cfg_.use_point_sampler ? plan.point_mask : plan.invalid;
    std::vector<double> keep_h, fallback_h;
    build_keep_fallback(attn_mask, plan.invalid, p, n, heads, keep_h, fallback_h);
    std::vector<double> keep_1, fallback_1;
    build_keep_fallback(attn_mask, plan.invalid, p, n, 1, keep_1, fallback_1);
    bool renorm = cfg_.attn_mask_mode == AttnMaskMode::multiply_renormalize;

    // initial point feature: mask-aware mean of embedded per-view samples
    Var v0 = blk.init_embed.forward(kv_in);  // [p*n, d]
    nn::Tensor unif({p, n},
                    nn::dvec(static_cast<size_t>(p) * n, 1.0 / static_cast<double>(n)));
    Var w0 = nn::masked_renorm_rows(nn::constant(std::move(unif)), n, keep_1, fallback_1, true);
    Var z = nn::attn_apply(w0, v0, p, 1, n, dh * heads);  // [p, d]

    // shared head-layout maps
    auto kv_split = heads_split_map(p, n, heads, dh);
    auto q_split = heads_split_map(p, 1, heads, dh);
    auto merge_p = heads_merge_map(p, heads, dh);
    auto ray_split = heads_split_map(b, m, heads, dh);
    auto ray_merge = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(p) * d);
    {
        size_t o = 0;
        for (int bi = 0; bi < b; ++bi)
            for (int mi = 0; mi < m; ++mi)
                for (int hi = 0; hi < heads; ++hi)
                    for (int c = 0; c < dh; ++c)
                        (*ray_merge)[o++] =
                            ((static_cast<int64_t>(bi) * heads + hi) * m + mi) * dh + c;
    }

    // depth positional encoding on (t - near) / (far - near)
    nn::Tensor pe({p, 2 * cfg_.pos_enc_freqs});
    for (int bi = 0; bi < b; ++bi)
        for (int mi = 0; mi < m; ++mi) {
            double tn = (rays.depths[bi][mi] - rays.near) / (rays.far - rays.near);
            for (int f = 0; f < cfg_.pos_enc_freqs; ++f) {
                double a = std::pow(2.0, f) * M_PI * tn;
                pe.v[(static_cast<size_t>(bi) * m + mi) * 2 * cfg_.pos_enc_freqs + 2 * f] =
                    std::sin(a);
                pe.v[(static_cast<size_t>(bi) * m + mi) * 2 * cfg_.pos_enc_freqs + 2 * f + 1] =
                    std::cos(a);
            }
        }
    Var pos = blk.pos_embed.forward(nn::constant(std::move(pe)));  // [p, d]

    double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int i = 0; i < cfg_.n_blocks; ++i) {
        // view transformer: attention over the n source views of each point
        const auto& vb = blk.view_blocks[i];
        Var zq = vb.ln_q.forward(z);
        Var q = nn::permute_gather(vb.dq.forward(zq), q_split, {p * heads, 1, dh});
        Var k = nn::permute_gather(vb.dk.forward(kv_in), kv_split, {p * heads, n, dh});
        Var v = nn::permute_gather(vb.dv.forward(kv_in), kv_split, {p * heads, n, dh});
        Var logits = nn::attn_scores(q, k, p * heads, 1, n, dh, scl);
        Var probs = nn::softmax_rows(logits, n);
        Var w = nn::masked_renorm_rows(probs, n, keep_h, fallback_h, renorm);
        Var att = nn::attn_apply(w, v, p * heads, 1, n, dh);
        Var merged = nn::permute_gather(att, merge_p, {p, d});
        z = nn::add(z, vb.dout.forward(merged));
        Var f = vb.ln_f.forward(z);
        z = nn::add(z, vb.f2.forward(nn::relu(vb.f1.forward(f))));

        // ray transformer: attention over the m depth samples of each ray
        const auto& rb = blk.ray_blocks[i];
        Var tok = nn::add(z, pos);
        Var tq = rb.ln_q.forward(tok);
        Var rq = nn::permute_gather(rb.dq.forward(tq), ray_split, {b * heads, m, dh});
        Var rk = nn::permute_gather(rb.dk.forward(tq), ray_split, {b * heads, m, dh});
        Var rv = nn::permute_gather(rb.dv.forward(tq), ray_split, {b * heads, m, dh});
        Var rl = nn::attn_scores(rq, rk, b * heads, m, m, dh, scl);
        Var rw = nn::softmax_rows(rl, m);
        Var ra = nn::attn_apply(rw, rv, b * heads, m, m, dh);
        Var rmerged = nn::permute_gather(ra, ray_merge, {p, d});
        z = nn::add(z, rb.dout.forward(rmerged));
        Var rf = rb.ln_f.forward(z);
        z = nn::add(z, rb.f2.forward(nn::relu(rb.f1.forward(rf))));
    }

    Var zf = blk.ln_out.forward(z);
    Var pooled = nn::mean_groups(zf, m, d);  // [b, d]
    Var rgb = nn::sigmoid(blk.dec2.forward(nn::relu(blk.dec1.forward(pooled))));
    return rgb;  // [b, 3]
}

Var GnfrRenderer::render_rays_var(const RayBundle& rays,
                                  const std::vector<const CameraView*>& views) {
    return forward(rays, views);
}

std::vector<Eigen::Vector3d> GnfrRenderer::render_rays(
    const RayBundle& rays, const std::vector<const CameraView*>& views) const {
    nn::NoGradGuard ng;
    Var rgb = forward(rays, views);
    std::vector<Eigen::Vector3d> out(rays.size());
    for (size_t i = 0; i < rays.size(); ++i)
        out[i] = Eigen::Vector3d(rgb->val.v[i * 3], rgb->val.v[i * 3 + 1],
                                 rgb->val.v[i * 3 + 2]);
    return out;
}

std::vector<double> GnfrRenderer::masked_view_attention(const EpipolarSamples& s) const {
    nn::NoGradGuard ng;
    const auto& blk = *blocks_;
    int d = cfg_.feature_dim;
    int heads = cfg_.n_heads;
    int dh = d / heads;
    int p = s.b * s.m;
    int n = s.n_views;
    nn::Tensor ft({p * n, d});
    ft.v.assign(s.features.begin(), s.features.end());
    Var feats = nn::constant(std::move(ft));
    nn::Tensor dt({p * n, 4});
    dt.v.assign(s.view_dirs.begin(), s.view_dirs.end());
    FMap kv_cat = nn::concat_channels({{feats, p * n, 1, d}, {nn::constant(std::move(dt)), p * n, 1, 4}});
    Var kv_in = kv_cat.t;
    std::vector<double> keep_h, fallback_h, keep_1, fallback_1;
    build_keep_fallback(s.point_mask, s.invalid, p, n, heads, keep_h, fallback_h);
    build_keep_fallback(s.point_mask, s.invalid, p, n, 1, keep_1, fallback_1);
    bool renorm = cfg_.attn_mask_mode == AttnMaskMode::multiply_renormalize;

    Var v0 = blk.init_embed.forward(kv_in);
    nn::Tensor unif({p, n},
                    nn::dvec(static_cast<size_t>(p) * n, 1.0 / static_cast<double>(n)));
    Var w0 = nn::masked_renorm_rows(nn::constant(std::move(unif)), n, keep_1, fallback_1, true);
    Var z = nn::attn_apply(w0, v0, p, 1, n, d);

    const auto& vb = blk.view_blocks[0];
    auto kv_split = heads_split_map(p, n, heads, dh);
    auto q_split = heads_split_map(p, 1, heads, dh);
    auto merge_p = heads_merge_map(p, heads, dh);
    Var zq = vb.ln_q.forward(z);
    Var q = nn::permute_gather(vb.dq.forward(zq), q_split, {p * heads, 1, dh});
    Var k = nn::permute_gather(vb.dk.forward(kv_in), kv_split, {p * heads, n, dh});
    Var v = nn::permute_gather(vb.dv.forward(kv_in), kv_split, {p * heads, n, dh});
    Var logits = nn::attn_scores(q, k, p * heads, 1, n, dh, 1.0 / std::sqrt(double(dh)));
    Var probs = nn::softmax_rows(logits, n);
    Var w = nn::masked_renorm_rows(probs, n, keep_h, fallback_h, renorm);
    Var att = nn::attn_apply(w, v, p * heads, 1, n, dh);
    Var merged = nn::permute_gather(att, merge_p, {p, d});
    z = nn::add(z, vb.dout.forward(merged));
    Var f = vb.ln_f.forward(z);
    z = nn::add(z, vb.f2.forward(nn::relu(vb.f1.forward(f))));
    return std::vector<double>(z->val.v.begin(), z->val.v.end());
}

Image GnfrRenderer::render_image(const SceneDataset& scene, const CameraView& target,
                                 const ViewSelection& sel, int chunk) const {
    std::vector<const CameraView*> srcs;
    for (int i : sel.source_indices) srcs.push_back(&scene.views[i]);
    int h = target.image.h, w = target.image.w;
    Image out(h, w, 3);
    Rng rng(0);
    std::vector<double> depths =
        sample_depths(target.near, target.far, cfg_.m_samples, DepthMode::deterministic, rng);
    std::vector<Eigen::Vector2i> pixels;
    pixels.reserve(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) pixels.emplace_back(x, y);
    for (size_t start = 0; start < pixels.size(); start += chunk) {
        size_t end = std::min(pixels.size(), start + chunk);
        std::vector<Eigen::Vector2i> batch(pixels.begin() + start, pixels.begin() + end);
        RayBundle rays = rays_for_pixels(target, batch);
        rays.depths.assign(batch.size(), depths);
        auto rgb = render_rays(rays, srcs);
        for (size_t i = 0; i < batch.size(); ++i)
            for (int c = 0; c < 3; ++c)
                out.at(batch[i].y(), batch[i].x(), c) = rgb[i][c];
    }
    return out;
}

}  // namespace gnfr
