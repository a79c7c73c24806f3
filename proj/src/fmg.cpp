#include "gnfr/fmg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace gnfr {

using nn::FMap;
using nn::Var;

void SegConfig::validate() const {
    if (base_channels < 4) throw BadSpec("base_channels must be >= 4");
    if (bins.empty()) throw BadSpec("pyramid needs at least one bin size");
    for (int b : bins)
        if (b < 1) throw BadSpec("pyramid bin sizes must be >= 1");
}

SegCorpus load_seg_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    SegCorpus corpus;
    for (int i = 0;; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "%05d.png", i);
        fs::path img = fs::path(dir) / "flare" / name;
        fs::path msk = fs::path(dir) / "mask" / name;
        if (!fs::exists(img)) break;
        if (!fs::exists(msk)) throw MissingFile("mask missing for " + img.string());
        SegSample s;
        s.input = load_image_png(img.string());
        OccupancyMask m = load_mask_png(msk.string());
        if (m.h != s.input.h || m.w != s.input.w)
            throw ShapeMismatch("mask/image size mismatch at " + msk.string());
        s.target = std::move(m.bits);
        corpus.samples.push_back(std::move(s));
    }
    if (corpus.samples.empty()) throw EmptyCorpus("no flare/mask pairs under " + dir);
    return corpus;
}

// ---------------------------------------------------------------------------

struct SegNet::Layers {
    nn::Conv2d stem, down1, down2, down3;
    nn::ResBlock res0, res1, res2, res3;
    std::vector<nn::Conv2d> pyr;  // 1x1 per bin
    nn::Conv2d bottleneck;
    nn::Conv2d dec2, dec1, dec0;  // 1/8 -> 1/4 -> 1/2
    nn::Conv2d head;
    int c0, c1, c2, c3, cp;
};

SegNet::SegNet(const SegConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    layers_ = std::make_shared<Layers>();
    auto& l = *layers_;
    int c = cfg_.base_channels;
    l.c0 = c;
    l.c1 = 2 * c;
    l.c2 = 3 * c;
    l.c3 = 4 * c;
    l.cp = c;  // per-bin pyramid channels
    l.stem = nn::Conv2d(store_, "seg.stem", 3, l.c0, 3, 2, 1, rng);
    l.res0 = nn::ResBlock(store_, "seg.res0", l.c0, rng);
    l.down1 = nn::Conv2d(store_, "seg.down1", l.c0, l.c1, 3, 2, 1, rng);
    l.res1 = nn::ResBlock(store_, "seg.res1", l.c1, rng);
    l.down2 = nn::Conv2d(store_, "seg.down2", l.c1, l.c2, 3, 2, 1, rng);
    l.res2 = nn::ResBlock(store_, "seg.res2", l.c2, rng);
    l.down3 = nn::Conv2d(store_, "seg.down3", l.c2, l.c3, 3, 2, 1, rng);
    l.res3 = nn::ResBlock(store_, "seg.res3", l.c3, rng);
    for (size_t i = 0; i < cfg_.bins.size(); ++i)
        l.pyr.push_back(nn::Conv2d(store_, "seg.pyr" + std::to_string(i), l.c3, l.cp, 1, 1, 0, rng));
    l.bottleneck = nn::Conv2d(store_, "seg.neck", l.c3 + l.cp * static_cast<int>(cfg_.bins.size()),
                              l.c3, 3, 1, 1, rng);
    l.dec2 = nn::Conv2d(store_, "seg.dec2", l.c3 + l.c2, l.c2, 3, 1, 1, rng);
    l.dec1 = nn::Conv2d(store_, "seg.dec1", l.c2 + l.c1, l.c1, 3, 1, 1, rng);
    l.dec0 = nn::Conv2d(store_, "seg.dec0", l.c1 + l.c0, l.c0, 3, 1, 1, rng);
    l.head = nn::Conv2d(store_, "seg.head", l.c0, 1, 1, 1, 0, rng);
}

Var SegNet::forward_logits(const Image& img) const {
    const auto& l = *layers_;
    nn::Tensor t({img.h * img.w, 3});
    t.v.assign(img.data.begin(), img.data.end());
    FMap x{nn::constant(std::move(t)), img.h, img.w, 3};

    FMap s0 = l.stem.forward(x);
    s0.t = nn::relu(s0.t);
    s0 = l.res0.forward(s0);
    FMap s1 = l.down1.forward(s0);
    s1.t = nn::relu(s1.t);
    s1 = l.res1.forward(s1);
    FMap s2 = l.down2.forward(s1);
    s2.t = nn::relu(s2.t);
    s2 = l.res2.forward(s2);
    FMap s3 = l.down3.forward(s2);
    s3.t = nn::relu(s3.t);
    s3 = l.res3.forward(s3);

    // pyramid pooling over the deepest map
    std::vector<FMap> pyramid{s3};
    for (size_t i = 0; i < cfg_.bins.size(); ++i) {
        int b = std::min({cfg_.bins[i], s3.h, s3.w});
        auto taps = nn::adaptive_avg_taps(s3.h, s3.w, b);
        FMap pooled{nn::gather_rows(s3.t, taps, s3.c), b, b, s3.c};
        FMap proj = l.pyr[i].forward(pooled);
        proj.t = nn::relu(proj.t);
        pyramid.push_back(nn::upsample_bilinear(proj, s3.h, s3.w));
    }
    FMap neck = l.bottleneck.forward(nn::concat_channels(pyramid));
    neck.t = nn::relu(neck.t);

    FMap u2 = l.dec2.forward(nn::concat_channels({nn::upsample_bilinear(neck, s2.h, s2.w), s2}));
    u2.t = nn::relu(u2.t);
    FMap u1 = l.dec1.forward(nn::concat_channels({nn::upsample_bilinear(u2, s1.h, s1.w), s1}));
    u1.t = nn::relu(u1.t);
    FMap u0 = l.dec0.forward(nn::concat_channels({nn::upsample_bilinear(u1, s0.h, s0.w), s0}));
    u0.t = nn::relu(u0.t);
    FMap logit_half = l.head.forward(u0);
    FMap full = nn::upsample_bilinear(logit_half, img.h, img.w);
    return full.t;  // [h*w, 1]
}

std::vector<uint8_t> SegNet::infer_bits(const Image& img) const {
    nn::NoGradGuard ng;
    Var logits = forward_logits(img);
    std::vector<uint8_t> bits(logits->val.numel());
    for (size_t i = 0; i < bits.size(); ++i) bits[i] = logits->val.v[i] > 0.0 ? 1 : 0;
    return bits;
}

OccupancyMask SegNet::infer_mask(const Image& img) const {
    return OccupancyMask::from_bits(img.h, img.w, infer_bits(img));
}

// ---------------------------------------------------------------------------

std::vector<int> holdout_indices(size_t corpus_size, double frac) {
    std::vector<int> out;
    uint64_t cut = static_cast<uint64_t>(frac * 4294967296.0);
    for (size_t i = 0; i < corpus_size; ++i)
        if ((derive_seed(0x5e6d0u, i) & 0xffffffffu) < cut) out.push_back(static_cast<int>(i));
    return out;
}

SegMetrics seg_metrics(const std::vector<std::vector<uint8_t>>& pred,
                       const std::vector<std::vector<uint8_t>>& target) {
    if (pred.size() != target.size()) throw ShapeMismatch("seg_metrics: count mismatch");
    size_t inter[2] = {0, 0}, uni[2] = {0, 0}, correct[2] = {0, 0}, total[2] = {0, 0};
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != target[i].size())
            throw ShapeMismatch("seg_metrics: plane size mismatch");
        for (size_t j = 0; j < pred[i].size(); ++j) {
            int p = pred[i][j] ? 1 : 0, t = target[i][j] ? 1 : 0;
            for (int c = 0; c < 2; ++c) {
                bool pc = (p == c), tc = (t == c);
                if (pc && tc) ++inter[c];
                if (pc || tc) ++uni[c];
                if (tc) {
                    ++total[c];
                    if (pc) ++correct[c];
                }
            }
        }
    }
    auto ratio = [](size_t num, size_t den) {
        return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    SegMetrics m;
    m.iou_clean = ratio(inter[0], uni[0]);
    m.iou_flare = ratio(inter[1], uni[1]);
    m.acc_clean = ratio(correct[0], total[0]);
    m.acc_flare = ratio(correct[1], total[1]);
    m.miou = 0.5 * (m.iou_clean + m.iou_flare);
    m.macc = 0.5 * (m.acc_clean + m.acc_flare);
    return m;
}

SegMetrics evaluate_seg(const SegNet& net, const SegCorpus& corpus,
                        const std::vector<int>& indices) {
    std::vector<std::vector<uint8_t>> pred, gt;
    for (int i : indices) {
        pred.push_back(net.infer_bits(corpus.samples[i].input));
        gt.push_back(corpus.samples[i].target);
    }
    return seg_metrics(pred, gt);
}

SegMetrics train_fmg(SegNet& net, const SegCorpus& corpus, const SegTrainConfig& cfg) {
    if (corpus.samples.empty()) throw EmptyCorpus("empty segmentation corpus");
    std::vector<int> held = holdout_indices(corpus.samples.size(), cfg.holdout_frac);
    std::vector<uint8_t> is_held(corpus.samples.size(), 0);
    for (int i : held) is_held[i] = 1;
    std::vector<int> train_ids;
    for (size_t i = 0; i < corpus.samples.size(); ++i)
        if (!is_held[i]) train_ids.push_back(static_cast<int>(i));
    if (train_ids.empty()) throw EmptyCorpus("hold-out split consumed the whole corpus");
    if (held.empty()) held = train_ids;  // tiny corpora: evaluate on what exists

    Rng rng(derive_seed(cfg.seed, 0x7ea1));
    nn::Adam opt;
    for (int it = 0; it < cfg.iters; ++it) {
        const SegSample& s =
            corpus.samples[train_ids[rng.uniform_int(0, static_cast<int>(train_ids.size()) - 1)]];
        std::vector<double> target(s.target.begin(), s.target.end());
        net.params().zero_grad();
        Var logits = net.forward_logits(s.input);
        Var loss = nn::weighted_bce_logits(logits, target, cfg.w_pos, cfg.w_neg);
        if (!std::isfinite(loss->val.v[0]))
            throw DivergedLoss("fmg loss became non-finite at iter " + std::to_string(it));
        nn::backward(loss);
        opt.step(net.params(), cfg.lr);
        if (cfg.log_every > 0 && (it + 1) % cfg.log_every == 0)
            std::printf("[fmg] iter %d/%d loss %.5f\n", it + 1, cfg.iters, loss->val.v[0]);
    }
    return evaluate_seg(net, corpus, held);
}

}  // namespace gnfr
