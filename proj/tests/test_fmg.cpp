#include "gnfr/fmg.hpp"

#include "doctest.h"

#include <cmath>

using namespace gnfr;

TEST_CASE("seg metrics hand case") {
    // pred 1100, target 1010:
    //   flare: inter 1, union 3, recall 1/2 -> IoU 1/3
    //   clean: inter 1, union 3, recall 1/2 -> IoU 1/3
    SegMetrics m = seg_metrics({{1, 1, 0, 0}}, {{1, 0, 1, 0}});
    CHECK(m.iou_flare == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(m.iou_clean == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(m.acc_flare == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.acc_clean == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.miou == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(m.macc == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("a class absent from prediction and target scores one") {
    SegMetrics m = seg_metrics({{0, 0, 0, 0}}, {{0, 0, 0, 0}});
    CHECK(m.iou_flare == 1.0);
    CHECK(m.acc_flare == 1.0);
    CHECK(m.miou == 1.0);
    SegMetrics p = seg_metrics({{1, 1}}, {{1, 1}});
    CHECK(p.iou_clean == 1.0);
    CHECK_THROWS_AS(seg_metrics({{1}}, {{1, 0}}), ShapeMismatch);
}

TEST_CASE("holdout split is deterministic and near the requested fraction") {
    auto a = holdout_indices(1000, 0.1);
    auto b = holdout_indices(1000, 0.1);
    CHECK(a == b);
    CHECK(a.size() > 50);
    CHECK(a.size() < 180);
    CHECK(holdout_indices(1000, 0.0).empty());
}

TEST_CASE("segnet forward produces one logit per pixel at any resolution") {
    SegConfig cfg;
    cfg.base_channels = 4;
    SegNet net(cfg, 5);
    for (int res : {16, 24}) {
        Image img(res, res, 3, 0.3);
        nn::NoGradGuard ng;
        auto logits = net.forward_logits(img);
        CHECK(static_cast<int>(logits->val.numel()) == res * res);
    }
}

TEST_CASE("infer_bits thresholds logits at zero") {
    SegConfig cfg;
    cfg.base_channels = 4;
    SegNet net(cfg, 6);
    Image img(16, 16, 3, 0.5);
    nn::NoGradGuard ng;
    auto logits = net.forward_logits(img);
    auto bits = net.infer_bits(img);
    for (int i = 0; i < 256; ++i) CHECK(bits[i] == (logits->val.v[i] > 0.0 ? 1 : 0));
    OccupancyMask m = net.infer_mask(img);
    CHECK(m.h == 16);
    double frac = 0.0;
    for (auto b : bits) frac += b;
    CHECK(m.occupancy == doctest::Approx(frac / 256.0).epsilon(1e-12));
}

TEST_CASE("config validation rejects nonsense") {
    SegConfig c;
    c.base_channels = 1;
    CHECK_THROWS_AS(c.validate(), BadSpec);
    SegConfig c2;
    c2.bins = {0};
    CHECK_THROWS_AS(c2.validate(), BadSpec);
}

TEST_CASE("a tiny corpus is learnable and training is deterministic") {
    // one bright blob on dark background; mask = blob
    SegCorpus corpus;
    Rng rng(9);
    for (int s = 0; s < 4; ++s) {
        SegSample smp;
        smp.input = Image(16, 16, 3, 0.1);
        smp.target.assign(256, 0);
        int cx = 4 + static_cast<int>(rng.uniform_int(0, 8));
        int cy = 4 + static_cast<int>(rng.uniform_int(0, 8));
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (std::abs(x - cx) <= 2 && std::abs(y - cy) <= 2) {
                    for (int c = 0; c < 3; ++c) smp.input.at(y, x, c) = 0.9;
                    smp.target[y * 16 + x] = 1;
                }
        corpus.samples.push_back(std::move(smp));
    }
    SegConfig cfg;
    cfg.base_channels = 4;
    SegTrainConfig tc;
    tc.iters = 120;
    tc.log_every = 0;
    SegNet net(cfg, 3);
    SegMetrics m = train_fmg(net, corpus, tc);
    CHECK(m.miou > 0.5);

    SegNet net2(cfg, 3);
    train_fmg(net2, corpus, tc);
    for (size_t p = 0; p < net.params().params.size(); ++p)
        CHECK(net.params().params[p].second->val.v == net2.params().params[p].second->val.v);

    CHECK_THROWS_AS(train_fmg(net, SegCorpus{}, tc), EmptyCorpus);
}

TEST_CASE("loading a corpus from a missing directory throws") {
    CHECK_THROWS_AS(load_seg_corpus("/nonexistent/corpus"), EmptyCorpus);
}
