#include "gnfr/autodiff.hpp"
#include "gnfr/common.hpp"

#include "doctest.h"

#include <cmath>
#include <functional>

using namespace gnfr;
using nn::Tensor;
using nn::Var;

namespace {

Var randn(std::vector<int> shape, Rng& rng, double s = 1.0) {
    Tensor t(shape);
    for (auto& v : t.v) v = s * rng.normal();
    return nn::make_param(std::move(t));
}

// central-difference check of d(loss)/d(p) for every entry of every param
void check_grads(const std::vector<Var>& params, const std::function<Var()>& loss_fn,
                 double eps = 1e-5, double tol = 1e-6) {
    Var loss = loss_fn();
    REQUIRE(loss->val.numel() == 1);
    nn::backward(loss);
    for (const auto& p : params) {
        for (size_t i = 0; i < p->val.numel(); ++i) {
            double save = p->val.v[i];
            p->val.v[i] = save + eps;
            double up = loss_fn()->val.v[0];
            p->val.v[i] = save - eps;
            double dn = loss_fn()->val.v[0];
            p->val.v[i] = save;
            double fd = (up - dn) / (2 * eps);
            double ad = p->grad.empty() ? 0.0 : p->grad[i];
            double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
            CHECK(std::abs(fd - ad) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise op values") {
    Tensor a({3}, {1.0, -2.0, 0.5});
    Tensor b({3}, {2.0, 3.0, -1.0});
    Var va = nn::constant(a), vb = nn::constant(b);
    CHECK(nn::add(va, vb)->val.v[1] == 1.0);
    CHECK(nn::sub(va, vb)->val.v[0] == -1.0);
    CHECK(nn::mul(va, vb)->val.v[2] == -0.5);
    CHECK(nn::relu(va)->val.v[1] == 0.0);
    CHECK(nn::relu(va)->val.v[0] == 1.0);
    CHECK(nn::sigmoid(nn::constant(Tensor({1}, {0.0})))->val.v[0] == 0.5);
    CHECK(nn::scale(va, 2.0)->val.v[2] == 1.0);
    CHECK(nn::add_scalar(va, 1.0)->val.v[1] == -1.0);
}

TEST_CASE("gradients flow once through diamond-shaped graphs") {
    // y = x*x + x*x; dy/dx = 4x
    Var x = nn::make_param(Tensor({1}, {3.0}));
    Var sq = nn::mul(x, x);
    Var y = nn::add(sq, sq);
    nn::backward(nn::sum_all(y));
    CHECK(x->grad[0] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("linear matches finite differences") {
    Rng rng(1);
    Var x = randn({4, 3}, rng), w = randn({3, 5}, rng), b = randn({5}, rng);
    check_grads({x, w, b}, [&] { return nn::mean_all(nn::linear(x, w, b)); });
}

TEST_CASE("layernorm matches finite differences") {
    Rng rng(2);
    Var x = randn({5, 6}, rng), g = randn({6}, rng), b = randn({6}, rng);
    check_grads({x, g, b},
                [&] { return nn::mean_all(nn::mul(nn::layernorm_rows(x, g, b),
                                                  nn::layernorm_rows(x, g, b))); },
                1e-5, 1e-5);
}

TEST_CASE("softmax rows sum to one and match finite differences") {
    Rng rng(3);
    Var x = randn({4, 5}, rng);
    Var s = nn::softmax_rows(x, 5);
    for (int r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 5; ++c) sum += s->val.v[r * 5 + c];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    Var t = randn({4, 5}, rng);
    check_grads({x}, [&] { return nn::mean_all(nn::mul(nn::softmax_rows(x, 5), t)); });
}

TEST_CASE("hand-computed softmax then mask renormalization") {
    // logits (0, ln 2, 0) -> probs (0.25, 0.5, 0.25); masking the middle
    // entry and renormalizing must give exactly (0.5, 0, 0.5)
    Tensor t({1, 3}, {0.0, std::log(2.0), 0.0});
    Var probs = nn::softmax_rows(nn::constant(t), 3);
    CHECK(probs->val.v[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(probs->val.v[1] == doctest::Approx(0.5).epsilon(1e-12));
    Var w = nn::masked_renorm_rows(probs, 3, {1, 0, 1}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, true);
    CHECK(w->val.v[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w->val.v[1] == 0.0);
    CHECK(w->val.v[2] == doctest::Approx(0.5).epsilon(1e-12));
    Var raw = nn::masked_renorm_rows(probs, 3, {1, 0, 1}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, false);
    CHECK(raw->val.v[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(raw->val.v[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("masked renorm falls back on fully masked rows") {
    Tensor t({1, 3}, {0.1, 0.6, 0.3});
    Var w = nn::masked_renorm_rows(nn::constant(t), 3, {0, 0, 0}, {0.0, 1.0, 0.0}, true);
    CHECK(w->val.v[0] == 0.0);
    CHECK(w->val.v[1] == 1.0);
    CHECK(w->val.v[2] == 0.0);
}

TEST_CASE("masked renorm matches finite differences") {
    Rng rng(4);
    Var x = randn({3, 4}, rng);
    Var t = randn({3, 4}, rng);
    std::vector<double> keep = {1, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    std::vector<double> fallback(12, 0.25);
    check_grads({x}, [&] {
        Var probs = nn::softmax_rows(x, 4);
        return nn::mean_all(nn::mul(nn::masked_renorm_rows(probs, 4, keep, fallback, true), t));
    }, 1e-5, 1e-5);
}

TEST_CASE("attention scores and apply match finite differences") {
    Rng rng(5);
    int g = 2, tq = 2, tk = 3, dh = 4;
    Var q = randn({g * tq, dh}, rng), k = randn({g * tk, dh}, rng), v = randn({g * tk, dh}, rng);
    Var tgt = randn({g * tq, dh}, rng);
    check_grads({q, k, v}, [&] {
        Var s = nn::attn_scores(q, k, g, tq, tk, dh, 0.5);
        Var w = nn::softmax_rows(s, tk);
        return nn::mean_all(nn::mul(nn::attn_apply(w, v, g, tq, tk, dh), tgt));
    });
}

TEST_CASE("permute_gather reindexes with zero-fill and accumulating backward") {
    Var x = nn::make_param(Tensor({2, 2}, {1, 2, 3, 4}));
    auto idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{3, 3, -1, 0});
    Var y = nn::permute_gather(x, idx, {2, 2});
    CHECK(y->val.v[0] == 4);
    CHECK(y->val.v[1] == 4);
    CHECK(y->val.v[2] == 0);
    CHECK(y->val.v[3] == 1);
    nn::backward(nn::sum_all(y));
    CHECK(x->grad[3] == 2.0);  // gathered twice
    CHECK(x->grad[0] == 1.0);
    CHECK(x->grad[1] == 0.0);
}

TEST_CASE("gather_rows mixes rows with fixed weights") {
    Rng rng(6);
    Var x = randn({3, 2}, rng);
    auto taps = std::make_shared<nn::RowTaps>();
    taps->offsets = {0, 2, 3};
    taps->cells = {0, 2, 1};
    taps->wts = {0.25, 0.75, 1.0};
    Var y = nn::gather_rows(x, taps, 2);
    CHECK(y->val.v[0] ==
          doctest::Approx(0.25 * x->val.v[0] + 0.75 * x->val.v[4]).epsilon(1e-12));
    Var t = randn({2, 2}, rng);
    check_grads({x}, [&] { return nn::mean_all(nn::mul(nn::gather_rows(x, taps, 2), t)); });
}

TEST_CASE("mean_groups averages fixed-size row groups") {
    Var x = nn::make_param(Tensor({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
    Var y = nn::mean_groups(x, 2, 2);
    CHECK(y->val.v[0] == 2.0);
    CHECK(y->val.v[3] == 7.0);
    check_grads({x}, [&] { return nn::sum_all(nn::mul(nn::mean_groups(x, 2, 2),
                                                      nn::mean_groups(x, 2, 2))); });
}

TEST_CASE("masked mse hand case and gradient") {
    // rows: kept row err (0.5)^2 * 3 entries, masked row ignored
    Var pred = nn::make_param(Tensor({2, 3}, {0.5, 0.5, 0.5, 1.0, 0.0, 0.0}));
    std::vector<double> target = {0, 0, 0, 1, 1, 1};
    Var loss = nn::masked_mse(pred, target, {1.0, 0.0}, 3);
    CHECK(loss->val.v[0] == doctest::Approx(0.25).epsilon(1e-12));
    nn::backward(loss);
    CHECK(pred->grad[0] == doctest::Approx(2.0 * 0.5 / 3.0).epsilon(1e-12));
    CHECK(pred->grad[3] == 0.0);
    CHECK(pred->grad[4] == 0.0);

    // fully masked batches contribute a constant zero loss
    Var all_masked = nn::masked_mse(pred, target, {0.0, 0.0}, 3);
    CHECK(all_masked->val.v[0] == 0.0);
}

TEST_CASE("masked mse matches finite differences") {
    Rng rng(7);
    Var pred = randn({4, 3}, rng);
    std::vector<double> target(12);
    for (auto& t : target) t = rng.uniform();
    check_grads({pred}, [&] { return nn::masked_mse(pred, target, {1, 0, 1, 1}, 3); });
}

TEST_CASE("weighted bce frozen value and gradient") {
    // logit 0, target 1, positive weight 5: loss = 5 ln 2
    Var logit = nn::make_param(Tensor({1, 1}, {0.0}));
    Var loss = nn::weighted_bce_logits(logit, {1.0}, 5.0, 1.0);
    CHECK(loss->val.v[0] == doctest::Approx(3.4657359027997265).epsilon(1e-12));

    Rng rng(8);
    Var logits = randn({6, 1}, rng);
    std::vector<double> target = {1, 0, 1, 1, 0, 0};
    check_grads({logits}, [&] { return nn::weighted_bce_logits(logits, target, 5.0, 1.0); });
}

TEST_CASE("no-grad mode records no graph") {
    Var x = nn::make_param(Tensor({1}, {2.0}));
    nn::NoGradGuard ng;
    Var y = nn::mul(x, x);
    CHECK(y->val.v[0] == 4.0);
    CHECK(y->parents.empty());
    CHECK_FALSE(y->requires_grad);
}
