#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/train.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace gcnet;
using namespace gcnet::train;
using namespace testutil;

TEST_CASE("ohem: confident-correct pixel drives the loss to zero") {
    Tensor4<double> logits(1, 2, 1, 1);
    logits.at(0, 0, 0, 0) = 40.0;
    logits.at(0, 1, 0, 0) = -40.0;
    LabelMap labels(1, 1, 1);
    labels.at(0, 0, 0) = 0;
    CHECK(ohem_cross_entropy(logits, labels, 0.7, 1) <= 1e-12);
}

TEST_CASE("ohem: uniform logits over K classes give ln K") {
    const int K = 7;
    Tensor4<double> logits(1, K, 2, 3);
    LabelMap labels(1, 2, 3);
    for (auto& v : labels.data) v = 3;
    CHECK(ohem_cross_entropy(logits, labels, 0.99, 1) == doctest::Approx(std::log(K)));
}

TEST_CASE("ohem: 2x2 fixed case matches the exhaustive per-pixel oracle") {
    // class scores chosen so exactly one pixel is below thresh 0.7
    Tensor4<double> logits(1, 2, 2, 2);
    const double z[4][2] = {{3.0, 0.0}, {2.0, 0.0}, {0.2, 0.0}, {-1.0, 0.0}};
    for (int p = 0; p < 4; ++p) {
        logits.at(0, 0, p / 2, p % 2) = z[p][0];
        logits.at(0, 1, p / 2, p % 2) = z[p][1];
    }
    LabelMap labels(1, 2, 2);
    for (auto& v : labels.data) v = 0;

    // per-pixel: p_true = sigmoid(z0 - z1); CE = -log p_true
    auto p_true = [&](int p) { return 1.0 / (1.0 + std::exp(-(z[p][0] - z[p][1]))); };
    // probabilities: ~0.953, 0.881, 0.550, 0.269; below 0.7: pixels 2 and 3.
    // thresh 0.7, min_kept 2 -> keep exactly those two.
    const double want = -(std::log(p_true(2)) + std::log(p_true(3))) / 2.0;
    CHECK(ohem_cross_entropy(logits, labels, 0.7, 2) == doctest::Approx(want).epsilon(1e-12));

    // min_kept 3 pads with the next-hardest pixel (index 1)
    const double want3 =
        -(std::log(p_true(1)) + std::log(p_true(2)) + std::log(p_true(3))) / 3.0;
    CHECK(ohem_cross_entropy(logits, labels, 0.7, 3) == doctest::Approx(want3).epsilon(1e-12));
}

TEST_CASE("ohem: all-ignored input defines zero loss") {
    Tensor4<double> logits(1, 3, 2, 2);
    LabelMap labels(1, 2, 2);
    for (auto& v : labels.data) v = LabelMap::kIgnore;
    Tensor4<double> g;
    CHECK(ohem_cross_entropy(logits, labels, 0.7, 4, &g) == 0.0);
    for (const auto& v : g.data) CHECK(v == 0.0);
}

TEST_CASE("ohem: thresh 1.0 with min_kept=all reduces to mean cross entropy") {
    Rng rng(3);
    const auto logits = random_tensor<double>(rng, 1, 4, 5, 5);
    LabelMap labels(1, 5, 5);
    for (auto& v : labels.data) v = static_cast<std::int32_t>(rng.below(4));
    labels.data[7] = LabelMap::kIgnore;

    double mean_ce = 0.0;
    int counted = 0;
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            const std::int32_t lbl = labels.at(0, y, x);
            if (lbl == LabelMap::kIgnore) continue;
            double mx = -1e300, sum = 0.0;
            for (int c = 0; c < 4; ++c) mx = std::max(mx, logits.at(0, c, y, x));
            for (int c = 0; c < 4; ++c) sum += std::exp(logits.at(0, c, y, x) - mx);
            mean_ce -= logits.at(0, lbl, y, x) - (mx + std::log(sum));
            ++counted;
        }
    mean_ce /= counted;
    CHECK(ohem_cross_entropy(logits, labels, 1.0, labels.size()) ==
          doctest::Approx(mean_ce).epsilon(1e-12));
}

TEST_CASE("total_loss: alpha arithmetic") {
    Rng rng(4);
    const auto sh = random_tensor<double>(rng, 1, 3, 4, 4);
    const auto ash = random_tensor<double>(rng, 1, 3, 4, 4);
    LabelMap labels(1, 4, 4);
    for (auto& v : labels.data) v = static_cast<std::int32_t>(rng.below(3));

    OhemConfig ohem;
    const auto zero_alpha = total_loss(sh, ash, labels, 0.0, ohem);
    CHECK(zero_alpha.total == zero_alpha.l_sh);

    const auto both = total_loss(sh, sh, labels, 0.4, ohem);
    CHECK(both.l_sh == both.l_ash);
    CHECK(both.total == doctest::Approx(1.4 * both.l_sh).epsilon(1e-15));

    const auto mixed = total_loss(sh, ash, labels, 0.4, ohem);
    CHECK(mixed.total == mixed.l_sh + 0.4 * mixed.l_ash);
}

TEST_CASE("sgd: polynomial learning-rate schedule") {
    Rng rng(5);
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 4, 4), 1);
    auto params = parameters(net);
    SgdPoly<double> opt(params, 0.01, 1000);
    CHECK(opt.lr() == doctest::Approx(0.01));

    SgdPoly<double> half(params, 0.01, 2);
    std::vector<std::vector<double>> zero_grads;
    for (const auto& p : params) zero_grads.emplace_back(p.data->size(), 0.0);
    half.step(zero_grads);
    // iter = max_iter/2 with power 0.9
    CHECK(half.lr() == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-12));
    half.step(zero_grads);
    CHECK(half.lr() <= 1e-12);  // endpoint
    CHECK_THROWS_AS(half.step(zero_grads), InvalidArgument);
}

TEST_CASE("sgd: weight decay touches conv weights only") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 4, 4), 11);
    auto params = parameters(net);
    std::vector<std::vector<double>> zero_grads;
    std::vector<std::vector<double>> before;
    for (const auto& p : params) {
        zero_grads.emplace_back(p.data->size(), 0.0);
        before.push_back(*p.data);
    }
    SgdPoly<double> opt(params, 0.01, 10);
    opt.step(zero_grads);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& now = *params[i].data;
        if (params[i].kind == ParamKind::conv_weight) {
            for (std::size_t j = 0; j < now.size(); ++j)
                if (before[i][j] != 0.0) CHECK(now[j] != before[i][j]);
        } else {
            for (std::size_t j = 0; j < now.size(); ++j) CHECK(now[j] == before[i][j]);
        }
    }
}

TEST_CASE("sgd: momentum update matches the scalar recurrence") {
    // single fake parameter buffer driven through two steps
    std::vector<double> p{1.0};
    std::vector<ParamRef<double>> refs{{"w", ParamKind::conv_weight, &p}};
    SgdPoly<double> opt(refs, 0.1, 100, 0.9, 0.0005, 0.9);

    double pv = 1.0, v = 0.0;
    for (int it = 0; it < 2; ++it) {
        const double lr = 0.1 * std::pow(1.0 - it / 100.0, 0.9);
        const double g = 0.5;
        v = 0.9 * v + (g + 0.0005 * pv);
        pv -= lr * v;
        opt.step({{0.5}});
    }
    CHECK(p[0] == doctest::Approx(pv).epsilon(1e-14));
}

TEST_CASE("backward: all-ignored labels give a zero-loss stationary point") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 4, 4), 13);
    Rng rng(1);
    const auto x = random_tensor<double>(rng, 1, 3, 64, 64, 0.0, 1.0);
    LabelMap labels(1, 64, 64);
    for (auto& v : labels.data) v = LabelMap::kIgnore;
    const auto result = train::backward(net, x, labels);
    CHECK(result.loss.total == 0.0);
    for (const auto& g : result.grads)
        for (const double v : g) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("gradcheck: conv against central finite differences") {
    Rng rng(21);
    const auto r = gradcheck::check_conv(rng, 40);
    CHECK(r.checked >= 40);
    CHECK(r.max_rel_err <= 1e-3);
}

TEST_CASE("gradcheck: batchnorm train mode") {
    Rng rng(22);
    const auto r = gradcheck::check_batchnorm(rng, 40);
    CHECK(r.max_rel_err <= 1e-3);
}

TEST_CASE("gradcheck: relu, bilinear, avg-pool, pool+concat") {
    Rng rng(23);
    CHECK(gradcheck::check_relu(rng, 30).max_rel_err <= 1e-3);
    CHECK(gradcheck::check_bilinear(rng, 30).max_rel_err <= 1e-3);
    CHECK(gradcheck::check_avgpool(rng, 30).max_rel_err <= 1e-3);
    CHECK(gradcheck::check_pool_concat(rng, 30).max_rel_err <= 1e-3);
}

TEST_CASE("gradcheck: OHEM cross entropy composite (plain and mined)") {
    Rng rng(24);
    CHECK(gradcheck::check_ohem_ce(rng, 40, 1.0, 16).max_rel_err <= 1e-3);
    CHECK(gradcheck::check_ohem_ce(rng, 40, 0.7, 3).max_rel_err <= 1e-3);
}

TEST_CASE("gradcheck: full N=2 GCBlock with pixelwise cross entropy") {
    Rng rng(25);
    const auto r = gradcheck::check_gcblock(rng, 50);
    CHECK(r.checked >= 50);
    CHECK(r.max_rel_err <= 1e-3);
}

TEST_CASE("miou: identity, disjoint, and a hand-computed confusion case") {
    LabelMap a(1, 2, 2), b(1, 2, 2);
    a.data = {0, 1, 1, 0};
    b.data = {0, 1, 1, 0};
    CHECK(miou(a, b, 2) == doctest::Approx(1.0));

    LabelMap c(1, 2, 2);
    c.data = {1, 0, 0, 1};
    CHECK(miou(c, a, 2) == doctest::Approx(0.0));

    // 4 pixels, 2 classes, one error: truth {0,0,1,1}, pred {0,1,1,1}
    LabelMap truth(1, 2, 2), pred(1, 2, 2);
    truth.data = {0, 0, 1, 1};
    pred.data = {0, 1, 1, 1};
    // class 0: tp=1 fp=0 fn=1 -> 1/2; class 1: tp=2 fp=1 fn=0 -> 2/3
    CHECK(miou(pred, truth, 2) == doctest::Approx(0.5 * (0.5 + 2.0 / 3.0)));

    // ignore pixels drop out entirely
    truth.data = {0, LabelMap::kIgnore, 1, 1};
    pred.data = {0, 1, 1, 1};
    CHECK(miou(pred, truth, 2) == doctest::Approx(1.0));
}

TEST_CASE("shape dataset: deterministic, labeled in range, 8-bit color grid") {
    ShapeDataset data(77, 64);
    const auto a = data.sample(5);
    const auto b = data.sample(5);
    for (std::size_t j = 0; j < a.image.size(); ++j) CHECK(a.image.data[j] == b.image.data[j]);
    for (std::size_t j = 0; j < a.labels.size(); ++j) CHECK(a.labels.data[j] == b.labels.data[j]);

    bool any_shape = false;
    for (std::size_t j = 0; j < a.labels.size(); ++j) {
        CHECK(a.labels.data[j] >= 0);
        CHECK(a.labels.data[j] < ShapeDataset::kNumClasses);
        if (a.labels.data[j] > 0) any_shape = true;
    }
    CHECK(any_shape);
    for (const double v : a.image.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v * 255.0 == doctest::Approx(std::round(v * 255.0)).epsilon(1e-12));
    }
    // different indices differ
    const auto c = data.sample(6);
    CHECK(max_abs_diff(a.image, c.image) > 0.0);
}

TEST_CASE("toy_train_run: deterministic traces and divergence guard") {
    ToyTrainConfig cfg;
    cfg.seed = 9;
    cfg.iters = 8;
    cfg.batch = 1;
    cfg.image_size = 64;
    cfg.base_channels = 4;
    cfg.eval_every = 4;
    cfg.val_images = 2;

    const auto a = toy_train_run(cfg);
    const auto b = toy_train_run(cfg);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].loss == b.trace[i].loss);
        CHECK(a.trace[i].lr == b.trace[i].lr);
    }
    CHECK(std::isfinite(a.final_miou));

    ToyTrainConfig diverge = cfg;
    // large enough that squared activations overflow despite BN rescaling
    diverge.base_lr = 1e200;
    CHECK_THROWS_AS(toy_train_run(diverge), NumericError);
}
