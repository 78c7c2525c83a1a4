#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "microseg/kernels.hpp"
#include "microseg/model.hpp"
#include "test_util.hpp"

using namespace microseg;

namespace {

ModelState tiny_model(int in_ch, int feat, int depth, const std::vector<ClassId>& classes,
                      int k, std::uint64_t seed) {
    FeatureExtractorConfig cfg;
    cfg.in_channels = in_ch;
    cfg.feature_channels = feat;
    cfg.depth = depth;
    cfg.kernel_size = 3;
    std::mt19937_64 rng(seed);
    return init_model(cfg, classes, k, rng);
}

ProposalSet whole_image_proposal(std::size_t h, std::size_t w) {
    ProposalSet set;
    set.n = 1;
    set.height = h;
    set.width = w;
    set.masks.assign(h * w, 1);
    return set;
}

}  // namespace

TEST_CASE("zero image through a zeroed extractor gives zero features") {
    ModelState s = tiny_model(2, 4, 2, {1}, 1, 0);
    for (auto& t : s.conv_weights) t.fill(0.0);
    for (auto& t : s.conv_biases) t.fill(0.0);
    const std::vector<float> img(2 * 4 * 4, 0.0f);
    const Tensor f = extract_features(s, img, 2, 4, 4);
    for (double v : f.data) REQUIRE(v == 0.0);
}

TEST_CASE("feature extraction is deterministic and shape preserving") {
    ModelState s = tiny_model(3, 6, 2, {1, 2}, 2, 1);
    std::mt19937_64 rng(2);
    const auto img = testutil::random_image(3, 5, 7, rng);
    const Tensor a = extract_features(s, img, 3, 5, 7);
    const Tensor b = extract_features(s, img, 3, 5, 7);
    REQUIRE(a.shape == std::vector<std::size_t>{6, 5, 7});
    REQUIRE(a.data == b.data);
    REQUIRE_THROWS_AS(extract_features(s, img, 3, 5, 8), std::invalid_argument);
}

TEST_CASE("masked average pooling on hand fixtures") {
    Tensor feat({1, 1, 2});
    feat.data = {2.0, 4.0};
    const auto whole = whole_image_proposal(1, 2);
    const PrototypeMatrix p1 = masked_average_pool(feat, whole);
    REQUIRE(p1.values.at(0, 0) == 3.0);

    ProposalSet single;
    single.n = 2;
    single.height = 1;
    single.width = 2;
    single.masks = {1, 0, 0, 1};
    const PrototypeMatrix p2 = masked_average_pool(feat, single);
    REQUIRE(p2.values.at(0, 0) == 2.0);
    REQUIRE(p2.values.at(1, 0) == 4.0);
}

TEST_CASE("masked average pooling matches brute-force accumulation") {
    std::mt19937_64 rng(3);
    for (int it = 0; it < 50; ++it) {
        const Tensor feat = testutil::random_tensor({3, 4, 4}, rng);
        const auto part = testutil::random_partition(5, 4, 4, rng);
        const PrototypeMatrix pm = masked_average_pool(feat, part);
        for (std::size_t n = 0; n < 5; ++n) {
            for (std::size_t c = 0; c < 3; ++c) {
                double sum = 0.0;
                int cnt = 0;
                for (std::size_t p = 0; p < 16; ++p)
                    if (part.masks[n * 16 + p]) {
                        sum += feat.data[c * 16 + p];
                        ++cnt;
                    }
                const double expected = cnt ? sum / cnt : 0.0;
                REQUIRE(pm.values.at(n, c) == doctest::Approx(expected).epsilon(1e-9));
            }
            REQUIRE(pm.empty[n] == (part.empty_mask(n) ? 1 : 0));
        }
    }
}

TEST_CASE("classify_prototypes is the affine head map") {
    ModelState s = tiny_model(1, 4, 1, {1, 2}, 1, 4);
    s.prop_weight.fill(0.0);
    s.prop_bias.data = {0.5, -1.5, 2.0};
    PrototypeMatrix pm;
    pm.values = Tensor::zeros({2, 4});
    pm.empty = {0, 0};
    const Tensor logits = classify_prototypes(s, pm);
    for (std::size_t n = 0; n < 2; ++n) {
        REQUIRE(logits.at(n, 0) == 0.5);
        REQUIRE(logits.at(n, 1) == -1.5);
        REQUIRE(logits.at(n, 2) == 2.0);
    }
    // Hand multiply on a 2-wide slice.
    s.prop_bias.fill(0.0);
    s.prop_weight.at(0, 0) = 1.0;
    s.prop_weight.at(0, 1) = 2.0;
    pm.values.at(0, 0) = 3.0;
    pm.values.at(0, 1) = -1.0;
    REQUIRE(classify_prototypes(s, pm).at(0, 0) == 1.0);
}

TEST_CASE("reorganize scatters logit rows to pixels") {
    ProposalSet part;
    part.n = 2;
    part.height = 1;
    part.width = 2;
    part.masks = {1, 0, 0, 1};
    Tensor logits({2, 2});
    logits.data = {1.0, 2.0, 3.0, 4.0};
    const Tensor pix = reorganize(logits, part);
    REQUIRE(pix.at(0, 0, 0) == 1.0);
    REQUIRE(pix.at(0, 0, 1) == 3.0);
    REQUIRE(pix.at(1, 0, 0) == 2.0);
    REQUIRE(pix.at(1, 0, 1) == 4.0);

    const auto whole = whole_image_proposal(2, 2);
    Tensor one({1, 2});
    one.data = {5.0, -1.0};
    const Tensor b = reorganize(one, whole);
    for (std::size_t p = 0; p < 4; ++p) {
        REQUIRE(b.data[p] == 5.0);
        REQUIRE(b.data[4 + p] == -1.0);
    }
}

TEST_CASE("reorganize equals the per-pixel lookup oracle and is linear") {
    std::mt19937_64 rng(5);
    for (int it = 0; it < 50; ++it) {
        const auto part = testutil::random_partition(6, 5, 6, rng);
        const Tensor l1 = testutil::random_tensor({6, 4}, rng);
        const Tensor l2 = testutil::random_tensor({6, 4}, rng);
        const Tensor r1 = reorganize(l1, part);
        // lookup oracle
        for (std::size_t p = 0; p < 30; ++p) {
            std::size_t owner = 0;
            for (std::size_t n = 0; n < 6; ++n)
                if (part.masks[n * 30 + p]) owner = n;
            for (std::size_t c = 0; c < 4; ++c) REQUIRE(r1.data[c * 30 + p] == l1.at(owner, c));
        }
        // linearity, exact
        Tensor combo({6, 4});
        for (std::size_t i = 0; i < combo.data.size(); ++i)
            combo.data[i] = 2.0 * l1.data[i] + l2.data[i];
        const Tensor rc = reorganize(combo, part);
        const Tensor r2 = reorganize(l2, part);
        for (std::size_t i = 0; i < rc.data.size(); ++i)
            REQUIRE(rc.data[i] == doctest::Approx(2.0 * r1.data[i] + r2.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("reorganize rejects non-partitions") {
    ProposalSet bad;
    bad.n = 1;
    bad.height = 1;
    bad.width = 2;
    bad.masks = {1, 0};
    Tensor logits({1, 1});
    REQUIRE_THROWS_AS(reorganize(logits, bad), std::invalid_argument);
}

TEST_CASE("dense head on zero features yields constant bias maps") {
    ModelState s = tiny_model(1, 4, 1, {1}, 1, 6);
    s.dense_bias.data = {0.25, -0.75};
    const Tensor f = Tensor::zeros({4, 3, 3});
    const Tensor out = dense_predict(s, f);
    for (std::size_t p = 0; p < 9; ++p) {
        REQUIRE(out.data[p] == 0.25);
        REQUIRE(out.data[9 + p] == -0.75);
    }
}

TEST_CASE("dense and proposal branches agree on constant features with tied heads") {
    ModelState s = tiny_model(1, 4, 1, {1, 2}, 1, 7);
    s.dense_weight = s.prop_weight;
    s.dense_bias = s.prop_bias;
    Tensor f({4, 2, 2});
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t p = 0; p < 4; ++p) f.data[c * 4 + p] = 0.3 * (c + 1.0);
    const auto whole = whole_image_proposal(2, 2);
    const Tensor via_prop = reorganize(classify_prototypes(s, masked_average_pool(f, whole)), whole);
    const Tensor via_dense = dense_predict(s, f);
    for (std::size_t i = 0; i < via_prop.data.size(); ++i)
        REQUIRE(via_prop.data[i] == doctest::Approx(via_dense.data[i]).epsilon(1e-12));
}

TEST_CASE("proposal_predict is the exact composition and constant per proposal") {
    ModelState s = tiny_model(2, 4, 1, {1, 2}, 2, 8);
    std::mt19937_64 rng(9);
    const auto img = testutil::random_image(2, 4, 4, rng);
    const auto part = testutil::random_partition(4, 4, 4, rng);
    const Tensor direct = proposal_predict(s, img, 2, 4, 4, part);
    const Tensor f = extract_features(s, img, 2, 4, 4);
    const Tensor composed = reorganize(classify_prototypes(s, masked_average_pool(f, part)), part);
    REQUIRE(direct.data == composed.data);
    // Constant within each proposal.
    for (std::size_t n = 0; n < part.n; ++n) {
        double ref = 0.0;
        bool found = false;
        for (std::size_t p = 0; p < 16; ++p)
            if (part.masks[n * 16 + p]) {
                if (!found) {
                    ref = direct.data[p];
                    found = true;
                }
                REQUIRE(direct.data[p] == ref);
            }
    }
    // Permuting proposal order leaves the pixel logits unchanged.
    ProposalSet permuted = part;
    for (std::size_t p = 0; p < 16; ++p) {
        std::swap(permuted.masks[0 * 16 + p], permuted.masks[3 * 16 + p]);
    }
    const Tensor perm_out = proposal_predict(s, img, 2, 4, 4, permuted);
    REQUIRE(perm_out.data == direct.data);
}

TEST_CASE("expand_head appends before the unseen slots without touching old weights") {
    ModelState s = tiny_model(1, 4, 1, {}, 5, 10);
    std::mt19937_64 rng(11);
    std::vector<ClassId> base;
    for (int c = 1; c <= 15; ++c) base.push_back(c);
    s = expand_head(s, base, 0.1, rng);
    REQUIRE(s.out_channels() == 20);
    const Tensor before_w = s.prop_weight;
    ModelState grown = expand_head(s, {16}, 0.1, rng);
    REQUIRE(grown.registry.size() == 16);
    REQUIRE(grown.out_channels() == 21);
    for (std::size_t r = 0; r < 15; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            REQUIRE(grown.prop_weight.at(r, c) == before_w.at(r, c));
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            REQUIRE(grown.prop_weight.at(16 + r, c) == before_w.at(15 + r, c));

    // Empty expansion is the identity.
    std::mt19937_64 rng2(12);
    const ModelState same = expand_head(grown, {}, 0.1, rng2);
    REQUIRE(same.prop_weight.data == grown.prop_weight.data);
    REQUIRE(same.registry == grown.registry);

    // Sequential vs combined expansion: identical registries.
    std::mt19937_64 ra(13), rb(13);
    ModelState two_step = expand_head(expand_head(s, {16}, 0.1, ra), {17}, 0.1, ra);
    ModelState one_step = expand_head(s, {16, 17}, 0.1, rb);
    REQUIRE(two_step.registry == one_step.registry);

    REQUIRE_THROWS_AS(expand_head(grown, {16}, 0.1, rng), std::invalid_argument);
}

TEST_CASE("inference aggregates unseen slots and breaks ties low") {
    ModelState s = tiny_model(1, 4, 1, {7, 9}, 2, 14);
    Tensor logits({4, 1, 1});
    logits.data = {3.0, 1.0, 0.5, 0.4};  // class7, class9, 2 unseen slots
    REQUIRE(decode_logits(s, logits, true)[0] == 7);
    // c_u sum 0.9 < 3.0 keeps class 7; crank the slots up to win.
    logits.data = {3.0, 1.0, 2.0, 1.5};
    REQUIRE(decode_logits(s, logits, true)[0] == 0);
    // include_unseen=false ignores the slots entirely.
    REQUIRE(decode_logits(s, logits, false)[0] == 7);
    // Ties break toward the lowest registry index.
    logits.data = {2.0, 2.0, -5.0, -5.0};
    REQUIRE(decode_logits(s, logits, true)[0] == 7);

    // K=1: the c_u score is the single slot logit.
    ModelState s1 = tiny_model(1, 4, 1, {7}, 1, 15);
    Tensor l1({2, 1, 1});
    l1.data = {0.5, 0.6};
    REQUIRE(decode_logits(s1, l1, true)[0] == 0);
    l1.data = {0.7, 0.6};
    REQUIRE(decode_logits(s1, l1, true)[0] == 7);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    ModelState s = tiny_model(3, 6, 2, {1, 2, 3}, 2, 16);
    s.step = 4;
    s.frozen_extractor = true;
    namespace fs = std::filesystem;
    const std::string p1 = fs::temp_directory_path() / "microseg_ck1.bin";
    const std::string p2 = fs::temp_directory_path() / "microseg_ck2.bin";
    save_checkpoint(s, p1);
    const ModelState back = load_checkpoint(p1);
    REQUIRE(back.registry == s.registry);
    REQUIRE(back.step == 4);
    REQUIRE(back.frozen_extractor);
    REQUIRE(back.prop_weight.data == s.prop_weight.data);
    REQUIRE(back.conv_weights[1].data == s.conv_weights[1].data);
    save_checkpoint(back, p2);
    std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    REQUIRE(bytes_a == bytes_b);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("extractor gradient matches central finite differences") {
    // Scalar loss: sum of all features.
    ModelState s = tiny_model(2, 4, 1, {1}, 1, 17);
    std::mt19937_64 rng(18);
    const auto img = testutil::random_image(2, 4, 4, rng);
    FeatureTrace trace;
    const Tensor feat = extract_features(s, img, 2, 4, 4, &trace);
    Tensor dz(feat.shape);
    for (std::size_t i = 0; i < feat.data.size(); ++i)
        dz.data[i] = 1.0 - feat.data[i] * feat.data[i];
    Tensor input({2, 4, 4});
    for (std::size_t i = 0; i < input.data.size(); ++i) input.data[i] = img[i];
    Tensor gw = Tensor::zeros({4, 2, 3, 3}), gb = Tensor::zeros({4});
    kernels::conv2d_backward_params(dz, input, gw, gb);

    auto loss = [&](const ModelState& m) {
        const Tensor f = extract_features(m, img, 2, 4, 4);
        double sum = 0.0;
        for (double v : f.data) sum += v;
        return sum;
    };
    const double h = 1e-4;
    for (std::size_t i = 0; i < gw.data.size(); i += 7) {
        ModelState plus = s, minus = s;
        plus.conv_weights[0].data[i] += h;
        minus.conv_weights[0].data[i] -= h;
        const double fd = (loss(plus) - loss(minus)) / (2.0 * h);
        REQUIRE(testutil::rel_err(gw.data[i], fd) < 1e-4);
    }
}
