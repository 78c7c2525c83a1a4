#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "microseg/remodel.hpp"
#include "microseg/trainer.hpp"
#include "test_util.hpp"

using namespace microseg;

namespace {

std::string write_config(const std::string& body) {
    const std::string path = std::filesystem::temp_directory_path() / "microseg_cfg.txt";
    std::ofstream f(path);
    f << body;
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

RunConfig tiny_config() {
    RunConfig c;
    c.num_classes = 4;
    c.notation = "2-1";
    c.num_train = 20;
    c.num_val = 8;
    c.height = 16;
    c.width = 16;
    c.model.feature_channels = 4;
    c.model.depth = 1;
    c.unseen_k = 2;
    c.epochs_per_step = 2;
    c.batch_size = 4;
    c.learning_rate = 0.01;
    c.variant = Variant::full;
    return c;
}

}  // namespace

TEST_CASE("config files parse and unknown keys are rejected") {
    const std::string path = write_config(
        "# comment\n"
        "num_classes=8\n"
        "notation=4-1\n"
        "mode=overlapped\n"
        "k=3\n"
        "tau=0.6\n"
        "lambda=0.5\n"
        "proposal_mode=grid\n"
        "learning_rate=0.02\n"
        "variant=no_remodel\n");
    const RunConfig c = read_config(path);
    REQUIRE(c.num_classes == 8);
    REQUIRE(c.unseen_k == 3);
    REQUIRE(c.tau == doctest::Approx(0.6));
    REQUIRE(c.lambda == doctest::Approx(0.5));
    REQUIRE(c.proposal_mode == ProposalGen::grid);
    REQUIRE(c.variant == Variant::no_remodel);
    REQUIRE(c.scenario().num_steps() == 5);

    REQUIRE_THROWS_WITH_AS(read_config(write_config("bogus_key=1\n")),
                           doctest::Contains("bogus_key"), std::runtime_error);
    REQUIRE_THROWS_AS(read_config(write_config("tau=1.5\n")), std::runtime_error);
    REQUIRE_THROWS_AS(read_config("/nonexistent/cfg"), std::runtime_error);
}

TEST_CASE("variant switches gate the components") {
    RunConfig c = tiny_config();
    c.unseen_k = 5;
    c.variant = Variant::baseline;
    REQUIRE(c.effective_k() == 1);
    REQUIRE(c.dense_branch_only());
    REQUIRE_FALSE(c.uses_pseudo_labels());
    REQUIRE_FALSE(c.uses_contrastive());
    c.variant = Variant::no_remodel;
    REQUIRE(c.effective_k() == 5);
    REQUIRE_FALSE(c.uses_pseudo_labels());
    REQUIRE(c.uses_contrastive());
    c.variant = Variant::no_micro;
    REQUIRE(c.effective_k() == 1);
    REQUIRE(c.uses_pseudo_labels());
    REQUIRE_FALSE(c.uses_contrastive());
    c.variant = Variant::full;
    REQUIRE(c.effective_k() == 5);
    REQUIRE(c.uses_pseudo_labels());
    REQUIRE(c.uses_contrastive());
    REQUIRE(parse_variant(variant_name(Variant::full_memory)) == Variant::full_memory);
    REQUIRE_THROWS_AS(parse_variant("nope"), std::invalid_argument);
}

TEST_CASE("zero learning rate leaves the parameters bit-identical") {
    FeatureExtractorConfig cfg;
    cfg.in_channels = 2;
    cfg.feature_channels = 3;
    std::mt19937_64 rng(1);
    ModelState state = init_model(cfg, {1, 2}, 2, rng);
    const ModelState before = state;

    ParamGrads g = ParamGrads::zeros_like(state);
    g.prop_b.fill(1.0);
    g.dense_w.fill(-0.5);
    g.conv_w[0].fill(0.25);
    SgdState opt;
    opt.velocity = ParamGrads::zeros_like(state);
    opt.learning_rate = 0.0;
    opt.momentum = 0.9;
    opt.weight_decay = 1e-4;
    for (int i = 0; i < 3; ++i) sgd_update(state, g, opt);
    for (std::size_t i = 0; i < state.prop_bias.data.size(); ++i)
        REQUIRE(state.prop_bias.data[i] == before.prop_bias.data[i]);
    REQUIRE(state.dense_weight.data == before.dense_weight.data);
    REQUIRE(state.conv_weights[0].data == before.conv_weights[0].data);
}

TEST_CASE("sgd with momentum follows the hand-computed recurrence") {
    FeatureExtractorConfig cfg;
    cfg.in_channels = 1;
    cfg.feature_channels = 1;
    std::mt19937_64 rng(2);
    ModelState state = init_model(cfg, {1}, 1, rng);
    const double w0 = state.prop_bias[0];
    ParamGrads g = ParamGrads::zeros_like(state);
    g.prop_b[0] = 2.0;
    SgdState opt;
    opt.velocity = ParamGrads::zeros_like(state);
    opt.learning_rate = 0.1;
    opt.momentum = 0.5;
    opt.weight_decay = 0.0;
    sgd_update(state, g, opt);
    const double v1 = -0.1 * 2.0;
    REQUIRE(state.prop_bias[0] == doctest::Approx(w0 + v1).epsilon(1e-12));
    sgd_update(state, g, opt);
    const double v2 = 0.5 * v1 - 0.1 * 2.0;
    REQUIRE(state.prop_bias[0] == doctest::Approx(w0 + v1 + v2).epsilon(1e-12));
}

TEST_CASE("frozen extractors receive neither gradients nor updates") {
    FeatureExtractorConfig cfg;
    cfg.in_channels = 2;
    cfg.feature_channels = 3;
    std::mt19937_64 rng(3);
    ModelState state = freeze_extractor(init_model(cfg, {1, 2}, 2, rng));

    const auto proposals = generate_grid_proposals(4, 4, 2, 2);
    const auto image = testutil::random_image(2, 4, 4, rng);
    RemodeledLabel rl;
    rl.height = 4;
    rl.width = 4;
    rl.labels.assign(16, kFutureLabel);
    rl.labels[0] = 1;
    rl.labels[5] = 2;
    ParamGrads g = ParamGrads::zeros_like(state);
    sample_loss_and_grads(state, image, 2, 4, 4, proposals, rl, 2, 1.0, false, true, true, &g);
    for (double v : g.conv_w[0].data) REQUIRE(v == 0.0);
    for (double v : g.conv_b[0].data) REQUIRE(v == 0.0);

    const ModelState before = state;
    SgdState opt;
    opt.velocity = ParamGrads::zeros_like(state);
    opt.learning_rate = 0.5;
    ParamGrads forced = ParamGrads::zeros_like(state);
    forced.conv_w[0].fill(1.0);
    sgd_update(state, forced, opt);
    REQUIRE(state.conv_weights[0].data == before.conv_weights[0].data);
}

TEST_CASE("loss breakdown carries the dense term only when requested") {
    FeatureExtractorConfig cfg;
    cfg.in_channels = 2;
    cfg.feature_channels = 3;
    std::mt19937_64 rng(4);
    const ModelState state = init_model(cfg, {1, 2}, 2, rng);
    const auto proposals = generate_grid_proposals(4, 4, 2, 2);
    const auto image = testutil::random_image(2, 4, 4, rng);
    RemodeledLabel rl;
    rl.height = 4;
    rl.width = 4;
    rl.labels.assign(16, kFutureLabel);
    rl.labels[3] = 1;

    const LossBreakdown first =
        sample_loss_and_grads(state, image, 2, 4, 4, proposals, rl, 1, 1.0, true, true, true,
                              nullptr);
    REQUIRE(first.bce_dense.has_value());
    REQUIRE(first.total == doctest::Approx(first.bce_proposal + *first.bce_dense +
                                           first.contrastive));

    const LossBreakdown later =
        sample_loss_and_grads(state, image, 2, 4, 4, proposals, rl, 2, 1.0, false, true, true,
                              nullptr);
    REQUIRE_FALSE(later.bce_dense.has_value());
    REQUIRE(later.total == doctest::Approx(later.bce_proposal + later.contrastive));
}

TEST_CASE("analytic parameter gradients match finite differences") {
    FeatureExtractorConfig cfg;
    cfg.in_channels = 2;
    cfg.feature_channels = 3;
    cfg.depth = 2;
    cfg.kernel_size = 3;
    std::mt19937_64 rng(5);
    ModelState state = init_model(cfg, {1, 2}, 2, rng);
    const auto proposals = generate_grid_proposals(4, 4, 2, 2);
    const auto image = testutil::random_image(2, 4, 4, rng);
    RemodeledLabel rl;
    rl.height = 4;
    rl.width = 4;
    rl.labels.assign(16, kFutureLabel);
    rl.labels[0] = 1;
    rl.labels[6] = 2;
    rl.labels[11] = 1;

    auto loss_at = [&](ModelState& s) {
        return sample_loss_and_grads(s, image, 2, 4, 4, proposals, rl, 1, 1.0, true, true, true,
                                     nullptr)
            .total;
    };

    ParamGrads g = ParamGrads::zeros_like(state);
    sample_loss_and_grads(state, image, 2, 4, 4, proposals, rl, 1, 1.0, true, true, true, &g);
    std::vector<Tensor*> params = testutil::all_params(state);
    std::vector<Tensor*> grads{&g.conv_w[0], &g.conv_w[1], &g.conv_b[0], &g.conv_b[1],
                               &g.dense_w,   &g.dense_b,   &g.prop_w,    &g.prop_b};
    REQUIRE(params.size() == grads.size());
    const double h = 1e-5;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double orig = p.data[i];
            p.data[i] = orig + h;
            const double lp = loss_at(state);
            p.data[i] = orig - h;
            const double lm = loss_at(state);
            p.data[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            REQUIRE(testutil::rel_err(grads[pi]->data[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("padding proposals to a fixed budget changes nothing") {
    FeatureExtractorConfig cfg;
    cfg.in_channels = 2;
    cfg.feature_channels = 3;
    std::mt19937_64 rng(6);
    const ModelState state = init_model(cfg, {1, 2}, 2, rng);
    const auto image = testutil::random_image(2, 4, 4, rng);
    RemodeledLabel rl;
    rl.height = 4;
    rl.width = 4;
    rl.labels.assign(16, kFutureLabel);
    rl.labels[9] = 2;

    auto base_set = generate_grid_proposals(4, 4, 2, 2);
    auto padded = base_set;
    pad_proposals(padded, 11);
    ParamGrads ga = ParamGrads::zeros_like(state);
    ParamGrads gb = ParamGrads::zeros_like(state);
    const double la =
        sample_loss_and_grads(state, image, 2, 4, 4, base_set, rl, 1, 1.0, true, true, true, &ga)
            .total;
    const double lb =
        sample_loss_and_grads(state, image, 2, 4, 4, padded, rl, 1, 1.0, true, true, true, &gb)
            .total;
    REQUIRE(la == doctest::Approx(lb).epsilon(1e-12));
    REQUIRE(ga.prop_w.data == gb.prop_w.data);
    REQUIRE(ga.conv_w[0].data == gb.conv_w[0].data);
}

TEST_CASE("identical runs are byte-identical on disk") {
    namespace fs = std::filesystem;
    const std::string base = fs::temp_directory_path() / "microseg_trainer_det";
    fs::remove_all(base);
    const RunConfig cfg = tiny_config();
    const RunResult a = run_scenario(cfg, base + "/a");
    const RunResult b = run_scenario(cfg, base + "/b");
    REQUIRE(a.steps.size() == 3);
    REQUIRE(slurp(base + "/a/metrics.csv") == slurp(base + "/b/metrics.csv"));
    REQUIRE(slurp(base + "/a/summary.csv") == slurp(base + "/b/summary.csv"));
    for (int t = 1; t <= 3; ++t)
        REQUIRE(slurp(base + "/a/step_" + std::to_string(t) + ".ckpt") ==
                slurp(base + "/b/step_" + std::to_string(t) + ".ckpt"));
    REQUIRE(fs::exists(base + "/a/checkpoints.txt"));
    REQUIRE(fs::exists(base + "/a/run_info.txt"));
    fs::remove_all(base);
}

TEST_CASE("checkpoint registries grow as an append-only prefix") {
    namespace fs = std::filesystem;
    const std::string base = fs::temp_directory_path() / "microseg_trainer_reg";
    fs::remove_all(base);
    RunConfig cfg = tiny_config();
    run_scenario(cfg, base);
    std::vector<ClassId> prev;
    for (int t = 1; t <= 3; ++t) {
        const ModelState s = load_checkpoint(base + "/step_" + std::to_string(t) + ".ckpt");
        REQUIRE(s.registry.size() == prev.size() + (t == 1 ? 2 : 1));
        for (std::size_t i = 0; i < prev.size(); ++i) REQUIRE(s.registry[i] == prev[i]);
        REQUIRE(s.step == t);
        REQUIRE(s.frozen_extractor == (t >= 2));
        prev = s.registry;
    }
    fs::remove_all(base);
}

TEST_CASE("evaluating a saved checkpoint reproduces the run's metrics") {
    namespace fs = std::filesystem;
    const std::string base = fs::temp_directory_path() / "microseg_trainer_eval";
    fs::remove_all(base);
    const RunConfig cfg = tiny_config();
    const RunResult run = run_scenario(cfg, base);
    const StepMetrics again = evaluate_checkpoint(cfg, base + "/step_3.ckpt");
    REQUIRE(again.all_miou == doctest::Approx(run.steps[2].all_miou).epsilon(1e-12));
    REQUIRE(again.base_miou == doctest::Approx(run.steps[2].base_miou).epsilon(1e-12));
    fs::remove_all(base);
}
