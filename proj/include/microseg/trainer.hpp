#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "microseg/losses.hpp"
#include "microseg/memory.hpp"
#include "microseg/model.hpp"
#include "microseg/proposals.hpp"

namespace microseg {

enum class Variant { baseline, no_remodel, no_micro, full, full_memory };
enum class ProposalGen { grid, oracle };

Variant parse_variant(const std::string& s);
std::string variant_name(Variant v);

struct RunConfig {
    // scenario
    int num_classes = 8;
    std::string notation = "4-1";
    std::vector<int> step_sizes;  // overrides notation when non-empty
    ProtocolMode mode = ProtocolMode::overlapped;
    std::optional<std::uint64_t> order_seed;
    // dataset: a directory with train/ and val/ splits, or synthetic when empty
    std::string dataset_dir;
    std::uint64_t dataset_seed = 0;
    int num_train = 200;
    int num_val = 40;
    int height = 32;
    int width = 32;
    // model
    FeatureExtractorConfig model;
    int unseen_k = 3;
    double tau = 0.7;
    double lambda = 1.0;
    // proposals
    ProposalGen proposal_mode = ProposalGen::oracle;
    int grid_tiles_y = 4;
    int grid_tiles_x = 4;
    int oracle_max_n = 64;
    int fixed_n = 0;  // 0 disables padding to a constant budget
    // optimizer
    double learning_rate = 0.2;
    double incremental_lr_scale = 0.5;  // multiplier applied from step 2 on
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int epochs_per_step = 40;
    int batch_size = 8;
    // memory replay; 0 disables
    int memory_capacity = 0;
    std::uint64_t seed = 0;
    Variant variant = Variant::full;

    ScenarioSpec scenario() const;
    // Which components the variant activates.
    int effective_k() const;
    bool uses_pseudo_labels() const;
    bool uses_contrastive() const;
    bool dense_branch_only() const;  // baseline: dense at every step
};

RunConfig read_config(const std::string& path);

struct ParamGrads {
    std::vector<Tensor> conv_w, conv_b;
    Tensor dense_w, dense_b, prop_w, prop_b;

    static ParamGrads zeros_like(const ModelState& s);
    void accumulate(const ParamGrads& o, double scale);
};

// Forward + analytic backward for one sample. Covers the proposal-branch BCE,
// the dense-branch BCE (when enabled), and the contrastive term over the
// sigmoid maps of the trailing K proposal-branch channels.
LossBreakdown sample_loss_and_grads(const ModelState& state, const std::vector<float>& image,
                                    int channels, int height, int width,
                                    const ProposalSet& proposals,
                                    const RemodeledLabel& remodeled, int t, double lambda,
                                    bool use_dense, bool use_proposal, bool use_contrastive,
                                    ParamGrads* grads);

struct SgdState {
    ParamGrads velocity;
    double learning_rate = 0.0, momentum = 0.0, weight_decay = 0.0;
};

// One SGD-with-momentum update; frozen extractors receive no change.
void sgd_update(ModelState& state, const ParamGrads& grads, SgdState& opt);

struct StepMetrics {
    int step = 0;
    double base_miou = 0.0, novel_miou = 0.0, all_miou = 0.0;
    std::map<ClassId, double> per_class;
};

struct RunResult {
    std::vector<StepMetrics> steps;
    std::string out_dir;
};

RunResult run_scenario(const RunConfig& config, const std::string& out_dir);
RunResult joint_train(const RunConfig& config, const std::string& out_dir);

// Re-evaluates a saved checkpoint against the config's validation split.
StepMetrics evaluate_checkpoint(const RunConfig& config, const std::string& checkpoint_path);

}  // namespace microseg
