#pragma once

#include <random>
#include <string>
#include <vector>

#include "microseg/proposals.hpp"
#include "microseg/scenario.hpp"
#include "microseg/tensor.hpp"

namespace microseg {

struct FeatureExtractorConfig {
    int in_channels = 3;
    int feature_channels = 16;
    int depth = 1;
    int kernel_size = 3;
};

// Feature extractor (stride-1 conv blocks with tanh) plus two classifier
// heads over the shared features. Head channel order is the seen-class
// registry followed by K trailing unseen sub-class slots; seen channels are
// append-only across steps.
struct ModelState {
    FeatureExtractorConfig cfg;
    std::vector<Tensor> conv_weights;  // per block: [C_out, C_in, k, k]
    std::vector<Tensor> conv_biases;   // per block: [C_out]
    Tensor dense_weight;               // [|C_out|, C]
    Tensor dense_bias;                 // [|C_out|]
    Tensor prop_weight;                // [|C_out|, C]
    Tensor prop_bias;                  // [|C_out|]
    std::vector<ClassId> registry;     // seen classes in learning order
    int unseen_slots = 1;              // K
    bool frozen_extractor = false;
    int step = 1;

    std::size_t out_channels() const { return registry.size() + unseen_slots; }
};

struct PrototypeMatrix {
    Tensor values;                  // N x C
    std::vector<std::uint8_t> empty;  // per-row empty-proposal flag
};

ModelState init_model(const FeatureExtractorConfig& cfg, const std::vector<ClassId>& classes,
                      int unseen_slots, std::mt19937_64& rng);

// Forward activations kept for backprop.
struct FeatureTrace {
    std::vector<Tensor> activations;  // per block output, post-tanh
};

Tensor extract_features(const ModelState& state, const std::vector<float>& image,
                        int channels, int height, int width, FeatureTrace* trace = nullptr);

PrototypeMatrix masked_average_pool(const Tensor& features, const ProposalSet& proposals);

Tensor classify_prototypes(const ModelState& state, const PrototypeMatrix& prototypes);

Tensor reorganize(const Tensor& proposal_logits, const ProposalSet& proposals);

Tensor dense_predict(const ModelState& state, const Tensor& features);

Tensor proposal_predict(const ModelState& state, const std::vector<float>& image, int channels,
                        int height, int width, const ProposalSet& proposals);

// Inserts new seen-class channels immediately before the trailing K unseen
// slots; existing channel weights are untouched. New rows draw from
// U(-init_scale, init_scale) via rng.
ModelState expand_head(const ModelState& state, const std::vector<ClassId>& new_classes,
                       double init_scale, std::mt19937_64& rng);

ModelState freeze_extractor(ModelState state);

// Per-pixel argmax over the proposal-branch logits; the single unseen score
// is the sum of the K trailing slots. Ties break toward the lowest registry
// index, then toward seen classes over the unseen class. Unseen wins map to
// label 0. include_unseen=false restricts the argmax to seen classes.
std::vector<std::uint8_t> inference(const ModelState& state, const std::vector<float>& image,
                                    int channels, int height, int width,
                                    const ProposalSet& proposals, bool include_unseen);

// Same decision rule over an already-computed logit map (either branch).
std::vector<std::uint8_t> decode_logits(const ModelState& state, const Tensor& pixel_logits,
                                        bool include_unseen);

// Bit-exact checkpoint round-trip.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

// FNV-1a over the serialized checkpoint bytes, for run manifests.
std::uint64_t checkpoint_hash(const std::string& path);

}  // namespace microseg
