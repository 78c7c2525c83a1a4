#pragma once

#include <optional>
#include <vector>

#include "microseg/remodel.hpp"
#include "microseg/tensor.hpp"

namespace microseg {

struct LossBreakdown {
    double bce_proposal = 0.0;
    std::optional<double> bce_dense;  // present iff t == 1
    double contrastive = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

struct UnseenSplit {
    Tensor seen_logits;  // |C_{1:t}| x H x W
    Tensor unseen_map;   // H x W, sum of the trailing K channels
};

UnseenSplit aggregate_unseen(const Tensor& pixel_logits, int k, std::size_t seen_channels);

// Eq-style two-term BCE over pixel logits: the per-seen-class term averaged
// over |C_{1:t}|*Q and the aggregated-unseen term averaged over Q. Computed
// in logit space, finite for any finite input. grad_logits, when non-null,
// receives d(loss)/d(pixel logit) with the same shape as pixel_logits.
double bce_loss(const Tensor& pixel_logits, const RemodeledLabel& remodeled,
                const std::vector<ClassId>& seen_registry, int k,
                Tensor* grad_logits = nullptr);

double branch_loss(int t, double bce_proposal, std::optional<double> bce_dense);

// InfoNCE-style separation of the K maps: each map is flattened and unit
// normalized, zero vectors are left at zero. K = 1 gives exactly 0.
// grad_maps, when non-null, receives d(loss)/d(map entry).
double contrastive_loss(const Tensor& unseen_channel_maps, Tensor* grad_maps = nullptr);

LossBreakdown total_loss(int t, double bce_proposal, std::optional<double> bce_dense,
                         double contrastive, double lambda);

}  // namespace microseg
