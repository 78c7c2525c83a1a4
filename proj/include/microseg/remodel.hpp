#pragma once

#include <optional>
#include <set>
#include <vector>

#include "microseg/model.hpp"

namespace microseg {

// Sentinel for the future-classes label in remodeled masks (serialized as-is).
constexpr std::uint8_t kFutureLabel = 255;

struct PseudoLabelMap {
    std::vector<std::uint8_t> labels;  // class ids in C_{1:t-1}
    std::vector<double> scores;        // sigmoid of the max seen logit, in (0,1)
    int height = 0;
    int width = 0;
};

struct RemodeledLabel {
    std::vector<std::uint8_t> labels;  // class ids plus kFutureLabel
    int height = 0;
    int width = 0;
};

// Argmax/max over the previous model's proposal branch restricted to seen
// classes; the K unseen slots never participate.
PseudoLabelMap pseudo_labels(const ModelState& prev_state, const std::vector<float>& image,
                             int channels, int height, int width, const ProposalSet& proposals);

// Supervision-label remodeling. accept_classes is C_t for ordinary samples
// and C_{1:t} for replayed memory samples, whose stored annotations pass
// rule (a) directly.
RemodeledLabel remodel_labels(const std::vector<std::uint8_t>& gt, int height, int width,
                              const PseudoLabelMap* pseudo,
                              const std::set<ClassId>& accept_classes, double tau);

}  // namespace microseg
