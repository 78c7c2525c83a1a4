#include "microseg/remodel.hpp"

#include <cmath>
#include <stdexcept>

namespace microseg {

namespace {
inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
}  // namespace

PseudoLabelMap pseudo_labels(const ModelState& prev_state, const std::vector<float>& image,
                             int channels, int height, int width, const ProposalSet& proposals) {
    if (prev_state.registry.empty())
        throw std::invalid_argument("previous model has no seen classes to pseudo-label with");
    const Tensor logits =
        proposal_predict(prev_state, image, channels, height, width, proposals);
    const std::size_t seen = prev_state.registry.size();
    const std::size_t q = static_cast<std::size_t>(height) * width;
    PseudoLabelMap out;
    out.height = height;
    out.width = width;
    out.labels.resize(q);
    out.scores.resize(q);
    for (std::size_t p = 0; p < q; ++p) {
        std::size_t best = 0;
        double best_v = logits.data[p];
        for (std::size_t c = 1; c < seen; ++c) {
            const double v = logits.data[c * q + p];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        out.labels[p] = static_cast<std::uint8_t>(prev_state.registry[best]);
        out.scores[p] = sigmoid(best_v);
    }
    return out;
}

RemodeledLabel remodel_labels(const std::vector<std::uint8_t>& gt, int height, int width,
                              const PseudoLabelMap* pseudo,
                              const std::set<ClassId>& accept_classes, double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("tau must lie in (0,1)");
    const std::size_t q = static_cast<std::size_t>(height) * width;
    if (gt.size() != q) throw std::invalid_argument("ground-truth mask size mismatch");
    if (pseudo && (pseudo->height != height || pseudo->width != width))
        throw std::invalid_argument("pseudo-label map size mismatch");
    RemodeledLabel out;
    out.height = height;
    out.width = width;
    out.labels.resize(q);
    for (std::size_t p = 0; p < q; ++p) {
        const std::uint8_t g = gt[p];
        if (g != kBackground) {
            if (!accept_classes.count(g))
                throw std::invalid_argument("ground truth carries class " + std::to_string(g) +
                                            " outside the step's class set");
            out.labels[p] = g;
        } else if (pseudo && pseudo->scores[p] > tau) {
            // Strict inequality: a score exactly at tau falls through to FUTURE.
            out.labels[p] = pseudo->labels[p];
        } else {
            out.labels[p] = kFutureLabel;
        }
    }
    return out;
}

}  // namespace microseg
