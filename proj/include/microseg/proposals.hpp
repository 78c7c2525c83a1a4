#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "microseg/scenario.hpp"

namespace microseg {

// A disjoint binary partition of the image: each pixel is covered by exactly
// one of the N masks. Trailing padding masks (empty) are allowed.
struct ProposalSet {
    std::vector<std::uint8_t> masks;  // N x H x W, values in {0,1}
    std::size_t n = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    const std::uint8_t* mask(std::size_t i) const { return masks.data() + i * height * width; }
    std::uint8_t* mask(std::size_t i) { return masks.data() + i * height * width; }
    bool empty_mask(std::size_t i) const;
};

struct PartitionVerdict {
    bool ok = true;
    std::size_t y = 0, x = 0;   // first offending pixel when !ok
    std::size_t coverage = 0;   // how many masks cover it
};

ProposalSet generate_grid_proposals(int height, int width, int tiles_y, int tiles_x);

// Connected components (4-connectivity) of the ground-truth mask with the
// class labels discarded; components ordered by their top-most, left-most
// pixel. Rejects masks with more than max_n components.
ProposalSet generate_oracle_proposals(const std::vector<std::uint8_t>& mask, int height,
                                      int width, int max_n);

// Appends empty masks up to fixed_n, mirroring a constant proposal budget.
void pad_proposals(ProposalSet& set, std::size_t fixed_n);

PartitionVerdict validate_partition(const ProposalSet& set);

// Cache format: magic "PROP", u32 N, u32 H, u32 W, then N*H*W bits packed
// row-major and padded to a byte boundary.
void write_proposal_cache(const ProposalSet& set, const std::string& path);
ProposalSet read_proposal_cache(const std::string& path);

}  // namespace microseg
