#pragma once

#include <string>
#include <vector>

#include "microseg/scenario.hpp"

namespace microseg {

struct MemoryEntry {
    SegSample sample;      // mask keeps union-of-seen-classes annotations
    int step_acquired = 0;
};

// Capacity-bounded replay buffer with a coverage guarantee: after every
// update, each seen class appears in at least one stored mask whenever the
// candidate pool makes that possible.
struct MemoryBuffer {
    std::vector<MemoryEntry> entries;
    std::size_t capacity = 0;
    std::uint64_t rng_seed = 0;
};

// Candidates carry masks already restricted to the classes seen so far.
// Reserves one covering sample per uncovered seen class (uniformly among
// candidates), then fills the rest by uniform sampling without replacement
// over old entries plus new candidates.
MemoryBuffer update_memory(const MemoryBuffer& buffer, const std::vector<SegSample>& candidates,
                           const std::vector<ClassId>& seen_classes, std::size_t capacity,
                           int step);

// Rehearsal union: step samples plus buffer entries, deduplicated by
// sample_id. Buffer masks keep their historical annotations.
StepDataset merge_for_training(const StepDataset& step_data, const MemoryBuffer& buffer, int t);

void write_buffer_manifest(const MemoryBuffer& buffer, const std::string& path);

}  // namespace microseg
