#include "microseg/memory.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace microseg {

namespace {

bool mask_contains(const SegSample& s, ClassId cls) {
    for (std::uint8_t v : s.mask)
        if (v == cls) return true;
    return false;
}

}  // namespace

MemoryBuffer update_memory(const MemoryBuffer& buffer, const std::vector<SegSample>& candidates,
                           const std::vector<ClassId>& seen_classes, std::size_t capacity,
                           int step) {
    if (capacity < seen_classes.size())
        throw std::invalid_argument("memory capacity " + std::to_string(capacity) +
                                    " below seen class count " +
                                    std::to_string(seen_classes.size()));
    std::mt19937_64 rng(buffer.rng_seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(step)));

    // Pool = old entries plus new candidates, unique by sample_id.
    std::vector<MemoryEntry> pool;
    std::set<std::string> ids;
    for (const MemoryEntry& e : buffer.entries)
        if (ids.insert(e.sample.sample_id).second) pool.push_back(e);
    for (const SegSample& s : candidates)
        if (ids.insert(s.sample_id).second) pool.push_back({s, step});

    MemoryBuffer out;
    out.capacity = capacity;
    out.rng_seed = buffer.rng_seed;

    std::vector<bool> taken(pool.size(), false);
    for (ClassId cls : seen_classes) {
        bool covered = false;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (taken[i] && mask_contains(pool[i].sample, cls)) covered = true;
        if (covered) continue;
        std::vector<std::size_t> covering;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (!taken[i] && mask_contains(pool[i].sample, cls)) covering.push_back(i);
        if (covering.empty())
            throw std::runtime_error("no candidate sample contains seen class " +
                                     std::to_string(cls));
        std::uniform_int_distribution<std::size_t> pick(0, covering.size() - 1);
        taken[covering[pick(rng)]] = true;
    }

    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (!taken[i]) rest.push_back(i);
    std::shuffle(rest.begin(), rest.end(), rng);
    std::size_t reserved = 0;
    for (bool t : taken) reserved += t;
    for (std::size_t i = 0; i < rest.size() && reserved + i < capacity; ++i)
        taken[rest[i]] = true;

    for (std::size_t i = 0; i < pool.size(); ++i)
        if (taken[i]) out.entries.push_back(pool[i]);
    return out;
}

StepDataset merge_for_training(const StepDataset& step_data, const MemoryBuffer& buffer, int t) {
    if (t < 2) throw std::invalid_argument("memory rehearsal starts at step 2");
    StepDataset out = step_data;
    std::set<std::string> ids;
    for (const SegSample& s : out.samples) ids.insert(s.sample_id);
    for (const MemoryEntry& e : buffer.entries)
        if (ids.insert(e.sample.sample_id).second) out.samples.push_back(e.sample);
    return out;
}

void write_buffer_manifest(const MemoryBuffer& buffer, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "seed " << buffer.rng_seed << "\n";
    for (const MemoryEntry& e : buffer.entries)
        f << e.sample.sample_id << " " << e.step_acquired << "\n";
}

}  // namespace microseg
