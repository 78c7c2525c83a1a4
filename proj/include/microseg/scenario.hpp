#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace microseg {

// Class id 0 is the on-disk unseen/background label; foreground classes are
// 1..num_classes.
using ClassId = int;
constexpr ClassId kBackground = 0;

enum class ProtocolMode { overlapped, disjoint };

struct ScenarioSpec {
    std::vector<ClassId> class_order;   // permutation of 1..num_classes
    std::vector<int> step_sizes;        // sums to num_classes
    ProtocolMode mode = ProtocolMode::overlapped;

    int num_steps() const { return static_cast<int>(step_sizes.size()); }
    int num_classes() const { return static_cast<int>(class_order.size()); }

    // Classes introduced at step t (1-based).
    std::vector<ClassId> step_classes(int t) const;
    // Classes seen up to and including step t.
    std::vector<ClassId> seen_classes(int t) const;
};

struct SegSample {
    std::vector<float> image;       // channels x H x W, row-major
    std::vector<std::uint8_t> mask; // H x W class ids
    int channels = 0;
    int height = 0;
    int width = 0;
    std::string sample_id;
};

struct StepDataset {
    std::vector<SegSample> samples;       // masks remapped for the step
    std::vector<ClassId> current_classes; // C_t
    std::vector<ClassId> seen_classes;    // C_{1:t}
};

// Parses "B-I" notation into uniform step sizes. Explicit irregular step
// sizes go through the ScenarioSpec constructor path in from_scenario_file.
ScenarioSpec build_scenario(int num_classes, const std::string& notation, ProtocolMode mode,
                            const std::vector<ClassId>& class_order = {});
ScenarioSpec build_scenario_explicit(int num_classes, const std::vector<int>& step_sizes,
                                     ProtocolMode mode,
                                     const std::vector<ClassId>& class_order = {});

// Seeded shuffle of 1..num_classes for the class-ordering study.
std::vector<ClassId> shuffled_class_order(int num_classes, std::uint64_t seed);

struct SyntheticConfig {
    std::uint64_t seed = 0;
    int num_classes = 8;
    int num_train = 200;
    int num_val = 40;
    int height = 32;
    int width = 32;
};

// Deterministic shape-on-noise dataset. Every class appears in at least 5
// train and 2 val images; rejects configs that cannot satisfy that.
void generate_synthetic_dataset(const SyntheticConfig& cfg, std::vector<SegSample>& train,
                                std::vector<SegSample>& val);

StepDataset filter_step_dataset(const std::vector<SegSample>& dataset, const ScenarioSpec& spec,
                                int t);

// On-disk sample format: 16-byte header (magic "CISS", u32 channels, u32 H,
// u32 W), then f32 LE payload for .img or u8 ids for .msk (channels = 1).
void write_sample(const SegSample& s, const std::string& dir, int index);
SegSample read_sample(const std::string& dir, int index);
void write_dataset(const std::vector<SegSample>& samples, const std::string& dir);
std::vector<SegSample> read_dataset(const std::string& dir, const std::string& id_prefix = "");

ProtocolMode parse_mode(const std::string& s);
std::string mode_name(ProtocolMode m);

// Plain-text scenario file: key=value lines for num_classes, notation or
// step_sizes, mode, optional order_seed.
ScenarioSpec read_scenario_file(const std::string& path);

}  // namespace microseg
